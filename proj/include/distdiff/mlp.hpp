#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "distdiff/rng.hpp"
#include "distdiff/tape.hpp"
#include "distdiff/tensor.hpp"

namespace distdiff {

enum class Activation { tanh, identity };

struct Layer {
    Tensor w;  // (in, out), row-major
    Tensor b;  // (out)
    Activation act = Activation::tanh;
};

struct Mlp {
    std::vector<Layer> layers;
    std::size_t input_dim = 0;
    std::size_t output_dim = 0;

    // Hidden layers use tanh, the output layer is linear.
    static Mlp create(std::size_t input, const std::vector<std::size_t>& hidden, std::size_t output,
                      Rng& rng);

    // Fast inference path; accepts (n, input_dim) or (input_dim,).
    Tensor forward(const Tensor& x) const { return forward_upto(x, layers.size()); }
    // Activations after the first `depth` layers.
    Tensor forward_upto(const Tensor& x, std::size_t depth) const;

    // Taped forward with weights as constants (gradients flow to x only).
    Var forward(Tape& t, Var x) const { return forward_upto(t, x, layers.size()); }
    Var forward_upto(Tape& t, Var x, std::size_t depth) const;

    // Taped forward with weights as trainable leaves; leaf handles are
    // appended to `param_vars` in parameters() order.
    Var forward_train(Tape& t, Var x, std::vector<Var>& param_vars) const;

    std::vector<Tensor*> parameters();

    nlohmann::json to_json() const;
    static Mlp from_json(const nlohmann::json& j);
    std::string fingerprint() const;
};

// Momentum SGD; velocity buffers persist across step() calls.
struct SgdOptimizer {
    double lr;
    double momentum;
    std::vector<Tensor> velocity;

    SgdOptimizer(double lr_, double momentum_);
    void step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads);
};

std::string fingerprint_bytes(const std::string& bytes);

}  // namespace distdiff
