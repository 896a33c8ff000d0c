#include "distdiff/mlp.hpp"

#include <cmath>
#include <cstdint>

#include "distdiff/errors.hpp"
#include "distdiff/kernels.hpp"

namespace distdiff {

Mlp Mlp::create(std::size_t input, const std::vector<std::size_t>& hidden, std::size_t output,
                Rng& rng) {
    Mlp m;
    m.input_dim = input;
    m.output_dim = output;
    std::vector<std::size_t> dims;
    dims.push_back(input);
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(output);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        std::size_t in = dims[l], out = dims[l + 1];
        Layer layer;
        layer.w = Tensor::zeros({in, out});
        double bound = std::sqrt(6.0 / static_cast<double>(in + out));
        for (double& v : layer.w.data) v = rng.uniform(-bound, bound);
        layer.b = Tensor::zeros({out});
        layer.act = (l + 2 == dims.size()) ? Activation::identity : Activation::tanh;
        m.layers.push_back(std::move(layer));
    }
    return m;
}

namespace {

// Promote a vector input to a single-row matrix; remember to squeeze back.
Tensor as_matrix(const Tensor& x, std::size_t expected_cols, bool& was_vector) {
    if (x.shape.size() == 1) {
        was_vector = true;
        if (x.shape[0] != expected_cols)
            throw ContractError("mlp: input dim " + std::to_string(x.shape[0]) + " != expected " +
                                std::to_string(expected_cols));
        return Tensor({1, x.shape[0]}, x.data);
    }
    was_vector = false;
    if (x.shape.size() != 2 || x.cols() != expected_cols)
        throw ContractError("mlp: input shape " + shape_str(x.shape) + " incompatible with dim " +
                            std::to_string(expected_cols));
    return x;
}

}  // namespace

Tensor Mlp::forward_upto(const Tensor& x, std::size_t depth) const {
    if (depth > layers.size()) throw ContractError("mlp: depth out of range");
    bool was_vector = false;
    Tensor h = as_matrix(x, input_dim, was_vector);
    for (std::size_t l = 0; l < depth; ++l) {
        const Layer& layer = layers[l];
        std::size_t n = h.rows(), in = layer.w.rows(), out = layer.w.cols();
        if (h.cols() != in) throw ContractError("mlp: layer dimension chain broken");
        Tensor y = Tensor::zeros({n, out});
        kernels::matmul(h.data.data(), layer.w.data.data(), y.data.data(), n, in, out);
        for (std::size_t i = 0; i < n; ++i)
            kernels::add(y.data.data() + i * out, layer.b.data.data(), y.data.data() + i * out, out);
        if (layer.act == Activation::tanh)
            kernels::tanh_vec(y.data.data(), y.data.data(), y.numel());
        h = std::move(y);
    }
    h.ensure_finite("mlp forward");
    if (was_vector) return Tensor({h.cols()}, std::move(h.data));
    return h;
}

Var Mlp::forward_upto(Tape& t, Var x, std::size_t depth) const {
    if (depth > layers.size()) throw ContractError("mlp: depth out of range");
    Var h = x;
    for (std::size_t l = 0; l < depth; ++l) {
        const Layer& layer = layers[l];
        Var w = t.constant(layer.w);
        Var b = t.constant(layer.b);
        h = t.add_rowvec(t.matmul(h, w), b);
        if (layer.act == Activation::tanh) h = t.tanh(h);
    }
    return h;
}

Var Mlp::forward_train(Tape& t, Var x, std::vector<Var>& param_vars) const {
    Var h = x;
    for (const Layer& layer : layers) {
        Var w = t.leaf(layer.w, true);
        Var b = t.leaf(layer.b, true);
        param_vars.push_back(w);
        param_vars.push_back(b);
        h = t.add_rowvec(t.matmul(h, w), b);
        if (layer.act == Activation::tanh) h = t.tanh(h);
    }
    return h;
}

std::vector<Tensor*> Mlp::parameters() {
    std::vector<Tensor*> out;
    for (Layer& l : layers) {
        out.push_back(&l.w);
        out.push_back(&l.b);
    }
    return out;
}

nlohmann::json Mlp::to_json() const {
    nlohmann::json j;
    j["input_dim"] = input_dim;
    j["output_dim"] = output_dim;
    j["layers"] = nlohmann::json::array();
    for (const Layer& l : layers) {
        nlohmann::json jl;
        auto rows = nlohmann::json::array();
        std::size_t in = l.w.rows(), out = l.w.cols();
        for (std::size_t r = 0; r < in; ++r) {
            auto row = nlohmann::json::array();
            for (std::size_t c = 0; c < out; ++c) row.push_back(l.w.at(r, c));
            rows.push_back(std::move(row));
        }
        jl["w"] = std::move(rows);
        jl["b"] = l.b.data;
        jl["act"] = l.act == Activation::tanh ? "tanh" : "identity";
        j["layers"].push_back(std::move(jl));
    }
    return j;
}

Mlp Mlp::from_json(const nlohmann::json& j) {
    Mlp m;
    try {
        m.input_dim = j.at("input_dim").get<std::size_t>();
        m.output_dim = j.at("output_dim").get<std::size_t>();
        for (const auto& jl : j.at("layers")) {
            Layer l;
            const auto& rows = jl.at("w");
            std::size_t in = rows.size();
            std::size_t out = in ? rows[0].size() : 0;
            l.w = Tensor::zeros({in, out});
            for (std::size_t r = 0; r < in; ++r) {
                if (rows[r].size() != out) throw DataError("mlp json: ragged weight matrix");
                for (std::size_t c = 0; c < out; ++c) l.w.at(r, c) = rows[r][c].get<double>();
            }
            l.b = Tensor::vector(jl.at("b").get<std::vector<double>>());
            if (l.b.numel() != out) throw DataError("mlp json: bias length mismatch");
            std::string act = jl.at("act").get<std::string>();
            if (act == "tanh")
                l.act = Activation::tanh;
            else if (act == "identity")
                l.act = Activation::identity;
            else
                throw DataError("mlp json: unknown activation '" + act + "'");
            m.layers.push_back(std::move(l));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("mlp json: ") + e.what());
    }
    // Validate the dimension chain.
    std::size_t prev = m.input_dim;
    for (const Layer& l : m.layers) {
        if (l.w.rows() != prev) throw DataError("mlp json: layer dimensions do not chain");
        prev = l.w.cols();
    }
    if (prev != m.output_dim) throw DataError("mlp json: output_dim does not match last layer");
    return m;
}

std::string fingerprint_bytes(const std::string& bytes) {
    // FNV-1a, 64-bit.
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

std::string Mlp::fingerprint() const { return fingerprint_bytes(to_json().dump()); }

SgdOptimizer::SgdOptimizer(double lr_, double momentum_) : lr(lr_), momentum(momentum_) {
    if (lr <= 0.0) throw ConfigError("sgd: lr must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("sgd: momentum must be in [0,1)");
}

void SgdOptimizer::step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads) {
    if (params.size() != grads.size()) throw ContractError("sgd: params/grads count mismatch");
    if (velocity.empty()) {
        for (const Tensor* p : params) velocity.push_back(Tensor::zeros(p->shape));
    }
    if (velocity.size() != params.size()) throw ContractError("sgd: optimizer bound to other params");
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        const Tensor& g = grads[i];
        Tensor& v = velocity[i];
        if (!p.same_shape(g) || !p.same_shape(v))
            throw ContractError("sgd: shape mismatch between params and grads");
        // v = momentum*v + g; p -= lr*v
        kernels::axpby(momentum, v.data.data(), 1.0, g.data.data(), v.data.data(), v.numel());
        kernels::axpby(1.0, p.data.data(), -lr, v.data.data(), p.data.data(), p.numel());
    }
}

}  // namespace distdiff
