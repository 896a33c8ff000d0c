#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "distdiff/tensor.hpp"

namespace distdiff {

struct Var {
    std::size_t idx = static_cast<std::size_t>(-1);
    bool valid() const { return idx != static_cast<std::size_t>(-1); }
};

// Reverse-mode tape over Tensor primitives. Nodes are appended in topological
// order by construction; one backward pass walks them once in reverse. A tape
// is built per forward pass and thrown away — no graph reuse.
class Tape {
public:
    Var leaf(Tensor value, bool trainable = false);
    Var constant(Tensor value) { return leaf(std::move(value), false); }

    // Elementwise, same shape.
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var square(Var a);
    Var sqrt(Var a);  // derivative at 0 defined as 0
    Var tanh(Var a);
    Var scale(Var a, double c);
    // Clamp to constant per-element bounds. Derivative is 1 strictly inside
    // the interval, 0 outside and at the boundary.
    Var clamp(Var a, Tensor lo, Tensor hi);

    // (n,k) x (k,m) -> (n,m)
    Var matmul(Var a, Var b);
    // (n,m) + (m) broadcast over rows
    Var add_rowvec(Var a, Var bias);
    // Concatenate rank-2 inputs along columns.
    Var concat_cols(const std::vector<Var>& parts);

    Var sum(Var a);  // -> scalar
    // Mean over rows of (logsumexp(row) - logit[label]); labels in [0, cols).
    Var softmax_cross_entropy(Var logits, std::vector<int> labels);

    const Tensor& value(Var v) const { return node(v.idx).value; }
    std::size_t size() const { return nodes_.size(); }

    // Populates gradients for every node below the (scalar) loss; leaves not
    // reached keep zero gradients.
    void backward(Var loss);
    const Tensor& grad(Var v) const;

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool trainable = false;
        std::function<void(Tape&, std::size_t)> backprop;  // null for leaves
    };

    Node& node(std::size_t i) { return nodes_[i]; }
    const Node& node(std::size_t i) const;
    Var push(Tensor value, std::function<void(Tape&, std::size_t)> backprop);
    void accumulate(std::size_t target, const std::vector<double>& g);

    std::vector<Node> nodes_;
    bool ran_backward_ = false;
};

}  // namespace distdiff
