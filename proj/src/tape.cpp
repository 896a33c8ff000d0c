#include "distdiff/tape.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "distdiff/kernels.hpp"

namespace distdiff {

const Tape::Node& Tape::node(std::size_t i) const {
    if (i >= nodes_.size()) throw ContractError("tape: variable from another tape or out of range");
    return nodes_[i];
}

Var Tape::push(Tensor value, std::function<void(Tape&, std::size_t)> backprop) {
    value.ensure_finite("tape operation result");
    Node n;
    n.value = std::move(value);
    n.backprop = std::move(backprop);
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

Var Tape::leaf(Tensor value, bool trainable) {
    value.ensure_finite("tape leaf");
    Node n;
    n.value = std::move(value);
    n.trainable = trainable;
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

void Tape::accumulate(std::size_t target, const std::vector<double>& g) {
    Tensor& dst = nodes_[target].grad;
    kernels::add(dst.data.data(), g.data(), dst.data.data(), g.size());
}

static void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) {
        throw ContractError(std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                            shape_str(b.shape));
    }
}

Var Tape::add(Var a, Var b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    check_same_shape(va, vb, "add");
    Tensor out = Tensor::zeros(va.shape);
    kernels::add(va.data.data(), vb.data.data(), out.data.data(), out.numel());
    return push(std::move(out), [a, b](Tape& t, std::size_t self) {
        t.accumulate(a.idx, t.nodes_[self].grad.data);
        t.accumulate(b.idx, t.nodes_[self].grad.data);
    });
}

Var Tape::sub(Var a, Var b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    check_same_shape(va, vb, "sub");
    Tensor out = Tensor::zeros(va.shape);
    kernels::sub(va.data.data(), vb.data.data(), out.data.data(), out.numel());
    return push(std::move(out), [a, b](Tape& t, std::size_t self) {
        const Tensor& g = t.nodes_[self].grad;
        t.accumulate(a.idx, g.data);
        std::vector<double> neg(g.numel());
        kernels::scale(-1.0, g.data.data(), neg.data(), neg.size());
        t.accumulate(b.idx, neg);
    });
}

Var Tape::mul(Var a, Var b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    check_same_shape(va, vb, "mul");
    Tensor out = Tensor::zeros(va.shape);
    kernels::mul(va.data.data(), vb.data.data(), out.data.data(), out.numel());
    return push(std::move(out), [a, b](Tape& t, std::size_t self) {
        const Tensor& g = t.nodes_[self].grad;
        std::vector<double> tmp(g.numel());
        kernels::mul(g.data.data(), t.value(b).data.data(), tmp.data(), tmp.size());
        t.accumulate(a.idx, tmp);
        kernels::mul(g.data.data(), t.value(a).data.data(), tmp.data(), tmp.size());
        t.accumulate(b.idx, tmp);
    });
}

Var Tape::square(Var a) {
    const Tensor& va = value(a);
    Tensor out = Tensor::zeros(va.shape);
    kernels::mul(va.data.data(), va.data.data(), out.data.data(), out.numel());
    return push(std::move(out), [a](Tape& t, std::size_t self) {
        const Tensor& g = t.nodes_[self].grad;
        std::vector<double> tmp(g.numel());
        kernels::mul(g.data.data(), t.value(a).data.data(), tmp.data(), tmp.size());
        kernels::scale(2.0, tmp.data(), tmp.data(), tmp.size());
        t.accumulate(a.idx, tmp);
    });
}

Var Tape::sqrt(Var a) {
    const Tensor& va = value(a);
    Tensor out = Tensor::zeros(va.shape);
    for (std::size_t i = 0; i < va.numel(); ++i) {
        if (va.data[i] < 0.0) throw NumericalError("sqrt of negative value on tape");
        out.data[i] = std::sqrt(va.data[i]);
    }
    return push(std::move(out), [a](Tape& t, std::size_t self) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& y = t.nodes_[self].value;
        std::vector<double> tmp(g.numel());
        for (std::size_t i = 0; i < tmp.size(); ++i)
            tmp[i] = y.data[i] > 0.0 ? g.data[i] * 0.5 / y.data[i] : 0.0;
        t.accumulate(a.idx, tmp);
    });
}

Var Tape::tanh(Var a) {
    const Tensor& va = value(a);
    Tensor out = Tensor::zeros(va.shape);
    kernels::tanh_vec(va.data.data(), out.data.data(), out.numel());
    return push(std::move(out), [a](Tape& t, std::size_t self) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& y = t.nodes_[self].value;
        std::vector<double> tmp(g.numel());
        for (std::size_t i = 0; i < tmp.size(); ++i)
            tmp[i] = g.data[i] * (1.0 - y.data[i] * y.data[i]);
        t.accumulate(a.idx, tmp);
    });
}

Var Tape::scale(Var a, double c) {
    const Tensor& va = value(a);
    Tensor out = Tensor::zeros(va.shape);
    kernels::scale(c, va.data.data(), out.data.data(), out.numel());
    return push(std::move(out), [a, c](Tape& t, std::size_t self) {
        const Tensor& g = t.nodes_[self].grad;
        std::vector<double> tmp(g.numel());
        kernels::scale(c, g.data.data(), tmp.data(), tmp.size());
        t.accumulate(a.idx, tmp);
    });
}

Var Tape::clamp(Var a, Tensor lo, Tensor hi) {
    const Tensor& va = value(a);
    check_same_shape(va, lo, "clamp lo");
    check_same_shape(va, hi, "clamp hi");
    Tensor out = Tensor::zeros(va.shape);
    for (std::size_t i = 0; i < va.numel(); ++i)
        out.data[i] = std::min(std::max(va.data[i], lo.data[i]), hi.data[i]);
    auto lo_p = std::make_shared<Tensor>(std::move(lo));
    auto hi_p = std::make_shared<Tensor>(std::move(hi));
    return push(std::move(out), [a, lo_p, hi_p](Tape& t, std::size_t self) {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& x = t.value(a);
        std::vector<double> tmp(g.numel());
        for (std::size_t i = 0; i < tmp.size(); ++i) {
            bool inside = x.data[i] > lo_p->data[i] && x.data[i] < hi_p->data[i];
            tmp[i] = inside ? g.data[i] : 0.0;
        }
        t.accumulate(a.idx, tmp);
    });
}

Var Tape::matmul(Var a, Var b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    if (va.shape.size() != 2 || vb.shape.size() != 2 || va.cols() != vb.rows()) {
        throw ContractError("matmul: incompatible shapes " + shape_str(va.shape) + " x " +
                            shape_str(vb.shape));
    }
    std::size_t n = va.rows(), k = va.cols(), m = vb.cols();
    Tensor out = Tensor::zeros({n, m});
    kernels::matmul(va.data.data(), vb.data.data(), out.data.data(), n, k, m);
    return push(std::move(out), [a, b, n, k, m](Tape& t, std::size_t self) {
        const Tensor& g = t.nodes_[self].grad;
        // dA = G * B^T, dB = A^T * G
        std::vector<double> da(n * k);
        kernels::matmul_a_bt(g.data.data(), t.value(b).data.data(), da.data(), n, m, k);
        t.accumulate(a.idx, da);
        std::vector<double> db(k * m);
        kernels::matmul_at_b(t.value(a).data.data(), g.data.data(), db.data(), n, k, m);
        t.accumulate(b.idx, db);
    });
}

Var Tape::add_rowvec(Var a, Var bias) {
    const Tensor& va = value(a);
    const Tensor& vb = value(bias);
    if (va.shape.size() != 2 || vb.shape.size() != 1 || va.cols() != vb.shape[0]) {
        throw ContractError("add_rowvec: incompatible shapes " + shape_str(va.shape) + " + " +
                            shape_str(vb.shape));
    }
    std::size_t n = va.rows(), m = va.cols();
    Tensor out = Tensor::zeros({n, m});
    for (std::size_t i = 0; i < n; ++i)
        kernels::add(va.data.data() + i * m, vb.data.data(), out.data.data() + i * m, m);
    return push(std::move(out), [a, bias, n, m](Tape& t, std::size_t self) {
        const Tensor& g = t.nodes_[self].grad;
        t.accumulate(a.idx, g.data);
        std::vector<double> db(m, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            kernels::add(db.data(), g.data.data() + i * m, db.data(), m);
        t.accumulate(bias.idx, db);
    });
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw ContractError("concat_cols: no inputs");
    std::size_t n = value(parts[0]).rows();
    std::size_t total = 0;
    for (Var p : parts) {
        const Tensor& v = value(p);
        if (v.shape.size() != 2 || v.rows() != n)
            throw ContractError("concat_cols: row-count mismatch");
        total += v.cols();
    }
    Tensor out = Tensor::zeros({n, total});
    std::size_t off = 0;
    for (Var p : parts) {
        const Tensor& v = value(p);
        std::size_t c = v.cols();
        for (std::size_t i = 0; i < n; ++i)
            std::copy_n(v.data.data() + i * c, c, out.data.data() + i * total + off);
        off += c;
    }
    auto parts_copy = parts;
    return push(std::move(out), [parts_copy, n, total](Tape& t, std::size_t self) {
        const Tensor& g = t.nodes_[self].grad;
        std::size_t off = 0;
        for (Var p : parts_copy) {
            std::size_t c = t.value(p).cols();
            std::vector<double> gp(n * c);
            for (std::size_t i = 0; i < n; ++i)
                std::copy_n(g.data.data() + i * total + off, c, gp.data() + i * c);
            t.accumulate(p.idx, gp);
            off += c;
        }
    });
}

Var Tape::sum(Var a) {
    const Tensor& va = value(a);
    double s = kernels::sum(va.data.data(), va.numel());
    return push(Tensor::scalar(s), [a](Tape& t, std::size_t self) {
        double g = t.nodes_[self].grad.data[0];
        std::vector<double> tmp(t.value(a).numel(), g);
        t.accumulate(a.idx, tmp);
    });
}

Var Tape::softmax_cross_entropy(Var logits, std::vector<int> labels) {
    const Tensor& vl = value(logits);
    if (vl.shape.size() != 2) throw ContractError("softmax_cross_entropy: logits must be rank-2");
    std::size_t n = vl.rows(), c = vl.cols();
    if (labels.size() != n) throw ContractError("softmax_cross_entropy: one label per row required");
    for (int y : labels)
        if (y < 0 || static_cast<std::size_t>(y) >= c)
            throw ContractError("softmax_cross_entropy: label out of range");
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = vl.data.data() + i * c;
        double m = *std::max_element(row, row + c);
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - m);
        loss += m + std::log(z) - row[labels[i]];
    }
    loss /= static_cast<double>(n);
    auto lab = std::make_shared<std::vector<int>>(std::move(labels));
    return push(Tensor::scalar(loss), [logits, lab, n, c](Tape& t, std::size_t self) {
        double g = t.nodes_[self].grad.data[0] / static_cast<double>(n);
        const Tensor& vl = t.value(logits);
        std::vector<double> dl(n * c);
        for (std::size_t i = 0; i < n; ++i) {
            const double* row = vl.data.data() + i * c;
            double m = *std::max_element(row, row + c);
            double z = 0.0;
            for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - m);
            for (std::size_t j = 0; j < c; ++j) {
                double p = std::exp(row[j] - m) / z;
                dl[i * c + j] = g * (p - (static_cast<int>(j) == (*lab)[i] ? 1.0 : 0.0));
            }
        }
        t.accumulate(logits.idx, dl);
    });
}

void Tape::backward(Var loss) {
    const Tensor& lv = value(loss);
    if (!lv.is_scalar()) {
        throw ContractError("backward: loss must be scalar, got shape " + shape_str(lv.shape));
    }
    for (std::size_t i = 0; i <= loss.idx; ++i) nodes_[i].grad = Tensor::zeros(nodes_[i].value.shape);
    nodes_[loss.idx].grad.data[0] = 1.0;
    for (std::size_t i = loss.idx + 1; i-- > 0;) {
        if (nodes_[i].backprop) nodes_[i].backprop(*this, i);
    }
    ran_backward_ = true;
}

const Tensor& Tape::grad(Var v) const {
    if (!ran_backward_) throw ContractError("grad requested before backward");
    const Node& n = node(v.idx);
    if (n.grad.numel() == 0) {
        // Node above the loss or never touched: treat as zero.
        static thread_local Tensor zero;
        zero = Tensor::zeros(n.value.shape);
        return zero;
    }
    return n.grad;
}

}  // namespace distdiff
