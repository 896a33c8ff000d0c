#include "distdiff/tensor.hpp"

#include <cmath>
#include <sstream>
#include <utility>

namespace distdiff {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t s : shape) n *= s;
    return n;
}

std::string shape_str(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << ")";
    return os.str();
}

Tensor::Tensor(std::vector<std::size_t> s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
    if (shape_numel(shape) != data.size()) {
        throw ContractError("tensor shape " + shape_str(shape) + " does not match data length " +
                            std::to_string(data.size()));
    }
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
    std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
    std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

Tensor Tensor::vector(std::vector<double> values) {
    std::size_t n = values.size();
    return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
    return Tensor({rows, cols}, std::move(values));
}

double Tensor::scalar_value() const {
    if (!is_scalar()) throw ContractError("expected scalar tensor, got shape " + shape_str(shape));
    return data[0];
}

std::size_t Tensor::rows() const {
    if (shape.size() != 2) throw ContractError("expected rank-2 tensor, got shape " + shape_str(shape));
    return shape[0];
}

std::size_t Tensor::cols() const {
    if (shape.size() != 2) throw ContractError("expected rank-2 tensor, got shape " + shape_str(shape));
    return shape[1];
}

double& Tensor::at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }

double Tensor::at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

void Tensor::ensure_finite(const char* context) const {
    for (double v : data) {
        if (!std::isfinite(v)) {
            throw NumericalError(std::string("non-finite value in ") + context);
        }
    }
}

}  // namespace distdiff
