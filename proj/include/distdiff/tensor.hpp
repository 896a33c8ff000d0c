#pragma once

#include <cstddef>
#include <vector>

#include "distdiff/errors.hpp"

namespace distdiff {

// Dense row-major tensor of doubles. Values are immutable once an operation
// has produced them; mutation happens only through construction helpers.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<std::size_t> s, std::vector<double> d);

    static Tensor zeros(std::vector<std::size_t> shape);
    static Tensor full(std::vector<std::size_t> shape, double value);
    static Tensor scalar(double value);
    static Tensor vector(std::vector<double> values);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

    std::size_t numel() const { return data.size(); }
    bool is_scalar() const { return numel() == 1; }
    double scalar_value() const;

    // 2-D accessors; throw on rank mismatch.
    std::size_t rows() const;
    std::size_t cols() const;
    double& at(std::size_t r, std::size_t c);
    double at(std::size_t r, std::size_t c) const;

    bool same_shape(const Tensor& other) const { return shape == other.shape; }

    // Throws NumericalError if any element is NaN or infinite.
    void ensure_finite(const char* context) const;
};

std::size_t shape_numel(const std::vector<std::size_t>& shape);
std::string shape_str(const std::vector<std::size_t>& shape);

}  // namespace distdiff
