#pragma once

#include <cstddef>
#include <optional>

// Arithmetic inner loops. Every kernel has a scalar reference implementation
// and, where it pays off, an AVX2 variant selected at runtime. Elementwise
// AVX2 kernels are bit-identical to the scalar reference; reductions and
// matmuls reassociate and are equivalence-tested against the reference under
// tolerance instead.
namespace distdiff::kernels {

enum class Backend { scalar, avx2 };

const char* backend_name(Backend b);
bool avx2_supported();

// Active backend: best available unless forced.
Backend active();
void force(std::optional<Backend> b);  // nullopt restores auto-detection

// Elementwise: z[i] = a*x[i] + b*y[i]
void axpby(double a, const double* x, double b, const double* y, double* z, std::size_t n);
void add(const double* x, const double* y, double* z, std::size_t n);
void sub(const double* x, const double* y, double* z, std::size_t n);
void mul(const double* x, const double* y, double* z, std::size_t n);
void scale(double a, const double* x, double* z, std::size_t n);

// Reductions.
double dot(const double* x, const double* y, std::size_t n);
double sum(const double* x, std::size_t n);
double sqdist(const double* x, const double* y, std::size_t n);

// Row-major matrix products.
// C(n,m) = A(n,k) * B(k,m)
void matmul(const double* A, const double* B, double* C, std::size_t n, std::size_t k, std::size_t m);
// C(n,k) = A(n,t) * B(k,t)^T   (rows of A dotted with rows of B)
void matmul_a_bt(const double* A, const double* B, double* C, std::size_t n, std::size_t t, std::size_t k);
// C(k,m) = A(n,k)^T * B(n,m)
void matmul_at_b(const double* A, const double* B, double* C, std::size_t n, std::size_t k, std::size_t m);

// Scalar only; std::tanh element by element.
void tanh_vec(const double* x, double* y, std::size_t n);

namespace detail {
// Scalar reference implementations, exposed for equivalence tests.
void axpby_scalar(double a, const double* x, double b, const double* y, double* z, std::size_t n);
void add_scalar(const double* x, const double* y, double* z, std::size_t n);
void sub_scalar(const double* x, const double* y, double* z, std::size_t n);
void mul_scalar(const double* x, const double* y, double* z, std::size_t n);
void scale_scalar(double a, const double* x, double* z, std::size_t n);
double dot_scalar(const double* x, const double* y, std::size_t n);
double sum_scalar(const double* x, std::size_t n);
double sqdist_scalar(const double* x, const double* y, std::size_t n);
void matmul_scalar(const double* A, const double* B, double* C, std::size_t n, std::size_t k, std::size_t m);
void matmul_a_bt_scalar(const double* A, const double* B, double* C, std::size_t n, std::size_t t, std::size_t k);
void matmul_at_b_scalar(const double* A, const double* B, double* C, std::size_t n, std::size_t k, std::size_t m);

#ifdef DISTDIFF_HAVE_AVX2
void axpby_avx2(double a, const double* x, double b, const double* y, double* z, std::size_t n);
void add_avx2(const double* x, const double* y, double* z, std::size_t n);
void sub_avx2(const double* x, const double* y, double* z, std::size_t n);
void mul_avx2(const double* x, const double* y, double* z, std::size_t n);
void scale_avx2(double a, const double* x, double* z, std::size_t n);
double dot_avx2(const double* x, const double* y, std::size_t n);
double sum_avx2(const double* x, std::size_t n);
double sqdist_avx2(const double* x, const double* y, std::size_t n);
void matmul_avx2(const double* A, const double* B, double* C, std::size_t n, std::size_t k, std::size_t m);
void matmul_a_bt_avx2(const double* A, const double* B, double* C, std::size_t n, std::size_t t, std::size_t k);
void matmul_at_b_avx2(const double* A, const double* B, double* C, std::size_t n, std::size_t k, std::size_t m);
#endif
}  // namespace detail

}  // namespace distdiff::kernels
