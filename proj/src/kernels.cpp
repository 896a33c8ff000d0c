#include "distdiff/kernels.hpp"

#include <atomic>
#include <cmath>
#include <cstring>

namespace distdiff::kernels {

namespace detail {

void axpby_scalar(double a, const double* x, double b, const double* y, double* z, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) z[i] = a * x[i] + b * y[i];
}

void add_scalar(const double* x, const double* y, double* z, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) z[i] = x[i] + y[i];
}

void sub_scalar(const double* x, const double* y, double* z, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) z[i] = x[i] - y[i];
}

void mul_scalar(const double* x, const double* y, double* z, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) z[i] = x[i] * y[i];
}

void scale_scalar(double a, const double* x, double* z, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) z[i] = a * x[i];
}

double dot_scalar(const double* x, const double* y, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
    return acc;
}

double sum_scalar(const double* x, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i];
    return acc;
}

double sqdist_scalar(const double* x, const double* y, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double d = x[i] - y[i];
        acc += d * d;
    }
    return acc;
}

// ikj order: C row i accumulates broadcast A[i,t] times B row t.
void matmul_scalar(const double* A, const double* B, double* C, std::size_t n, std::size_t k,
                   std::size_t m) {
    std::memset(C, 0, n * m * sizeof(double));
    for (std::size_t i = 0; i < n; ++i) {
        const double* a_row = A + i * k;
        double* c_row = C + i * m;
        for (std::size_t t = 0; t < k; ++t) {
            double a = a_row[t];
            const double* b_row = B + t * m;
            for (std::size_t j = 0; j < m; ++j) c_row[j] += a * b_row[j];
        }
    }
}

void matmul_a_bt_scalar(const double* A, const double* B, double* C, std::size_t n, std::size_t t,
                        std::size_t k) {
    for (std::size_t i = 0; i < n; ++i) {
        const double* a_row = A + i * t;
        for (std::size_t j = 0; j < k; ++j) {
            C[i * k + j] = dot_scalar(a_row, B + j * t, t);
        }
    }
}

void matmul_at_b_scalar(const double* A, const double* B, double* C, std::size_t n, std::size_t k,
                        std::size_t m) {
    std::memset(C, 0, k * m * sizeof(double));
    for (std::size_t i = 0; i < n; ++i) {
        const double* a_row = A + i * k;
        const double* b_row = B + i * m;
        for (std::size_t a = 0; a < k; ++a) {
            double v = a_row[a];
            double* c_row = C + a * m;
            for (std::size_t j = 0; j < m; ++j) c_row[j] += v * b_row[j];
        }
    }
}

}  // namespace detail

const char* backend_name(Backend b) {
    switch (b) {
        case Backend::scalar: return "scalar";
        case Backend::avx2: return "avx2";
    }
    return "?";
}

bool avx2_supported() {
#if defined(DISTDIFF_HAVE_AVX2) && (defined(__x86_64__) || defined(_M_X64))
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

namespace {

Backend detect() { return avx2_supported() ? Backend::avx2 : Backend::scalar; }

std::atomic<Backend> g_active{detect()};

}  // namespace

Backend active() { return g_active.load(std::memory_order_relaxed); }

void force(std::optional<Backend> b) {
    g_active.store(b.value_or(detect()), std::memory_order_relaxed);
}

#ifdef DISTDIFF_HAVE_AVX2
#define DISTDIFF_DISPATCH(fn, ...)                                  \
    do {                                                            \
        if (active() == Backend::avx2) return detail::fn##_avx2(__VA_ARGS__); \
        return detail::fn##_scalar(__VA_ARGS__);                    \
    } while (0)
#else
#define DISTDIFF_DISPATCH(fn, ...) return detail::fn##_scalar(__VA_ARGS__)
#endif

void axpby(double a, const double* x, double b, const double* y, double* z, std::size_t n) {
    DISTDIFF_DISPATCH(axpby, a, x, b, y, z, n);
}

void add(const double* x, const double* y, double* z, std::size_t n) {
    DISTDIFF_DISPATCH(add, x, y, z, n);
}

void sub(const double* x, const double* y, double* z, std::size_t n) {
    DISTDIFF_DISPATCH(sub, x, y, z, n);
}

void mul(const double* x, const double* y, double* z, std::size_t n) {
    DISTDIFF_DISPATCH(mul, x, y, z, n);
}

void scale(double a, const double* x, double* z, std::size_t n) {
    DISTDIFF_DISPATCH(scale, a, x, z, n);
}

double dot(const double* x, const double* y, std::size_t n) { DISTDIFF_DISPATCH(dot, x, y, n); }

double sum(const double* x, std::size_t n) { DISTDIFF_DISPATCH(sum, x, n); }

double sqdist(const double* x, const double* y, std::size_t n) {
    DISTDIFF_DISPATCH(sqdist, x, y, n);
}

void matmul(const double* A, const double* B, double* C, std::size_t n, std::size_t k,
            std::size_t m) {
    DISTDIFF_DISPATCH(matmul, A, B, C, n, k, m);
}

void matmul_a_bt(const double* A, const double* B, double* C, std::size_t n, std::size_t t,
                 std::size_t k) {
    DISTDIFF_DISPATCH(matmul_a_bt, A, B, C, n, t, k);
}

void matmul_at_b(const double* A, const double* B, double* C, std::size_t n, std::size_t k,
                 std::size_t m) {
    DISTDIFF_DISPATCH(matmul_at_b, A, B, C, n, k, m);
}

#undef DISTDIFF_DISPATCH

void tanh_vec(const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = std::tanh(x[i]);
}

}  // namespace distdiff::kernels
