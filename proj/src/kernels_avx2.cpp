// AVX2 kernel variants. Compiled with -mavx2 -mfma; only reached when the CPU
// reports both features. Elementwise kernels use separate mul/add so they
// match the scalar reference bit for bit; reductions and matmuls use FMA with
// wide accumulators and are tolerance-tested instead.

#include <immintrin.h>

#include <cstring>

#include "distdiff/kernels.hpp"

namespace distdiff::kernels::detail {

namespace {

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d swapped = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, swapped));
}

}  // namespace

void axpby_avx2(double a, const double* x, double b, const double* y, double* z, std::size_t n) {
    __m256d va = _mm256_set1_pd(a);
    __m256d vb = _mm256_set1_pd(b);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d vx = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
        __m256d vy = _mm256_mul_pd(vb, _mm256_loadu_pd(y + i));
        _mm256_storeu_pd(z + i, _mm256_add_pd(vx, vy));
    }
    for (; i < n; ++i) z[i] = a * x[i] + b * y[i];
}

void add_avx2(const double* x, const double* y, double* z, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(z + i, _mm256_add_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    for (; i < n; ++i) z[i] = x[i] + y[i];
}

void sub_avx2(const double* x, const double* y, double* z, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(z + i, _mm256_sub_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    for (; i < n; ++i) z[i] = x[i] - y[i];
}

void mul_avx2(const double* x, const double* y, double* z, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(z + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    for (; i < n; ++i) z[i] = x[i] * y[i];
}

void scale_avx2(double a, const double* x, double* z, std::size_t n) {
    __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(z + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
    for (; i < n; ++i) z[i] = a * x[i];
}

double dot_avx2(const double* x, const double* y, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
    }
    for (; i + 4 <= n; i += 4)
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    double tail = 0.0;
    for (; i < n; ++i) tail += x[i] * y[i];
    return hsum(_mm256_add_pd(acc0, acc1)) + tail;
}

double sum_avx2(const double* x, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
    double tail = 0.0;
    for (; i < n; ++i) tail += x[i];
    return hsum(acc) + tail;
}

double sqdist_avx2(const double* x, const double* y, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
        acc = _mm256_fmadd_pd(d, d, acc);
    }
    double tail = 0.0;
    for (; i < n; ++i) {
        double d = x[i] - y[i];
        tail += d * d;
    }
    return hsum(acc) + tail;
}

void matmul_avx2(const double* A, const double* B, double* C, std::size_t n, std::size_t k,
                 std::size_t m) {
    std::memset(C, 0, n * m * sizeof(double));
    for (std::size_t i = 0; i < n; ++i) {
        const double* a_row = A + i * k;
        double* c_row = C + i * m;
        for (std::size_t t = 0; t < k; ++t) {
            __m256d va = _mm256_set1_pd(a_row[t]);
            const double* b_row = B + t * m;
            std::size_t j = 0;
            for (; j + 4 <= m; j += 4) {
                __m256d c = _mm256_loadu_pd(c_row + j);
                c = _mm256_fmadd_pd(va, _mm256_loadu_pd(b_row + j), c);
                _mm256_storeu_pd(c_row + j, c);
            }
            double a = a_row[t];
            for (; j < m; ++j) c_row[j] += a * b_row[j];
        }
    }
}

void matmul_a_bt_avx2(const double* A, const double* B, double* C, std::size_t n, std::size_t t,
                      std::size_t k) {
    for (std::size_t i = 0; i < n; ++i) {
        const double* a_row = A + i * t;
        for (std::size_t j = 0; j < k; ++j) {
            C[i * k + j] = dot_avx2(a_row, B + j * t, t);
        }
    }
}

void matmul_at_b_avx2(const double* A, const double* B, double* C, std::size_t n, std::size_t k,
                      std::size_t m) {
    std::memset(C, 0, k * m * sizeof(double));
    for (std::size_t i = 0; i < n; ++i) {
        const double* a_row = A + i * k;
        const double* b_row = B + i * m;
        for (std::size_t a = 0; a < k; ++a) {
            __m256d va = _mm256_set1_pd(a_row[a]);
            double* c_row = C + a * m;
            std::size_t j = 0;
            for (; j + 4 <= m; j += 4) {
                __m256d c = _mm256_loadu_pd(c_row + j);
                c = _mm256_fmadd_pd(va, _mm256_loadu_pd(b_row + j), c);
                _mm256_storeu_pd(c_row + j, c);
            }
            double v = a_row[a];
            for (; j < m; ++j) c_row[j] += v * b_row[j];
        }
    }
}

}  // namespace distdiff::kernels::detail
