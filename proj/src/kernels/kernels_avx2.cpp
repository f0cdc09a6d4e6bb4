// AVX2+FMA backend. Compiled with -mavx2 -mfma; only reached when the
// dispatcher has confirmed CPU support, so no per-call feature checks.

#include "nextview/kernels.hpp"

#if defined(__x86_64__)

#include <immintrin.h>

#include <algorithm>
#include <cstring>

namespace nextview::kernels::detail {

bool avx2_available() {
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}

void dgemm_avx2(int m, int n, int k, const double* a, int lda,
                const double* b, int ldb, double* c, int ldc, bool accumulate) {
    const int n8 = n & ~7;
    for (int i = 0; i < m; ++i) {
        double* crow = c + static_cast<std::size_t>(i) * ldc;
        if (!accumulate) std::memset(crow, 0, sizeof(double) * n);
        const double* arow = a + static_cast<std::size_t>(i) * lda;
        for (int p = 0; p < k; ++p) {
            const double aip = arow[p];
            if (aip == 0.0) continue;
            const __m256d va = _mm256_set1_pd(aip);
            const double* brow = b + static_cast<std::size_t>(p) * ldb;
            int j = 0;
            for (; j < n8; j += 8) {
                __m256d c0 = _mm256_loadu_pd(crow + j);
                __m256d c1 = _mm256_loadu_pd(crow + j + 4);
                c0 = _mm256_fmadd_pd(va, _mm256_loadu_pd(brow + j), c0);
                c1 = _mm256_fmadd_pd(va, _mm256_loadu_pd(brow + j + 4), c1);
                _mm256_storeu_pd(crow + j, c0);
                _mm256_storeu_pd(crow + j + 4, c1);
            }
            for (; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
}

void daxpy_avx2(std::size_t n, double alpha, const double* x, double* y) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d vy = _mm256_loadu_pd(y + i);
        vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy);
        _mm256_storeu_pd(y + i, vy);
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void vadd_avx2(std::size_t n, const double* a, const double* b, double* out) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) out[i] = a[i] + b[i];
}

void vsub_avx2(std::size_t n, const double* a, const double* b, double* out) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) out[i] = a[i] - b[i];
}

void vmul_avx2(std::size_t n, const double* a, const double* b, double* out) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) out[i] = a[i] * b[i];
}

void vscale_avx2(std::size_t n, const double* a, double s, double* out) {
    const __m256d vs = _mm256_set1_pd(s);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), vs));
    for (; i < n; ++i) out[i] = a[i] * s;
}

double vsum_avx2(std::size_t n, const double* a) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(a + i));
    alignas(32) double lane[4];
    _mm256_store_pd(lane, acc);
    double s = lane[0] + lane[1] + lane[2] + lane[3];
    for (; i < n; ++i) s += a[i];
    return s;
}

double vdot_avx2(std::size_t n, const double* a, const double* b) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc);
    alignas(32) double lane[4];
    _mm256_store_pd(lane, acc);
    double s = lane[0] + lane[1] + lane[2] + lane[3];
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

double vmax_avx2(std::size_t n, const double* a) {
    double s = a[0];
    std::size_t i = 0;
    if (n >= 4) {
        __m256d acc = _mm256_loadu_pd(a);
        for (i = 4; i + 4 <= n; i += 4) acc = _mm256_max_pd(acc, _mm256_loadu_pd(a + i));
        alignas(32) double lane[4];
        _mm256_store_pd(lane, acc);
        s = std::max(std::max(lane[0], lane[1]), std::max(lane[2], lane[3]));
    }
    for (; i < n; ++i) s = std::max(s, a[i]);
    return s;
}

}  // namespace nextview::kernels::detail

#endif  // __x86_64__
