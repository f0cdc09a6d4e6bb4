#include "nextview/kernels.hpp"

#include <algorithm>
#include <cstring>

namespace nextview::kernels::detail {

void dgemm_scalar(int m, int n, int k, const double* a, int lda,
                  const double* b, int ldb, double* c, int ldc, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        double* crow = c + static_cast<std::size_t>(i) * ldc;
        if (!accumulate) std::memset(crow, 0, sizeof(double) * n);
        for (int p = 0; p < k; ++p) {
            const double aip = a[static_cast<std::size_t>(i) * lda + p];
            if (aip == 0.0) continue;
            const double* brow = b + static_cast<std::size_t>(p) * ldb;
            for (int j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
}

void daxpy_scalar(std::size_t n, double alpha, const double* x, double* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void vadd_scalar(std::size_t n, const double* a, const double* b, double* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void vsub_scalar(std::size_t n, const double* a, const double* b, double* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void vmul_scalar(std::size_t n, const double* a, const double* b, double* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void vscale_scalar(std::size_t n, const double* a, double s, double* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * s;
}

double vsum_scalar(std::size_t n, const double* a) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i];
    return s;
}

double vdot_scalar(std::size_t n, const double* a, const double* b) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

double vmax_scalar(std::size_t n, const double* a) {
    double s = a[0];
    for (std::size_t i = 1; i < n; ++i) s = std::max(s, a[i]);
    return s;
}

}  // namespace nextview::kernels::detail
