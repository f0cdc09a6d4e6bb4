#pragma once

#include <cstddef>

// Runtime-dispatched numeric kernels. Every function pointer has a scalar
// reference implementation and (on x86-64 with AVX2+FMA) a vectorized
// variant; the dispatcher picks one at startup. Set NEXTVIEW_KERNELS=scalar
// or =avx2 to override. The two backends agree to floating-point
// reassociation tolerance; equivalence is covered by tests/test_kernels.

namespace nextview::kernels {

// C(M x N) = A(M x K) * B(K x N), row-major. If accumulate, C += A*B.
using gemm_fn = void (*)(int m, int n, int k, const double* a, int lda,
                         const double* b, int ldb, double* c, int ldc,
                         bool accumulate);
// y[i] += alpha * x[i]
using axpy_fn = void (*)(std::size_t n, double alpha, const double* x, double* y);
// out[i] = a[i] op b[i]
using binary_fn = void (*)(std::size_t n, const double* a, const double* b, double* out);
// out[i] = a[i] * s
using scale_fn = void (*)(std::size_t n, const double* a, double s, double* out);
using reduce_fn = double (*)(std::size_t n, const double* a);
using dot_fn = double (*)(std::size_t n, const double* a, const double* b);

extern gemm_fn dgemm;
extern axpy_fn daxpy;
extern binary_fn vadd;
extern binary_fn vsub;
extern binary_fn vmul;
extern scale_fn vscale;
extern reduce_fn vsum;
extern dot_fn vdot;
extern reduce_fn vmax;

// Name of the backend in use ("scalar" or "avx2").
const char* active_backend();

// Force a backend; returns false if unavailable on this machine.
bool select_backend(const char* name);

namespace detail {
void dgemm_scalar(int m, int n, int k, const double* a, int lda,
                  const double* b, int ldb, double* c, int ldc, bool accumulate);
void daxpy_scalar(std::size_t n, double alpha, const double* x, double* y);
void vadd_scalar(std::size_t n, const double* a, const double* b, double* out);
void vsub_scalar(std::size_t n, const double* a, const double* b, double* out);
void vmul_scalar(std::size_t n, const double* a, const double* b, double* out);
void vscale_scalar(std::size_t n, const double* a, double s, double* out);
double vsum_scalar(std::size_t n, const double* a);
double vdot_scalar(std::size_t n, const double* a, const double* b);
double vmax_scalar(std::size_t n, const double* a);

#if defined(__x86_64__)
bool avx2_available();
void dgemm_avx2(int m, int n, int k, const double* a, int lda,
                const double* b, int ldb, double* c, int ldc, bool accumulate);
void daxpy_avx2(std::size_t n, double alpha, const double* x, double* y);
void vadd_avx2(std::size_t n, const double* a, const double* b, double* out);
void vsub_avx2(std::size_t n, const double* a, const double* b, double* out);
void vmul_avx2(std::size_t n, const double* a, const double* b, double* out);
void vscale_avx2(std::size_t n, const double* a, double s, double* out);
double vsum_avx2(std::size_t n, const double* a);
double vdot_avx2(std::size_t n, const double* a, const double* b);
double vmax_avx2(std::size_t n, const double* a);
#endif
}  // namespace detail

}  // namespace nextview::kernels
