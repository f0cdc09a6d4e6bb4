#include "nextview/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace nextview::kernels {

using namespace detail;

gemm_fn dgemm = dgemm_scalar;
axpy_fn daxpy = daxpy_scalar;
binary_fn vadd = vadd_scalar;
binary_fn vsub = vsub_scalar;
binary_fn vmul = vmul_scalar;
scale_fn vscale = vscale_scalar;
reduce_fn vsum = vsum_scalar;
dot_fn vdot = vdot_scalar;
reduce_fn vmax = vmax_scalar;

namespace {
const char* g_backend = "scalar";

void bind_scalar() {
    dgemm = dgemm_scalar;
    daxpy = daxpy_scalar;
    vadd = vadd_scalar;
    vsub = vsub_scalar;
    vmul = vmul_scalar;
    vscale = vscale_scalar;
    vsum = vsum_scalar;
    vdot = vdot_scalar;
    vmax = vmax_scalar;
    g_backend = "scalar";
}

#if defined(__x86_64__)
void bind_avx2() {
    dgemm = dgemm_avx2;
    daxpy = daxpy_avx2;
    vadd = vadd_avx2;
    vsub = vsub_avx2;
    vmul = vmul_avx2;
    vscale = vscale_avx2;
    vsum = vsum_avx2;
    vdot = vdot_avx2;
    vmax = vmax_avx2;
    g_backend = "avx2";
}
#endif

struct Init {
    Init() {
        const char* want = std::getenv("NEXTVIEW_KERNELS");
        if (want) {
            if (select_backend(want)) return;
            // unknown or unsupported request: fall through to auto pick
        }
#if defined(__x86_64__)
        if (avx2_available()) {
            bind_avx2();
            return;
        }
#endif
        bind_scalar();
    }
};
const Init g_init;
}  // namespace

const char* active_backend() { return g_backend; }

bool select_backend(const char* name) {
    if (std::strcmp(name, "scalar") == 0) {
        bind_scalar();
        return true;
    }
#if defined(__x86_64__)
    if (std::strcmp(name, "avx2") == 0 && avx2_available()) {
        bind_avx2();
        return true;
    }
#endif
    return false;
}

}  // namespace nextview::kernels
