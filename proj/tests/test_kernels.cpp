#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "nextview/kernels.hpp"
#include "nextview/rng.hpp"

namespace k = nextview::kernels;
using nextview::Rng;

namespace {
std::vector<double> random_vec(std::size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    return v;
}

bool close(double a, double b, double tol = 1e-10) {
    return std::abs(a - b) <= tol * (1.0 + std::abs(a) + std::abs(b));
}
}  // namespace

TEST_CASE("scalar gemm matches a naive triple loop") {
    Rng rng(7);
    const int m = 5, n = 7, kk = 4;
    const auto a = random_vec(m * kk, rng);
    const auto b = random_vec(kk * n, rng);
    std::vector<double> c(m * n, 0.0);
    k::detail::dgemm_scalar(m, n, kk, a.data(), kk, b.data(), n, c.data(), n, false);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int p = 0; p < kk; ++p) s += a[i * kk + p] * b[p * n + j];
            CHECK(close(c[i * n + j], s, 1e-13));
        }
}

TEST_CASE("gemm accumulate adds on top of C") {
    Rng rng(9);
    const int m = 3, n = 6, kk = 3;
    const auto a = random_vec(m * kk, rng);
    const auto b = random_vec(kk * n, rng);
    std::vector<double> c0(m * n, 1.5), c1(m * n, 1.5);
    k::detail::dgemm_scalar(m, n, kk, a.data(), kk, b.data(), n, c0.data(), n, true);
    std::vector<double> prod(m * n, 0.0);
    k::detail::dgemm_scalar(m, n, kk, a.data(), kk, b.data(), n, prod.data(), n, false);
    for (int i = 0; i < m * n; ++i) CHECK(close(c0[i], 1.5 + prod[i], 1e-13));
    (void)c1;
}

#if defined(__x86_64__)
TEST_CASE("avx2 backend matches scalar reference") {
    if (!k::detail::avx2_available()) {
        MESSAGE("AVX2 not available on this machine; skipping equivalence checks");
        return;
    }
    Rng rng(1234);
    // sizes straddling the vector width, including remainders
    for (int m : {1, 3, 8}) {
        for (int n : {1, 5, 16, 33}) {
            for (int kk : {1, 4, 9}) {
                const auto a = random_vec(static_cast<std::size_t>(m) * kk, rng);
                const auto b = random_vec(static_cast<std::size_t>(kk) * n, rng);
                std::vector<double> cs(static_cast<std::size_t>(m) * n, 0.25);
                std::vector<double> cv = cs;
                k::detail::dgemm_scalar(m, n, kk, a.data(), kk, b.data(), n, cs.data(), n, true);
                k::detail::dgemm_avx2(m, n, kk, a.data(), kk, b.data(), n, cv.data(), n, true);
                for (std::size_t i = 0; i < cs.size(); ++i) CHECK(close(cs[i], cv[i]));
            }
        }
    }
    for (std::size_t n : {1u, 4u, 7u, 64u, 1001u}) {
        const auto x = random_vec(n, rng);
        const auto b = random_vec(n, rng);
        auto y0 = random_vec(n, rng);
        auto y1 = y0;
        k::detail::daxpy_scalar(n, 0.37, x.data(), y0.data());
        k::detail::daxpy_avx2(n, 0.37, x.data(), y1.data());
        for (std::size_t i = 0; i < n; ++i) CHECK(close(y0[i], y1[i]));

        std::vector<double> o0(n), o1(n);
        k::detail::vadd_scalar(n, x.data(), b.data(), o0.data());
        k::detail::vadd_avx2(n, x.data(), b.data(), o1.data());
        for (std::size_t i = 0; i < n; ++i) CHECK(o0[i] == o1[i]);
        k::detail::vsub_scalar(n, x.data(), b.data(), o0.data());
        k::detail::vsub_avx2(n, x.data(), b.data(), o1.data());
        for (std::size_t i = 0; i < n; ++i) CHECK(o0[i] == o1[i]);
        k::detail::vmul_scalar(n, x.data(), b.data(), o0.data());
        k::detail::vmul_avx2(n, x.data(), b.data(), o1.data());
        for (std::size_t i = 0; i < n; ++i) CHECK(o0[i] == o1[i]);
        k::detail::vscale_scalar(n, x.data(), -1.7, o0.data());
        k::detail::vscale_avx2(n, x.data(), -1.7, o1.data());
        for (std::size_t i = 0; i < n; ++i) CHECK(o0[i] == o1[i]);

        CHECK(close(k::detail::vsum_scalar(n, x.data()), k::detail::vsum_avx2(n, x.data())));
        CHECK(close(k::detail::vdot_scalar(n, x.data(), b.data()),
                    k::detail::vdot_avx2(n, x.data(), b.data())));
        CHECK(k::detail::vmax_scalar(n, x.data()) == k::detail::vmax_avx2(n, x.data()));
    }
}
#endif

TEST_CASE("backend selection") {
    CHECK(k::select_backend("scalar"));
    CHECK(std::string(k::active_backend()) == "scalar");
    CHECK_FALSE(k::select_backend("not-a-backend"));
#if defined(__x86_64__)
    if (k::detail::avx2_available()) {
        CHECK(k::select_backend("avx2"));
        CHECK(std::string(k::active_backend()) == "avx2");
    }
#endif
}
