#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "nextview/metrics.hpp"
#include "nextview/rng.hpp"

using namespace nextview;
using namespace nextview::metrics;
using recon3d::PointCloud;

namespace {

Image random_image(int h, int w, Rng& rng) {
    Image im(h, w);
    for (auto& v : im.data) v = rng.uniform();
    return im;
}

PointCloud random_cloud(int n, Rng& rng) {
    PointCloud c;
    for (int i = 0; i < n; ++i)
        c.points.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
    return c;
}

// O(n^2) brute-force chamfer, independent of the grid-accelerated path
double chamfer_brute(const PointCloud& x, const PointCloud& y) {
    auto one_way = [](const PointCloud& a, const PointCloud& b) {
        double s = 0.0;
        for (const auto& p : a.points) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& q : b.points) {
                const double d = std::sqrt((p[0] - q[0]) * (p[0] - q[0]) +
                                           (p[1] - q[1]) * (p[1] - q[1]) +
                                           (p[2] - q[2]) * (p[2] - q[2]));
                best = std::min(best, d);
            }
            s += best;
        }
        return s / static_cast<double>(a.points.size());
    };
    return 0.5 * (one_way(x, y) + one_way(y, x));
}

// direct windowed-loop SSIM oracle: non-separable 11x11 Gaussian, applied
// per window position; shares no code with metrics::ssim
double ssim_oracle(const Image& a, const Image& b) {
    const int h = a.height, w = a.width;
    std::vector<double> ga(static_cast<std::size_t>(h) * w), gb(ga.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            ga[static_cast<std::size_t>(y) * w + x] =
                0.299 * a.at(y, x, 0) + 0.587 * a.at(y, x, 1) + 0.114 * a.at(y, x, 2);
            gb[static_cast<std::size_t>(y) * w + x] =
                0.299 * b.at(y, x, 0) + 0.587 * b.at(y, x, 1) + 0.114 * b.at(y, x, 2);
        }
    double kernel[11][11];
    double ksum = 0.0;
    for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
            const double dy = i - 5, dx = j - 5;
            kernel[i][j] = std::exp(-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5));
            ksum += kernel[i][j];
        }
    for (auto& row : kernel)
        for (auto& v : row) v /= ksum;

    const double c1 = 1e-4, c2 = 9e-4;
    double total = 0.0;
    int count = 0;
    for (int y = 0; y + 11 <= h; ++y)
        for (int x = 0; x + 11 <= w; ++x) {
            double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
            for (int i = 0; i < 11; ++i)
                for (int j = 0; j < 11; ++j) {
                    const double va = ga[static_cast<std::size_t>(y + i) * w + x + j];
                    const double vb = gb[static_cast<std::size_t>(y + i) * w + x + j];
                    ma += kernel[i][j] * va;
                    mb += kernel[i][j] * vb;
                    saa += kernel[i][j] * va * va;
                    sbb += kernel[i][j] * vb * vb;
                    sab += kernel[i][j] * va * vb;
                }
            saa -= ma * ma;
            sbb -= mb * mb;
            sab -= ma * mb;
            total += ((2 * ma * mb + c1) * (2 * sab + c2)) /
                     ((ma * ma + mb * mb + c1) * (saa + sbb + c2));
            ++count;
        }
    return total / count;
}

}  // namespace

TEST_CASE("psnr basics") {
    Rng rng(3);
    const Image x = random_image(16, 16, rng);
    CHECK(psnr(x, x) == 99.0);
    Image y = x;
    for (auto& v : y.data) v += 0.1;  // uniform offset, MSE = 0.01
    CHECK(psnr(y, x) == doctest::Approx(20.0).epsilon(1e-9));
    CHECK_THROWS_AS(psnr(x, Image(8, 8)), std::invalid_argument);
}

TEST_CASE("psnr matches a naive two-loop oracle") {
    Rng rng(5);
    const Image a = random_image(12, 14, rng);
    const Image b = random_image(12, 14, rng);
    double mse = 0.0;
    for (int y = 0; y < 12; ++y)
        for (int x = 0; x < 14; ++x)
            for (int c = 0; c < 3; ++c) {
                const double d = a.at(y, x, c) - b.at(y, x, c);
                mse += d * d;
            }
    mse /= 12.0 * 14.0 * 3.0;
    CHECK(std::abs(psnr(a, b) - 10.0 * std::log10(1.0 / mse)) < 1e-10);
}

TEST_CASE("ssim: identity, structured anti-correlation, oracle equivalence") {
    Rng rng(7);
    const Image x = random_image(32, 32, rng);
    CHECK(ssim(x, x) == doctest::Approx(1.0).epsilon(1e-9));

    // period-4 checkerboard against its inverse: strongly negative
    Image cb(32, 32);
    for (int y = 0; y < 32; ++y)
        for (int x2 = 0; x2 < 32; ++x2) {
            const double v = ((y / 4 + x2 / 4) % 2 == 0) ? 1.0 : 0.0;
            for (int c = 0; c < 3; ++c) cb.at(y, x2, c) = v;
        }
    Image inv = cb;
    for (auto& v : inv.data) v = 1.0 - v;
    CHECK(ssim(cb, inv) < 0.0);

    const Image a = random_image(24, 28, rng);
    const Image b = random_image(24, 28, rng);
    CHECK(std::abs(ssim(a, b) - ssim_oracle(a, b)) < 1e-6);
    CHECK(std::abs(ssim(cb, inv) - ssim_oracle(cb, inv)) < 1e-6);

    CHECK_THROWS_AS(ssim(Image(8, 8), Image(8, 8)), std::invalid_argument);
}

TEST_CASE("feature_sim: identity and symmetry") {
    ParamStore store;
    Rng init(9);
    conditioning::EncoderConfig cfg;
    cfg.input_size = 16;
    cfg.base_channels = 8;
    cfg.out_dim = 12;
    conditioning::GlobalEncoder enc(cfg, store, init);
    Rng rng(10);
    const Image a = random_image(16, 16, rng);
    const Image b = random_image(16, 16, rng);
    CHECK(feature_sim(a, a, enc) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(feature_sim(a, b, enc) == feature_sim(b, a, enc));
    CHECK(feature_sim(a, b, enc) >= -1.0);
    CHECK(feature_sim(a, b, enc) <= 1.0);
}

TEST_CASE("chamfer: identity, two points, brute-force equivalence, symmetry") {
    Rng rng(11);
    const PointCloud x = random_cloud(150, rng);
    CHECK(chamfer(x, x) == 0.0);

    PointCloud p, q;
    p.points.push_back({0, 0, 0});
    q.points.push_back({0.3, 0.4, 0.0});
    CHECK(chamfer(p, q) == doctest::Approx(0.5).epsilon(1e-12));

    for (int trial = 0; trial < 5; ++trial) {
        const PointCloud a = random_cloud(120 + trial * 20, rng);
        const PointCloud b = random_cloud(200 - trial * 30, rng);
        CHECK(std::abs(chamfer(a, b) - chamfer_brute(a, b)) < 1e-12);
        CHECK(chamfer(a, b) == chamfer(b, a));
    }
    CHECK_THROWS_AS(chamfer(PointCloud{}, x), std::invalid_argument);
}

TEST_CASE("nearest-neighbor distances handle far-away queries") {
    PointCloud tight;
    for (int i = 0; i < 10; ++i) tight.points.push_back({0.01 * i, 0.0, 0.0});
    PointCloud far;
    far.points.push_back({5.0, 5.0, 5.0});
    const auto d = nn_distances(far, tight);
    double want = std::numeric_limits<double>::infinity();
    for (const auto& p : tight.points)
        want = std::min(want, std::sqrt((5 - p[0]) * (5 - p[0]) + 25.0 + 25.0));
    CHECK(d[0] == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("fscore: identity, disjoint, half-precision case, monotone in tau") {
    Rng rng(13);
    const PointCloud x = random_cloud(100, rng);
    CHECK(fscore(x, x, 0.02) == 1.0);

    PointCloud far = x;
    for (auto& p : far.points) p[0] += 10.0;
    CHECK(fscore(x, far, 0.02) == 0.0);

    // half of X within tau of Y, all of Y within tau of X: F = 2/3
    PointCloud xx, yy;
    xx.points.push_back({0, 0, 0});
    xx.points.push_back({0.5, 0, 0});
    xx.points.push_back({0, 0.5, 0});
    xx.points.push_back({0.001, 0, 0});
    yy.points.push_back({0, 0, 0});
    yy.points.push_back({0.0005, 0, 0});
    CHECK(fscore(xx, yy, 0.02) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));

    const PointCloud a = random_cloud(80, rng);
    const PointCloud b = random_cloud(80, rng);
    double prev = 0.0;
    for (double tau : {0.01, 0.05, 0.1, 0.3, 0.6, 1.2}) {
        const double f = fscore(a, b, tau);
        CHECK(f >= prev);
        prev = f;
    }
}

TEST_CASE("evaluate_sample: GT-as-prediction yields the identity values") {
    ParamStore store;
    Rng init(15);
    conditioning::EncoderConfig cfg;
    cfg.input_size = 16;
    cfg.base_channels = 8;
    cfg.out_dim = 12;
    conditioning::GlobalEncoder enc(cfg, store, init);
    Rng rng(16);
    std::vector<Image> views;
    for (int i = 0; i < 6; ++i) views.push_back(random_image(16, 16, rng));
    const PointCloud cloud = random_cloud(500, rng);

    const auto [r2, r3] = evaluate_sample(views, views, cloud, cloud, enc);
    CHECK(r2.view_count == 6);
    CHECK(r2.resolution == 16);
    CHECK(r2.mean_psnr == 99.0);
    CHECK(r2.mean_ssim == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(r2.mean_feature_sim == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(r3.chamfer == 0.0);
    CHECK(r3.fscore_tau == 1.0);
    CHECK(r3.fscore_tau_extra == 1.0);

    // aggregation is the arithmetic mean of the per-view values
    std::vector<Image> other;
    for (int i = 0; i < 6; ++i) other.push_back(random_image(16, 16, rng));
    const auto [q2, q3] = evaluate_sample(other, views, cloud, cloud, enc);
    double s = 0.0;
    for (double v : q2.psnr_per_view) s += v;
    CHECK(q2.mean_psnr == doctest::Approx(s / 6.0).epsilon(1e-12));
}
