#include "nextview/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace nextview::metrics {

double psnr(const Image& a, const Image& b) {
    if (!a.same_size(b)) throw std::invalid_argument("psnr: shape mismatch");
    double mse = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.data.size());
    if (mse <= 0.0) return 99.0;
    return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

namespace {
std::vector<double> to_luma(const Image& im) {
    std::vector<double> g(static_cast<std::size_t>(im.height) * im.width);
    for (int y = 0; y < im.height; ++y)
        for (int x = 0; x < im.width; ++x)
            g[static_cast<std::size_t>(y) * im.width + x] =
                0.299 * im.at(y, x, 0) + 0.587 * im.at(y, x, 1) + 0.114 * im.at(y, x, 2);
    return g;
}

constexpr int kWin = 11;

std::array<double, kWin> gauss_taps() {
    std::array<double, kWin> t{};
    const double sigma = 1.5;
    double sum = 0.0;
    for (int i = 0; i < kWin; ++i) {
        const double d = i - kWin / 2;
        t[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
        sum += t[static_cast<std::size_t>(i)];
    }
    for (auto& v : t) v /= sum;
    return t;
}

// separable Gaussian, valid mode: output (h-10) x (w-10)
std::vector<double> gauss_valid(const std::vector<double>& img, int h, int w) {
    static const auto taps = gauss_taps();
    const int wo = w - kWin + 1, ho = h - kWin + 1;
    std::vector<double> tmp(static_cast<std::size_t>(h) * wo);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < wo; ++x) {
            double s = 0.0;
            for (int i = 0; i < kWin; ++i) s += taps[static_cast<std::size_t>(i)] * img[static_cast<std::size_t>(y) * w + x + i];
            tmp[static_cast<std::size_t>(y) * wo + x] = s;
        }
    std::vector<double> out(static_cast<std::size_t>(ho) * wo);
    for (int y = 0; y < ho; ++y)
        for (int x = 0; x < wo; ++x) {
            double s = 0.0;
            for (int i = 0; i < kWin; ++i) s += taps[static_cast<std::size_t>(i)] * tmp[static_cast<std::size_t>(y + i) * wo + x];
            out[static_cast<std::size_t>(y) * wo + x] = s;
        }
    return out;
}
}  // namespace

double ssim(const Image& a, const Image& b) {
    if (!a.same_size(b)) throw std::invalid_argument("ssim: shape mismatch");
    if (a.height < kWin || a.width < kWin)
        throw std::invalid_argument("ssim: image smaller than the 11x11 window");
    const auto ga = to_luma(a), gb = to_luma(b);
    const int h = a.height, w = a.width;

    std::vector<double> aa(ga.size()), bb(ga.size()), ab(ga.size());
    for (std::size_t i = 0; i < ga.size(); ++i) {
        aa[i] = ga[i] * ga[i];
        bb[i] = gb[i] * gb[i];
        ab[i] = ga[i] * gb[i];
    }
    const auto mu_a = gauss_valid(ga, h, w);
    const auto mu_b = gauss_valid(gb, h, w);
    const auto m_aa = gauss_valid(aa, h, w);
    const auto m_bb = gauss_valid(bb, h, w);
    const auto m_ab = gauss_valid(ab, h, w);

    constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;  // (K*L)^2 with L=1
    double total = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
        const double va = m_aa[i] - mu_a[i] * mu_a[i];
        const double vb = m_bb[i] - mu_b[i] * mu_b[i];
        const double cov = m_ab[i] - mu_a[i] * mu_b[i];
        total += ((2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2)) /
                 ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2));
    }
    return total / static_cast<double>(mu_a.size());
}

double feature_sim(const Image& a, const Image& b, const conditioning::GlobalEncoder& enc) {
    const auto fa = enc.encode({a})->value;
    const auto fb = enc.encode({b})->value;
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < fa.data.size(); ++i) {
        dot += fa.data[i] * fb.data[i];
        na += fa.data[i] * fa.data[i];
        nb += fb.data[i] * fb.data[i];
    }
    const double denom = std::sqrt(na) * std::sqrt(nb);
    if (denom < 1e-300) return 0.0;
    return dot / denom;
}

namespace {
// uniform-grid exact nearest neighbor over [-1,1]^3-ish clouds
class GridNN {
public:
    explicit GridNN(const recon3d::PointCloud& cloud) : pts_(&cloud.points) {
        if (cloud.points.empty()) throw std::invalid_argument("nearest-neighbor: empty cloud");
        for (int a = 0; a < 3; ++a) {
            lo_[a] = cloud.points[0][a];
            hi_[a] = cloud.points[0][a];
        }
        for (const auto& p : cloud.points)
            for (int a = 0; a < 3; ++a) {
                lo_[a] = std::min(lo_[a], p[a]);
                hi_[a] = std::max(hi_[a], p[a]);
            }
        const double extent = std::max({hi_[0] - lo_[0], hi_[1] - lo_[1], hi_[2] - lo_[2], 1e-9});
        const int target = std::max(1, static_cast<int>(std::cbrt(static_cast<double>(cloud.points.size()) / 2.0)));
        n_ = std::clamp(target, 1, 64);
        cell_ = extent / n_ + 1e-12;
        cells_.assign(static_cast<std::size_t>(n_) * n_ * n_, {});
        for (std::size_t i = 0; i < cloud.points.size(); ++i)
            cells_[cell_index(cloud.points[i])].push_back(static_cast<int>(i));
    }

    double nearest(const std::array<double, 3>& q) const {
        const int cx = coord(q[0], 0), cy = coord(q[1], 1), cz = coord(q[2], 2);
        double best = std::numeric_limits<double>::infinity();
        for (int shell = 0;; ++shell) {
            if (shell > 0 && best < (shell - 1) * cell_) break;
            bool any_cell = false;
            for (int dx = -shell; dx <= shell; ++dx)
                for (int dy = -shell; dy <= shell; ++dy)
                    for (int dz = -shell; dz <= shell; ++dz) {
                        if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != shell) continue;
                        const int x = cx + dx, y = cy + dy, z = cz + dz;
                        if (x < 0 || y < 0 || z < 0 || x >= n_ || y >= n_ || z >= n_) continue;
                        any_cell = true;
                        for (int i : cells_[(static_cast<std::size_t>(x) * n_ + y) * n_ + z]) {
                            const auto& p = (*pts_)[static_cast<std::size_t>(i)];
                            const double d = std::sqrt((p[0] - q[0]) * (p[0] - q[0]) +
                                                       (p[1] - q[1]) * (p[1] - q[1]) +
                                                       (p[2] - q[2]) * (p[2] - q[2]));
                            best = std::min(best, d);
                        }
                    }
            if (!any_cell && shell > 2 * n_) break;  // query far outside the grid
        }
        return best;
    }

private:
    int coord(double v, int a) const {
        return std::clamp(static_cast<int>((v - lo_[a]) / cell_), 0, n_ - 1);
    }
    std::size_t cell_index(const std::array<double, 3>& p) const {
        return (static_cast<std::size_t>(coord(p[0], 0)) * n_ + coord(p[1], 1)) * n_ + coord(p[2], 2);
    }

    const std::vector<std::array<double, 3>>* pts_;
    double lo_[3], hi_[3];
    double cell_ = 1.0;
    int n_ = 1;
    std::vector<std::vector<int>> cells_;
};
}  // namespace

std::vector<double> nn_distances(const recon3d::PointCloud& x, const recon3d::PointCloud& y) {
    GridNN nn(y);
    std::vector<double> out;
    out.reserve(x.points.size());
    for (const auto& p : x.points) out.push_back(nn.nearest(p));
    return out;
}

double chamfer(const recon3d::PointCloud& x, const recon3d::PointCloud& y) {
    if (x.points.empty() || y.points.empty())
        throw std::invalid_argument("chamfer: empty point cloud");
    const auto dxy = nn_distances(x, y);
    const auto dyx = nn_distances(y, x);
    double sx = 0.0, sy = 0.0;
    for (double d : dxy) sx += d;
    for (double d : dyx) sy += d;
    return 0.5 * (sx / static_cast<double>(dxy.size()) + sy / static_cast<double>(dyx.size()));
}

double fscore(const recon3d::PointCloud& x, const recon3d::PointCloud& y, double tau) {
    if (x.points.empty() || y.points.empty())
        throw std::invalid_argument("fscore: empty point cloud");
    const auto dxy = nn_distances(x, y);
    const auto dyx = nn_distances(y, x);
    double precision = 0.0, recall = 0.0;
    for (double d : dxy) precision += (d < tau) ? 1.0 : 0.0;
    for (double d : dyx) recall += (d < tau) ? 1.0 : 0.0;
    precision /= static_cast<double>(dxy.size());
    recall /= static_cast<double>(dyx.size());
    if (precision + recall <= 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

std::pair<Metric2DReport, Metric3DReport> evaluate_sample(
    const std::vector<Image>& generated, const std::vector<Image>& ground_truth,
    const recon3d::PointCloud& recon_cloud, const recon3d::PointCloud& gt_cloud,
    const conditioning::GlobalEncoder& enc, double tau, double tau_extra) {
    if (generated.size() != ground_truth.size())
        throw std::invalid_argument("evaluate_sample: view count mismatch");
    Metric2DReport r2;
    r2.view_count = static_cast<int>(generated.size());
    r2.resolution = generated.empty() ? 0 : generated[0].height;
    for (std::size_t i = 0; i < generated.size(); ++i) {
        r2.psnr_per_view.push_back(psnr(generated[i], ground_truth[i]));
        r2.ssim_per_view.push_back(ssim(generated[i], ground_truth[i]));
        r2.feature_sim_per_view.push_back(feature_sim(generated[i], ground_truth[i], enc));
    }
    auto mean = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double d : v) s += d;
        return v.empty() ? 0.0 : s / static_cast<double>(v.size());
    };
    r2.mean_psnr = mean(r2.psnr_per_view);
    r2.mean_ssim = mean(r2.ssim_per_view);
    r2.mean_feature_sim = mean(r2.feature_sim_per_view);

    Metric3DReport r3;
    r3.tau = tau;
    r3.tau_extra = tau_extra;
    r3.chamfer = chamfer(recon_cloud, gt_cloud);
    r3.fscore_tau = fscore(recon_cloud, gt_cloud, tau);
    r3.fscore_tau_extra = fscore(recon_cloud, gt_cloud, tau_extra);
    r3.recon_points = static_cast<int>(recon_cloud.points.size());
    r3.gt_points = static_cast<int>(gt_cloud.points.size());
    return {std::move(r2), std::move(r3)};
}

}  // namespace nextview::metrics
