#pragma once

#include <array>
#include <vector>

#include "nextview/conditioning.hpp"
#include "nextview/image.hpp"
#include "nextview/recon3d.hpp"

namespace nextview::metrics {

// 10*log10(1/MSE) over [0,1] images, capped at 99 dB (identical inputs).
double psnr(const Image& a, const Image& b);

// Mean local SSIM on the luma channel (weights 0.299/0.587/0.114),
// 11x11 Gaussian window with sigma 1.5, K1=0.01, K2=0.03, dynamic range 1,
// averaged over fully-valid window positions.
double ssim(const Image& a, const Image& b);

// Cosine similarity of GlobalEncoder features.
double feature_sim(const Image& a, const Image& b, const conditioning::GlobalEncoder& enc);

// Unsquared symmetric chamfer distance:
// 0.5 * (mean_x min_y |x-y| + mean_y min_x |x-y|).
double chamfer(const recon3d::PointCloud& x, const recon3d::PointCloud& y);

// Harmonic mean of precision (fraction of x within tau of y) and recall.
double fscore(const recon3d::PointCloud& x, const recon3d::PointCloud& y, double tau = 0.02);

// Exact nearest-neighbor distances from each point of x to the cloud y.
std::vector<double> nn_distances(const recon3d::PointCloud& x, const recon3d::PointCloud& y);

struct Metric2DReport {
    std::vector<double> psnr_per_view;
    std::vector<double> ssim_per_view;
    std::vector<double> feature_sim_per_view;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
    double mean_feature_sim = 0.0;
    int view_count = 0;
    int resolution = 0;
};

struct Metric3DReport {
    double chamfer = 0.0;  // unsquared bidirectional mean-of-means, cube units
    double fscore_tau = 0.0;
    double fscore_tau_extra = 0.0;
    double tau = 0.02;
    double tau_extra = 0.05;
    int recon_points = 0;
    int gt_points = 0;
};

std::pair<Metric2DReport, Metric3DReport> evaluate_sample(
    const std::vector<Image>& generated, const std::vector<Image>& ground_truth,
    const recon3d::PointCloud& recon_cloud, const recon3d::PointCloud& gt_cloud,
    const conditioning::GlobalEncoder& enc, double tau = 0.02, double tau_extra = 0.05);

}  // namespace nextview::metrics
