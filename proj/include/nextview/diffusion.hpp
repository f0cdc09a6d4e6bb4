#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "nextview/rng.hpp"
#include "nextview/tensor.hpp"

namespace nextview::diffusion {

// Linear beta schedule with cumulative alpha-bar products. Steps are
// 1-based: t in [1, T], with alpha_bar(0) defined as 1 for the final
// reverse-process update.
struct NoiseSchedule {
    int T = 0;
    double beta_start = 0.0;  // configured endpoints, kept for exact
    double beta_end = 0.0;    // serialization round-trips
    std::vector<double> betas;       // [T]
    std::vector<double> alphas_bar;  // [T], strictly decreasing in (0,1)

    double alpha_bar(int t) const;  // t in [0, T]
};

// Defaults calibrated so alpha_bar(T) lands within 10% of the standard
// T=1000, beta in [1e-4, 0.02] schedule's terminal value (4.0358e-5).
constexpr int kDefaultSteps = 64;
constexpr double kDefaultBetaStart = 1e-4;
constexpr double kDefaultBetaEnd = 0.285;

NoiseSchedule linear_schedule(int T, double beta_start, double beta_end);

// x_t = sqrt(abar_t) x0 + sqrt(1-abar_t) eps
Tensor add_noise(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& s);

// v = sqrt(abar_t) eps - sqrt(1-abar_t) x0
Tensor v_target(const Tensor& x0, const Tensor& eps, int t, const NoiseSchedule& s);

// x0 = sqrt(abar_t) x_t - sqrt(1-abar_t) v
Tensor x0_from_v(const Tensor& x_t, const Tensor& v, int t, const NoiseSchedule& s);

// eps implied by (x_t, v)
Tensor eps_from_v(const Tensor& x_t, const Tensor& v, int t, const NoiseSchedule& s);

double training_loss(const Tensor& v_hat, const Tensor& v);

// Model callback: predicts v for the noised input at step t.
using ModelFn = std::function<Tensor(const Tensor& x_t, int t)>;

struct SamplerOptions {
    int num_steps = 16;     // <= T
    bool stochastic = false;  // eta=1 ancestral noise when true; default DDIM eta=0
};

// Deterministic (eta=0) reverse process from pure noise; output values in
// the signed [-1,1] image convention, clamped.
Tensor sample(const ModelFn& model, const std::vector<int>& shape, const NoiseSchedule& s,
              const SamplerOptions& opt, Rng& rng);

// The descending timestep subsequence used by sample().
std::vector<int> sampler_timesteps(int T, int num_steps);

}  // namespace nextview::diffusion
