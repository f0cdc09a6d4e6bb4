#include "nextview/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace nextview::diffusion {

double NoiseSchedule::alpha_bar(int t) const {
    if (t == 0) return 1.0;
    if (t < 1 || t > T) throw std::invalid_argument("alpha_bar: t out of range");
    return alphas_bar[static_cast<std::size_t>(t - 1)];
}

NoiseSchedule linear_schedule(int T, double beta_start, double beta_end) {
    if (T < 2) throw std::invalid_argument("linear_schedule: T must be >= 2");
    if (!(0.0 < beta_start && beta_start < beta_end && beta_end < 1.0))
        throw std::invalid_argument("linear_schedule: need 0 < beta_start < beta_end < 1");
    NoiseSchedule s;
    s.T = T;
    s.beta_start = beta_start;
    s.beta_end = beta_end;
    s.betas.resize(T);
    s.alphas_bar.resize(T);
    double prod = 1.0;
    for (int i = 0; i < T; ++i) {
        s.betas[i] = beta_start + (beta_end - beta_start) * i / (T - 1);
        prod *= 1.0 - s.betas[i];
        s.alphas_bar[i] = prod;
    }
    return s;
}

namespace {
void check_t(int t, const NoiseSchedule& s) {
    if (t < 1 || t > s.T) throw std::invalid_argument("diffusion: t out of range");
}

Tensor combine(const Tensor& a, double ca, const Tensor& b, double cb) {
    if (a.dims != b.dims) throw std::invalid_argument("diffusion: shape mismatch");
    Tensor out(a.dims);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = ca * a.data[i] + cb * b.data[i];
    return out;
}
}  // namespace

Tensor add_noise(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& s) {
    check_t(t, s);
    const double ab = s.alpha_bar(t);
    return combine(x0, std::sqrt(ab), eps, std::sqrt(1.0 - ab));
}

Tensor v_target(const Tensor& x0, const Tensor& eps, int t, const NoiseSchedule& s) {
    check_t(t, s);
    const double ab = s.alpha_bar(t);
    return combine(eps, std::sqrt(ab), x0, -std::sqrt(1.0 - ab));
}

Tensor x0_from_v(const Tensor& x_t, const Tensor& v, int t, const NoiseSchedule& s) {
    check_t(t, s);
    const double ab = s.alpha_bar(t);
    return combine(x_t, std::sqrt(ab), v, -std::sqrt(1.0 - ab));
}

Tensor eps_from_v(const Tensor& x_t, const Tensor& v, int t, const NoiseSchedule& s) {
    check_t(t, s);
    const double ab = s.alpha_bar(t);
    return combine(x_t, std::sqrt(1.0 - ab), v, std::sqrt(ab));
}

double training_loss(const Tensor& v_hat, const Tensor& v) {
    if (v_hat.dims != v.dims) throw std::invalid_argument("training_loss: shape mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < v.data.size(); ++i) {
        const double d = v_hat.data[i] - v.data[i];
        s += d * d;
    }
    return s / static_cast<double>(v.numel());
}

std::vector<int> sampler_timesteps(int T, int num_steps) {
    if (num_steps < 1 || num_steps > T)
        throw std::invalid_argument("sampler_timesteps: need 1 <= num_steps <= T");
    // evenly spaced in [1, T], descending, always starting at T
    std::vector<int> ts(num_steps);
    for (int i = 0; i < num_steps; ++i)
        ts[i] = 1 + static_cast<int>(std::llround(static_cast<double>(T - 1) * (num_steps - 1 - i) /
                                                  std::max(1, num_steps - 1)));
    if (num_steps == 1) ts[0] = T;
    return ts;
}

Tensor sample(const ModelFn& model, const std::vector<int>& shape, const NoiseSchedule& s,
              const SamplerOptions& opt, Rng& rng) {
    const auto ts = sampler_timesteps(s.T, opt.num_steps);
    Tensor x(shape);
    for (auto& v : x.data) v = rng.normal();
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const int t = ts[i];
        const int t_next = (i + 1 < ts.size()) ? ts[i + 1] : 0;
        const Tensor v_hat = model(x, t);
        if (v_hat.dims != x.dims) throw std::invalid_argument("sample: model output shape mismatch");
        const Tensor x0 = x0_from_v(x, v_hat, t, s);
        const Tensor eps = eps_from_v(x, v_hat, t, s);
        const double ab_next = s.alpha_bar(t_next);
        if (opt.stochastic && t_next > 0) {
            // ancestral-style update with full sigma
            const double ab = s.alpha_bar(t);
            const double sigma = std::sqrt((1.0 - ab_next) / (1.0 - ab)) *
                                 std::sqrt(1.0 - ab / ab_next);
            const double dir = std::sqrt(std::max(0.0, 1.0 - ab_next - sigma * sigma));
            Tensor noise(shape);
            for (auto& nv : noise.data) nv = rng.normal();
            for (std::size_t j = 0; j < x.data.size(); ++j)
                x.data[j] = std::sqrt(ab_next) * x0.data[j] + dir * eps.data[j] +
                            sigma * noise.data[j];
        } else {
            for (std::size_t j = 0; j < x.data.size(); ++j)
                x.data[j] = std::sqrt(ab_next) * x0.data[j] + std::sqrt(1.0 - ab_next) * eps.data[j];
        }
    }
    for (auto& v : x.data) v = std::clamp(v, -1.0, 1.0);
    return x;
}

}  // namespace nextview::diffusion
