#include "synthval/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "synthval/common.hpp"

namespace synthval::diff {

NoiseSchedule NoiseSchedule::linear(int T, double beta_min, double beta_max) {
    if (T < 1) throw ConfigError("schedule needs T >= 1");
    if (!(beta_min > 0.0) || !(beta_min <= beta_max) || !(beta_max < 1.0)) {
        throw ConfigError("schedule needs 0 < beta_min <= beta_max < 1");
    }
    NoiseSchedule s;
    s.T = T;
    s.beta.assign(static_cast<size_t>(T) + 1, 0.0);
    s.alpha.assign(static_cast<size_t>(T) + 1, 0.0);
    s.alpha_bar.assign(static_cast<size_t>(T) + 1, 0.0);
    double prod = 1.0;
    for (int t = 1; t <= T; ++t) {
        const double frac = T == 1 ? 0.0 : static_cast<double>(t - 1) / (T - 1);
        s.beta[(size_t)t] = beta_min + (beta_max - beta_min) * frac;
        s.alpha[(size_t)t] = 1.0 - s.beta[(size_t)t];
        prod *= s.alpha[(size_t)t];
        s.alpha_bar[(size_t)t] = prod;
    }
    return s;
}

std::vector<int> NoiseSchedule::strided_steps(int steps) const {
    if (steps < 1) throw ConfigError("strided_steps needs steps >= 1");
    std::vector<int> out;
    if (steps == 1) {
        out.push_back(T);
        return out;
    }
    const int n = std::min(steps, T);
    for (int k = 0; k < n; ++k) {
        const double v = T - (static_cast<double>(T - 1) * k) / (n - 1);
        const int t = static_cast<int>(std::llround(v));
        if (out.empty() || out.back() != t) out.push_back(t);
    }
    return out;
}

void NoiseSchedule::check_t(int t) const {
    if (t < 1 || t > T) {
        throw std::out_of_range("timestep " + std::to_string(t) + " outside [1," +
                                std::to_string(T) + "]");
    }
}

NoiseSchedule respaced(const NoiseSchedule& s, const std::vector<int>& plan) {
    if (plan.empty()) throw ConfigError("respaced: empty timestep plan");
    for (size_t i = 0; i < plan.size(); ++i) {
        s.check_t(plan[i]);
        if (i > 0 && plan[i] >= plan[i - 1]) {
            throw ConfigError("respaced: plan must be strictly descending");
        }
    }
    const int k = static_cast<int>(plan.size());
    NoiseSchedule out;
    out.T = k;
    out.beta.assign(static_cast<size_t>(k) + 1, 0.0);
    out.alpha.assign(static_cast<size_t>(k) + 1, 0.0);
    out.alpha_bar.assign(static_cast<size_t>(k) + 1, 0.0);
    double prev = 1.0;
    for (int j = 1; j <= k; ++j) {
        // j-th selected timestep in ascending order is plan[k - j].
        const double ab = s.alpha_bar[(size_t)plan[(size_t)(k - j)]];
        out.alpha_bar[(size_t)j] = ab;
        out.alpha[(size_t)j] = ab / prev;
        out.beta[(size_t)j] = 1.0 - out.alpha[(size_t)j];
        prev = ab;
    }
    return out;
}

Tensor forward_sample(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& s) {
    s.check_t(t);
    const double ab = s.alpha_bar[(size_t)t];
    const float c0 = static_cast<float>(std::sqrt(ab));
    const float ce = static_cast<float>(std::sqrt(1.0 - ab));
    return add(affine(z0, c0, 0.0f), affine(eps, ce, 0.0f));
}

Tensor estimate_z0(const Tensor& z_t, const Tensor& eps_hat, int t, const NoiseSchedule& s) {
    s.check_t(t);
    const double ab = s.alpha_bar[(size_t)t];
    const float inv = static_cast<float>(1.0 / std::sqrt(ab));
    const float ce = static_cast<float>(std::sqrt(1.0 - ab));
    return affine(sub(z_t, affine(eps_hat, ce, 0.0f)), inv, 0.0f);
}

Tensor apply_guidance(const Tensor& eps_uncond, const Tensor& eps_cond, float scale) {
    if (scale < 0.0f) throw ConfigError("guidance scale must be >= 0");
    return add(affine(eps_uncond, 1.0f - scale, 0.0f), affine(eps_cond, scale, 0.0f));
}

Tensor ddpm_step(const Tensor& z_t, int t, const Tensor& eps_guided, const NoiseSchedule& s,
                 Rng& rng) {
    s.check_t(t);
    const double a = s.alpha[(size_t)t];
    const double b = s.beta[(size_t)t];
    const double ab = s.alpha_bar[(size_t)t];
    const float c_eps = static_cast<float>(b / std::sqrt(1.0 - ab));
    const float c_mean = static_cast<float>(1.0 / std::sqrt(a));
    Tensor mean = affine(sub(z_t, affine(eps_guided, c_eps, 0.0f)), c_mean, 0.0f);
    if (t == 1) return mean;
    const float sigma = static_cast<float>(std::sqrt(b));
    return add(mean, affine(noise_like(mean.shape(), rng), sigma, 0.0f));
}

Tensor noise_like(const Shape& shape, Rng& rng) {
    std::vector<float> data(static_cast<size_t>(numel(shape)));
    rng.fill_normal(data, 0.0f, 1.0f);
    return Tensor::from_data(shape, data);
}

}  // namespace synthval::diff
