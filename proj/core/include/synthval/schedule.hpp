#pragma once

#include <vector>

#include "synthval/rng.hpp"
#include "synthval/tensor.hpp"

namespace synthval::diff {

/// Linear-beta diffusion schedule. Arrays are 1-indexed by timestep
/// (index 0 is unused) and kept in double precision; tensor ops receive the
/// coefficients cast once.
struct NoiseSchedule {
    int T = 0;
    std::vector<double> beta;       // beta[t], t in [1,T]
    std::vector<double> alpha;      // 1 - beta[t]
    std::vector<double> alpha_bar;  // prod_{s<=t} alpha[s]

    static NoiseSchedule linear(int T, double beta_min, double beta_max);

    /// `steps` timesteps, evenly strided from T down to 1, deduplicated.
    std::vector<int> strided_steps(int steps) const;

    void check_t(int t) const;
};

/// The strided timesteps as a DDPM chain of their own: alpha_bar'[k] equals
/// the original alpha_bar at the k-th selected timestep (ascending), and
/// beta'[k] = 1 - alpha_bar'[k]/alpha_bar'[k-1]. Over the full timestep list
/// this reproduces the original schedule; over a stride it gives the step
/// coefficients that traverse the whole noise range in `plan.size()` steps.
/// `plan` must be descending unique timesteps as from strided_steps().
NoiseSchedule respaced(const NoiseSchedule& s, const std::vector<int>& plan);

/// z_t = sqrt(alpha_bar_t) * z0 + sqrt(1 - alpha_bar_t) * eps.
Tensor forward_sample(const Tensor& z0, int t, const Tensor& eps, const NoiseSchedule& s);

/// Single-step clean-latent estimate:
/// z0_hat = (z_t - sqrt(1 - alpha_bar_t) * eps_hat) / sqrt(alpha_bar_t).
Tensor estimate_z0(const Tensor& z_t, const Tensor& eps_hat, int t, const NoiseSchedule& s);

/// Classifier-free guidance, computed as the lerp (1-s)*uncond + s*cond so
/// the s=0 and s=1 endpoints are bit-exact.
Tensor apply_guidance(const Tensor& eps_uncond, const Tensor& eps_cond, float scale);

/// One reverse step: mean (z_t - beta_t/sqrt(1-alpha_bar_t) * eps)/sqrt(alpha_t),
/// plus sqrt(beta_t) * n noise for t > 1; t = 1 is deterministic.
Tensor ddpm_step(const Tensor& z_t, int t, const Tensor& eps_guided, const NoiseSchedule& s,
                 Rng& rng);

/// Standard-normal tensor of the given shape drawn from `rng`.
Tensor noise_like(const Shape& shape, Rng& rng);

}  // namespace synthval::diff
