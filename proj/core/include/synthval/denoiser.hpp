#pragma once

#include <cstdint>
#include <vector>

#include "synthval/nn.hpp"
#include "synthval/rng.hpp"
#include "synthval/tensor.hpp"

namespace synthval::diff {

struct DenoiserConfig {
    int d = 4;         // latent channels (input noisy latent and output)
    int width = 32;    // channels at full latent resolution
    int mid = 48;      // channels at the bottleneck (half resolution)
    int time_dim = 32; // learned timestep embedding size
    int d_text = 16;   // text embedding size
    int T = 1000;      // schedule length the embedding table covers
};

/// Mask- and text-conditioned noise predictor over latents. U-shaped:
/// full-resolution stage, 2x down bottleneck with additive timestep and text
/// injection, skip concat, zero-initialized output head (so an untrained
/// model predicts zero noise).
class Denoiser : public nn::Module {
public:
    Denoiser(const DenoiserConfig& cfg, Rng& rng);

    /// z_t, z_n: [N,h,w,d]; mask_latent: [N,h,w,1]; ts: one timestep in
    /// [1,T] per sample; e_text: [N,d_text]. Returns eps_hat [N,h,w,d].
    Tensor forward(const Tensor& z_t, const Tensor& z_n, const Tensor& mask_latent,
                   const std::vector<int>& ts, const Tensor& e_text) const;

    /// Number of forward calls since construction (speed accounting).
    int64_t forward_count() const { return forward_count_; }
    void reset_forward_count() { forward_count_ = 0; }

    const DenoiserConfig& config() const { return cfg_; }

private:
    DenoiserConfig cfg_;
    nn::Embedding time_table_;
    nn::Linear time_proj1_, time_proj2_, text_proj_;
    nn::Conv2d c1a_, c1b_;
    nn::GroupNorm g1a_, g1b_;
    nn::Conv2d c2a_, c2b_;
    nn::GroupNorm g2a_, g2b_;
    nn::Conv2d c3_;
    nn::GroupNorm g3_;
    nn::Conv2d out_;
    mutable int64_t forward_count_ = 0;
};

}  // namespace synthval::diff
