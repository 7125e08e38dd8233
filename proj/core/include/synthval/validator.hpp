#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "synthval/codec.hpp"
#include "synthval/dataset.hpp"
#include "synthval/nn.hpp"
#include "synthval/rng.hpp"
#include "synthval/schedule.hpp"
#include "synthval/tensor.hpp"

namespace synthval::seg {

struct ValidatorConfig {
    int d = 4;         // latent channels of the codec
    int d_vision = 8;  // vision-feature channels
    int width = 32;    // segmentation U-net width at full latent resolution
    int mid = 48;      // bottleneck width
    int time_dim = 32;
    int T = 1000;
};

struct ValidatorLossWeights {
    float lambda_latent = 1.0f;
    float lambda_dice = 1.0f;
};

/// Latent segmentation network: a trainable vision encoder over the
/// (frozen-codec) latent of the image under test, a 1x1 fusion projection,
/// and a diffusion-style U-net predicting the noise on the mask latent.
class Validator : public nn::Module {
public:
    Validator(const ValidatorConfig& cfg, Rng& rng);

    /// Conv stack on z_a [N,h,w,d] -> [N,h,w,d_vision]. Purely convolutional,
    /// so features react to an input cell only within the stack's receptive
    /// field (radius 2 cells).
    Tensor vision_features(const Tensor& z_a) const;

    /// Channel concat (z_a then f_vision) followed by a learned 1x1
    /// projection back to d channels.
    Tensor fuse(const Tensor& z_a, const Tensor& f_vision) const;

    /// Reinitializes the fusion projection to pass z_a through unchanged
    /// (unit weight on the first d input channels, zero elsewhere).
    void identity_init_fusion();

    /// Segmentation denoiser: noisy mask latent z_t [N,h,w,d], fused
    /// conditioning features [N,h,w,d], per-sample timesteps -> eps_hat.
    Tensor predict_eps(const Tensor& z_t, const Tensor& f_fused,
                       const std::vector<int>& ts) const;

    int64_t forward_count() const { return forward_count_; }
    void reset_forward_count() { forward_count_ = 0; }

    bool trained() const { return trained_flag_.values()[0] != 0.0f; }
    void mark_trained();

    const ValidatorConfig& config() const { return cfg_; }

private:
    ValidatorConfig cfg_;
    // vision encoder (no normalization layers: locality contract)
    nn::Conv2d v1_, v2_, v3_;
    // fusion
    nn::Conv2d fuse_;
    // segmentation U-net
    nn::Embedding time_table_;
    nn::Linear time_proj1_, time_proj2_;
    nn::Conv2d c1a_, c1b_;
    nn::GroupNorm g1a_, g1b_;
    nn::Conv2d c2a_, c2b_;
    nn::GroupNorm g2a_, g2b_;
    nn::Conv2d c3_;
    nn::GroupNorm g3_;
    nn::Conv2d out_;
    Tensor trained_flag_;
    mutable int64_t forward_count_ = 0;
};

/// Combined segmentation loss. From (z0_mask, eps, ts) it forms z_t, derives
/// the single-step clean-latent estimate from eps_hat, and returns
///   mean|eps - eps_hat|
///   + lambda_latent * mean|z0 - z0_hat|
///   + lambda_dice * (1 - softDice(decoded soft mask, m_gt)).
/// The soft mask is the channel mean of decode(z0_hat); m_gt is the pixel
/// mask [N,H,W,1]. Gradient flows only through eps_hat.
Tensor seg_loss(const Tensor& eps, const Tensor& eps_hat, const Tensor& z0_mask,
                const std::vector<int>& ts, const diff::NoiseSchedule& s, const Tensor& m_gt,
                const codec::Codec& codec, const ValidatorLossWeights& w);

/// Single-step mask prediction: z_t is pure noise at t* = T from the fixed
/// seed policy, one segmentation forward, clean-latent estimate, decode,
/// channel mean, binarize at 0.5. Returns a strictly binary [1,H,W,1] mask.
Tensor predict_mask(const Validator& v, const codec::Codec& codec, const Tensor& z_a,
                    const diff::NoiseSchedule& s, uint64_t seed = 0);

/// Ablation path: full reverse diffusion over the mask latent (`steps`
/// strided timesteps, one forward each) instead of the single-step estimate.
Tensor predict_mask_multistep(const Validator& v, const codec::Codec& codec, const Tensor& z_a,
                              int steps, const diff::NoiseSchedule& s, uint64_t seed = 0);

struct ValidatorTrainConfig {
    int steps = 20000;
    int batch = 16;
    float lr_max = 1e-4f;
    float lr_min = 1e-5f;
    float weight_decay = 1e-4f;
    ValidatorLossWeights weights;
    uint64_t seed = 3;
};

struct ValidatorTrainResult {
    std::vector<float> losses;
    float initial_window = 0.0f;
    float final_window = 0.0f;
};

/// Trains on the oracle abnormal training split only (never on generated
/// samples). The codec stays frozen; the returned model is frozen.
std::unique_ptr<Validator> train_validator(const data::Dataset& ds, const codec::Codec& codec,
                                           const ValidatorTrainConfig& cfg,
                                           const diff::NoiseSchedule& schedule,
                                           ValidatorTrainResult* result = nullptr);

void save_validator(const std::string& path, const Validator& v,
                    const std::map<std::string, std::string>& extra_meta = {});
std::unique_ptr<Validator> load_validator(const std::string& path, bool frozen = true);

}  // namespace synthval::seg
