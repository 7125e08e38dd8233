#pragma once

#include <memory>
#include <string>
#include <vector>

#include "synthval/nn.hpp"
#include "synthval/rng.hpp"
#include "synthval/tensor.hpp"

namespace synthval::codec {

struct CodecConfig {
    int f = 4;       // spatial compression factor (two 2x stages)
    int d = 4;       // latent channels
    int width = 32;  // widest conv channel count
};

/// Convolutional autoencoder pair (E, D). Images are [N,H,W,3] in [0,1];
/// latents are [N,H/f,W/f,d], unbounded. After training, per-channel latent
/// statistics are stored so diffusion can run on a normalized scale.
class Codec : public nn::Module {
public:
    Codec(const CodecConfig& cfg, Rng& rng);

    Tensor encode(const Tensor& image) const;
    Tensor decode(const Tensor& z) const;

    /// encode then (z - mean)/std per channel; requires stats.
    Tensor encode_norm(const Tensor& image) const;
    /// z*std + mean per channel then decode; requires stats.
    Tensor decode_norm(const Tensor& zn) const;
    /// Normalized latent -> raw latent (no decode).
    Tensor denormalize(const Tensor& zn) const;

    void set_latent_stats(const std::vector<float>& mean, const std::vector<float>& stddev);
    bool has_latent_stats() const;

    const CodecConfig& config() const { return cfg_; }

private:
    CodecConfig cfg_;
    // Purely convolutional stacks (no normalization layers) so both encoder
    // and decoder have a finite receptive field: edits stay local.
    nn::Conv2d e1_, e2_, e3_, e4_;
    nn::Conv2d d1_, d2_, d3_, d4_;
    Tensor latent_mean_, latent_std_, stats_flag_;
};

struct CodecTrainConfig {
    int steps = 2000;
    int batch = 16;
    float lr_max = 2e-3f;
    float lr_min = 1e-4f;
    uint64_t seed = 1;
};

struct CodecTrainStats {
    double initial_loss = 0.0;
    double final_loss = 0.0;
    double psnr_db = 0.0;  // on the training images after the final step
    std::vector<float> losses;
};

/// Trains reconstruction MSE, computes latent statistics over the training
/// images, then freezes the codec. Deterministic per (codec init, config).
/// When `pixel_weights` is given ([N,H,W,1] or [N,H,W,3], positive, aligned
/// with `train_images`) the per-pixel squared errors are scaled by it, so
/// small high-stakes regions can be emphasized over the background.
CodecTrainStats train_codec(Codec& codec, const Tensor& train_images,
                            const CodecTrainConfig& cfg,
                            const Tensor* pixel_weights = nullptr);

/// Weight map for train_codec: 1 on the background, `inside` on mask pixels.
/// masks is [N,H,W,1] with values in {0,1}; result is [N,H,W,1].
Tensor reconstruction_weights(const Tensor& masks, float inside);

/// Saves/loads codec weights + latent stats + config via the checkpoint
/// container.
void save_codec(const std::string& path, const Codec& codec);
std::unique_ptr<Codec> load_codec(const std::string& path, bool frozen = true);

/// Pixel mask [N,H,W,1] -> latent-resolution mask [N,H/f,W/f,1]; a latent
/// cell is 1 when at least half of its f x f pixel block is masked.
Tensor downscale_mask(const Tensor& mask, int f);

/// [N,H,W,1] -> [N,H,W,3] channel replication (for encoding masks).
Tensor mask_to_rgb(const Tensor& mask);

/// Peak signal-to-noise ratio in dB between two same-shape [0,1] tensors.
double psnr(const Tensor& a, const Tensor& b);

}  // namespace synthval::codec
