#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "synthval/codec.hpp"
#include "synthval/conditioning.hpp"
#include "synthval/dataset.hpp"
#include "synthval/denoiser.hpp"
#include "synthval/rng.hpp"
#include "synthval/schedule.hpp"
#include "synthval/tensor.hpp"

namespace synthval::diff {

struct GenerationConfig {
    int steps = 50;
    float guidance_scale = 7.5f;
    float lambda_preserve = 1.0f;       // training-side preservation weight
    float conditioning_dropout = 0.1f;  // training-side null-embedding rate
    // sigma policy is fixed: sigma_t = sqrt(beta_t), deterministic at t = 1.
};

struct DiffusionTrainConfig {
    int steps = 20000;
    int batch = 16;
    float lr_max = 1e-4f;
    float lr_min = 1e-5f;
    float weight_decay = 1e-4f;
    float lambda_preserve = 1.0f;
    float conditioning_dropout = 0.1f;
    uint64_t seed = 2;
};

/// The trainable generation model: the latent denoiser plus the text encoder
/// it is jointly trained with. One checkpoint carries both.
class Generator : public nn::Module {
public:
    Generator(const DenoiserConfig& dcfg, int vocab_size, Rng& rng);

    Denoiser& denoiser() { return den_; }
    const Denoiser& denoiser() const { return den_; }
    cond::TextEncoder& text_encoder() { return text_; }
    const cond::TextEncoder& text_encoder() const { return text_; }

    bool trained() const { return trained_flag_.values()[0] != 0.0f; }
    void mark_trained();

private:
    Denoiser den_;
    cond::TextEncoder text_;
    Tensor trained_flag_;
};

/// Inpainting training loss. All inputs except eps_hat are treated as
/// constants; per sample and per term the squared residual is averaged over
/// all latent elements, then averaged over the batch:
///   mean(M*(eps - eps_hat))^2 + lambda * mean((1-M)*(z_t - sqrt(ab_t)*z_n))^2.
/// mask_latent is [N,h,w,1] and broadcast over the d channels.
Tensor gen_loss(const Tensor& eps, const Tensor& eps_hat, const Tensor& z_t, const Tensor& z_n,
                const Tensor& mask_latent, const std::vector<int>& ts, const NoiseSchedule& s,
                float lambda_preserve);

struct DiffusionTrainResult {
    std::vector<float> losses;  // one entry per optimization step
    float initial_window = 0.0f;  // mean loss over the first 50 steps
    float final_window = 0.0f;    // mean loss over the last 50 steps
};

/// Trains denoiser + text encoder jointly on the oracle abnormal training
/// split: latents from the frozen codec, per-sample uniform timesteps, text
/// dropout to the null embedding. The returned model is frozen.
std::unique_ptr<Generator> train_diffusion(const data::Dataset& ds, const codec::Codec& codec,
                                           const cond::PromptBank& bank,
                                           const DiffusionTrainConfig& cfg,
                                           const NoiseSchedule& schedule,
                                           DiffusionTrainResult* result = nullptr);

/// Mask-conditioned latent inpainting with classifier-free guidance.
/// z_n: [1,h,w,d] normalized normal latent; mask_latent: [1,h,w,1]. Runs
/// `steps` strided reverse steps; the conditional and unconditional branches
/// share one batched denoiser forward per step, and after every step the
/// region outside the mask is overwritten with z_n noised to the next
/// timestep (exactly z_n after the last step). An all-zero mask therefore
/// reproduces z_n bit for bit. Deterministic in (inputs, seed).
Tensor inpaint_generate(Generator& gen, const Tensor& z_n, const Tensor& mask_latent,
                        const std::string& prompt, const cond::PromptBank& bank,
                        const GenerationConfig& cfg, const NoiseSchedule& schedule, uint64_t seed);

void save_generator(const std::string& path, const Generator& gen,
                    const std::map<std::string, std::string>& extra_meta = {});
std::unique_ptr<Generator> load_generator(const std::string& path, bool frozen = true);

}  // namespace synthval::diff
