#include "synthval/diffusion.hpp"

#include <cmath>
#include <cstddef>
#include <string>

#include "synthval/common.hpp"
#include "synthval/checkpoint.hpp"
#include "synthval/optim.hpp"

namespace synthval::diff {

namespace {

// Batch-axis duplication and masked blending are sampling-time data moves on
// constant tensors, so they work on raw values.
Tensor repeat_batch2(const Tensor& x) {
    Shape s = x.shape();
    const auto v = x.values();
    std::vector<float> out(v.begin(), v.end());
    out.insert(out.end(), v.begin(), v.end());
    s[0] *= 2;
    return Tensor::from_data(std::move(s), std::move(out));
}

// m*a + (1-m)*b with the [N,h,w,1] mask broadcast over channels. Exact at
// the binary endpoints, so masked-out sites carry b bit for bit.
Tensor blend_mask(const Tensor& a, const Tensor& b, const Tensor& mask) {
    const auto av = a.values(), bv = b.values(), mv = mask.values();
    const int d = a.dim(3);
    std::vector<float> out(av.size());
    for (size_t i = 0; i < out.size(); ++i) {
        const float m = mv[i / d];
        out[i] = m * av[i] + (1.0f - m) * bv[i];
    }
    return Tensor::from_data(a.shape(), std::move(out));
}

// Per-sample scalar expanded over [N,h,w,d].
Tensor per_sample_const(const std::vector<double>& per, const Shape& shape) {
    const int64_t stride = numel(shape) / shape[0];
    std::vector<float> v(numel(shape));
    for (int n = 0; n < shape[0]; ++n) {
        std::fill_n(v.begin() + n * stride, stride, static_cast<float>(per[n]));
    }
    return Tensor::from_data(shape, std::move(v));
}

// Mask [N,h,w,1] replicated over d channels; optionally inverted.
Tensor expand_mask(const Tensor& mask, int d, bool invert) {
    const auto mv = mask.values();
    std::vector<float> v(mv.size() * d);
    for (size_t i = 0; i < mv.size(); ++i) {
        const float m = invert ? 1.0f - mv[i] : mv[i];
        std::fill_n(v.begin() + static_cast<int64_t>(i) * d, d, m);
    }
    Shape s = mask.shape();
    s[3] = d;
    return Tensor::from_data(std::move(s), std::move(v));
}

void check_latent_mask(const Tensor& z, const Tensor& mask, const char* who) {
    if (z.ndim() != 4) {
        throw ConfigError(std::string(who) + ": latent must be [N,h,w,d], got " +
                          shape_str(z.shape()));
    }
    if (mask.ndim() != 4 || mask.dim(0) != z.dim(0) || mask.dim(1) != z.dim(1) ||
        mask.dim(2) != z.dim(2) || mask.dim(3) != 1) {
        throw ConfigError(std::string(who) + ": mask must be [N,h,w,1] matching the latent, got " +
                          shape_str(mask.shape()));
    }
}

// Chunked encode_norm keeps the peak activation footprint bounded when
// preparing a full training split.
Tensor encode_all_norm(const codec::Codec& codec, const Tensor& images) {
    autograd::NoGradGuard ng;
    const int n = images.dim(0);
    const int chunk = 64;
    std::vector<float> out;
    Shape zshape;
    for (int at = 0; at < n; at += chunk) {
        std::vector<int> rows;
        for (int i = at; i < std::min(n, at + chunk); ++i) rows.push_back(i);
        Tensor z = codec.encode_norm(take_rows(images, rows));
        zshape = z.shape();
        const auto v = z.values();
        out.insert(out.end(), v.begin(), v.end());
    }
    zshape[0] = n;
    return Tensor::from_data(std::move(zshape), std::move(out));
}

}  // namespace

Generator::Generator(const DenoiserConfig& dcfg, int vocab_size, Rng& rng)
    : den_(dcfg, rng), text_(vocab_size, dcfg.d_text, rng), trained_flag_(Tensor::zeros({1})) {
    register_module("denoiser", den_);
    register_module("text", text_);
    trained_flag_ = register_buffer("trained", trained_flag_);
}

void Generator::mark_trained() { trained_flag_.raw()[0] = 1.0f; }

Tensor gen_loss(const Tensor& eps, const Tensor& eps_hat, const Tensor& z_t, const Tensor& z_n,
                const Tensor& mask_latent, const std::vector<int>& ts, const NoiseSchedule& s,
                float lambda_preserve) {
    check_latent_mask(eps, mask_latent, "gen_loss");
    for (const Tensor* t : {&eps_hat, &z_t, &z_n}) {
        if (!same_shape(t->shape(), eps.shape())) {
            throw ConfigError("gen_loss: latent tensors disagree in shape: " +
                              shape_str(t->shape()) + " vs " + shape_str(eps.shape()));
        }
    }
    const int n = eps.dim(0);
    if (n == 0) throw ConfigError("gen_loss: empty batch");
    if (static_cast<int>(ts.size()) != n) {
        throw ConfigError("gen_loss: need one timestep per sample");
    }
    if (!(lambda_preserve >= 0.0f) || !std::isfinite(lambda_preserve)) {
        throw ConfigError("gen_loss: lambda_preserve must be finite and >= 0");
    }
    std::vector<double> sqrt_ab(n);
    for (int i = 0; i < n; ++i) {
        s.check_t(ts[i]);
        sqrt_ab[i] = std::sqrt(s.alpha_bar[ts[i]]);
    }
    const int d = eps.dim(3);
    Tensor mask_d = expand_mask(mask_latent, d, /*invert=*/false);
    Tensor inv_d = expand_mask(mask_latent, d, /*invert=*/true);
    Tensor coef = per_sample_const(sqrt_ab, eps.shape());

    Tensor noise_term = mean(square(mul(sub(eps, eps_hat), mask_d)));
    Tensor preserve_term = mean(square(mul(sub(z_t, mul(z_n, coef)), inv_d)));
    return add(noise_term, affine(preserve_term, lambda_preserve, 0.0f));
}

std::unique_ptr<Generator> train_diffusion(const data::Dataset& ds, const codec::Codec& codec,
                                           const cond::PromptBank& bank,
                                           const DiffusionTrainConfig& cfg,
                                           const NoiseSchedule& schedule,
                                           DiffusionTrainResult* result) {
    if (cfg.steps < 0 || cfg.batch <= 0) {
        throw ConfigError("train_diffusion: steps must be >= 0 and batch > 0");
    }
    if (!(cfg.lr_max >= 0.0f) || !(cfg.lr_min >= 0.0f) || !(cfg.conditioning_dropout >= 0.0f) ||
        cfg.conditioning_dropout > 1.0f) {
        throw ConfigError("train_diffusion: invalid learning rate or dropout");
    }
    const auto recs = ds.select("train", /*abnormal=*/true);
    if (recs.empty()) throw ConfigError("train_diffusion: no abnormal training records");

    Tensor z0 = encode_all_norm(codec, data::load_images(ds, recs));
    Tensor zn = encode_all_norm(codec, data::load_base_images(ds, recs));
    Tensor mlat = codec::downscale_mask(data::load_masks(ds, recs), codec.config().f);
    // Every phrasing the bank has for a sample's spec is a valid caption for
    // it, so training rotates through all of them; otherwise alias tokens
    // would never receive gradient and alias prompts would embed poorly at
    // sampling time.
    std::vector<std::vector<std::vector<int>>> prompt_ids(recs.size());
    for (size_t i = 0; i < recs.size(); ++i) {
        const toy::LesionSpec spec = bank.prompt_to_spec(recs[i]->prompt);
        for (const auto& entry : bank.entries()) {
            if (!entry.is_negative && entry.spec == spec) {
                prompt_ids[i].push_back(bank.tokenize(entry.text));
            }
        }
    }

    DenoiserConfig dcfg;
    dcfg.d = codec.config().d;
    dcfg.T = schedule.T;
    Rng init_rng = Rng::substream(cfg.seed, "generator-init");
    auto gen = std::make_unique<Generator>(dcfg, static_cast<int>(bank.vocabulary().size()),
                                           init_rng);

    optim::AdamWConfig ocfg;
    ocfg.weight_decay = cfg.weight_decay;
    optim::AdamW opt(*gen, ocfg);
    Rng rng = Rng::substream(cfg.seed, "diffusion-train");

    const int n = static_cast<int>(recs.size());
    const int64_t latent_elems = numel({1, z0.dim(1), z0.dim(2), z0.dim(3)});
    std::vector<float> losses;
    losses.reserve(cfg.steps);
    for (int step = 0; step < cfg.steps; ++step) {
        std::vector<int> idx(cfg.batch);
        std::vector<int> ts(cfg.batch);
        std::vector<std::vector<int>> bags(cfg.batch);
        for (int b = 0; b < cfg.batch; ++b) {
            idx[b] = rng.uniform_int(0, n - 1);
            ts[b] = rng.uniform_int(1, schedule.T);
            if (rng.uniform() >= cfg.conditioning_dropout) {
                const auto& phrasings = prompt_ids[idx[b]];
                bags[b] =
                    phrasings[(size_t)rng.uniform_int(0, (int)phrasings.size() - 1)];
            }
        }
        Tensor z0b = take_rows(z0, idx);
        Tensor znb = take_rows(zn, idx);
        Tensor mb = take_rows(mlat, idx);
        std::vector<float> noise(static_cast<size_t>(cfg.batch) * latent_elems);
        rng.fill_normal(noise);
        Tensor eps = Tensor::from_data(z0b.shape(), std::move(noise));
        std::vector<double> c0(cfg.batch), ce(cfg.batch);
        for (int b = 0; b < cfg.batch; ++b) {
            c0[b] = std::sqrt(schedule.alpha_bar[ts[b]]);
            ce[b] = std::sqrt(1.0 - schedule.alpha_bar[ts[b]]);
        }
        Tensor z_t = add(mul(z0b, per_sample_const(c0, z0b.shape())),
                         mul(eps, per_sample_const(ce, z0b.shape())));

        Tensor e_text = gen->text_encoder().encode_ids(bags);
        Tensor eps_hat = gen->denoiser().forward(z_t, znb, mb, ts, e_text);
        Tensor loss = gen_loss(eps, eps_hat, z_t, znb, mb, ts, schedule, cfg.lambda_preserve);
        losses.push_back(loss.item());
        loss.backward();
        opt.step(optim::cosine_lr(step, cfg.steps, cfg.lr_max, cfg.lr_min));
    }

    gen->mark_trained();
    gen->freeze();
    if (result) {
        result->losses = losses;
        const int win = std::min<int>(50, static_cast<int>(losses.size()));
        double head = 0.0, tail = 0.0;
        for (int i = 0; i < win; ++i) {
            head += losses[i];
            tail += losses[losses.size() - 1 - i];
        }
        result->initial_window = win > 0 ? static_cast<float>(head / win) : 0.0f;
        result->final_window = win > 0 ? static_cast<float>(tail / win) : 0.0f;
    }
    return gen;
}

Tensor inpaint_generate(Generator& gen, const Tensor& z_n, const Tensor& mask_latent,
                        const std::string& prompt, const cond::PromptBank& bank,
                        const GenerationConfig& cfg, const NoiseSchedule& schedule,
                        uint64_t seed) {
    if (!gen.trained()) {
        throw ConfigError("inpaint_generate: generator is untrained; train or load a checkpoint");
    }
    check_latent_mask(z_n, mask_latent, "inpaint_generate");
    if (z_n.dim(0) != 1) {
        throw ConfigError("inpaint_generate: expects a single sample [1,h,w,d]");
    }
    if (z_n.dim(3) != gen.denoiser().config().d) {
        throw ConfigError("inpaint_generate: latent channel count does not match the model");
    }
    if (cfg.steps < 1) throw ConfigError("inpaint_generate: steps must be >= 1");

    autograd::NoGradGuard ng;
    // The strided timesteps run as their own DDPM chain (respaced
    // coefficients); the denoiser is queried at the original timestep so its
    // embedding matches the noise level the latent actually carries.
    const std::vector<int> plan = schedule.strided_steps(cfg.steps);
    const NoiseSchedule sub = respaced(schedule, plan);
    Rng rng_init = Rng::substream(seed, "inpaint-init");
    Rng rng_step = Rng::substream(seed, "inpaint-step");
    Rng rng_keep = Rng::substream(seed, "inpaint-keep");

    Tensor z = noise_like(z_n.shape(), rng_init);
    Tensor e2 = gen.text_encoder().encode({prompt, std::string()}, bank);  // [cond; null]
    Tensor zn2 = repeat_batch2(z_n);
    Tensor m2 = repeat_batch2(mask_latent);

    for (int k = sub.T; k >= 1; --k) {
        const int t_orig = plan[(size_t)(sub.T - k)];
        Tensor eps2 = gen.denoiser().forward(repeat_batch2(z), zn2, m2, {t_orig, t_orig}, e2);
        Tensor eps_c = take_rows(eps2, {0});
        Tensor eps_u = take_rows(eps2, {1});
        Tensor eps_g = apply_guidance(eps_u, eps_c, cfg.guidance_scale);
        z = ddpm_step(z, k, eps_g, sub, rng_step);
        Tensor keep = z_n;
        if (k > 1) {
            keep = forward_sample(z_n, k - 1, noise_like(z_n.shape(), rng_keep), sub);
        }
        z = blend_mask(z, keep, mask_latent);
    }
    return z;
}

void save_generator(const std::string& path, const Generator& gen,
                    const std::map<std::string, std::string>& extra_meta) {
    const DenoiserConfig& dc = gen.denoiser().config();
    std::map<std::string, std::string> meta = extra_meta;
    meta["arch"] = "generator-v1";
    meta["d"] = std::to_string(dc.d);
    meta["width"] = std::to_string(dc.width);
    meta["mid"] = std::to_string(dc.mid);
    meta["time_dim"] = std::to_string(dc.time_dim);
    meta["d_text"] = std::to_string(dc.d_text);
    meta["T"] = std::to_string(dc.T);
    meta["vocab"] = std::to_string(gen.text_encoder().vocab_size());
    ckpt::save_module(path, gen, meta);
}

std::unique_ptr<Generator> load_generator(const std::string& path, bool frozen) {
    const ckpt::Checkpoint c = ckpt::Checkpoint::load(path);
    if (!c.has("meta/arch") || c.str("meta/arch") != "generator-v1") {
        throw ConfigError("checkpoint at " + path + " is not a generator");
    }
    DenoiserConfig dc;
    dc.d = std::stoi(c.str("meta/d"));
    dc.width = std::stoi(c.str("meta/width"));
    dc.mid = std::stoi(c.str("meta/mid"));
    dc.time_dim = std::stoi(c.str("meta/time_dim"));
    dc.d_text = std::stoi(c.str("meta/d_text"));
    dc.T = std::stoi(c.str("meta/T"));
    const int vocab = std::stoi(c.str("meta/vocab"));
    Rng rng(0);
    auto gen = std::make_unique<Generator>(dc, vocab, rng);
    ckpt::load_module_state(c, *gen);
    if (frozen) gen->freeze();
    return gen;
}

}  // namespace synthval::diff
