#include "synthval/validator.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "synthval/checkpoint.hpp"
#include "synthval/common.hpp"
#include "synthval/optim.hpp"

namespace synthval::seg {

namespace {

void check_cfg(const ValidatorConfig& c) {
    if (c.d <= 0 || c.d_vision <= 0 || c.width <= 0 || c.mid <= 0 || c.time_dim <= 0 ||
        c.T <= 0) {
        throw ConfigError("validator config dimensions must be positive");
    }
    if (c.width % 4 != 0 || c.mid % 4 != 0) {
        throw ConfigError("validator channel widths must be divisible by 4 (norm groups)");
    }
}

Tensor per_sample_const(const std::vector<double>& per, const Shape& shape) {
    const int64_t stride = numel(shape) / shape[0];
    std::vector<float> v(numel(shape));
    for (int n = 0; n < shape[0]; ++n) {
        std::fill_n(v.begin() + n * stride, stride, static_cast<float>(per[n]));
    }
    return Tensor::from_data(shape, std::move(v));
}

// Fixed 1/3 channel-averaging kernel; turns a decoded RGB mask into a
// single-channel soft mask differentiably.
Tensor channel_mean_rgb(const Tensor& rgb) {
    static const Tensor kAvg = Tensor::from_data({1, 1, 3, 1},
                                                 {1.0f / 3.0f, 1.0f / 3.0f, 1.0f / 3.0f});
    return conv2d(rgb, kAvg, Tensor(), 0);
}

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

Validator::Validator(const ValidatorConfig& cfg, Rng& rng)
    : cfg_((check_cfg(cfg), cfg)),
      v1_(cfg.d, 16, 3, 1, rng),
      v2_(16, 16, 3, 1, rng),
      v3_(16, cfg.d_vision, 1, 0, rng),
      fuse_(cfg.d + cfg.d_vision, cfg.d, 1, 0, rng),
      time_table_(cfg.T, cfg.time_dim, rng),
      time_proj1_(cfg.time_dim, cfg.width, rng),
      time_proj2_(cfg.time_dim, cfg.mid, rng),
      c1a_(2 * cfg.d, cfg.width, 3, 1, rng),
      c1b_(cfg.width, cfg.width, 3, 1, rng),
      g1a_(cfg.width, 4),
      g1b_(cfg.width, 4),
      c2a_(cfg.width, cfg.mid, 3, 1, rng),
      c2b_(cfg.mid, cfg.mid, 3, 1, rng),
      g2a_(cfg.mid, 4),
      g2b_(cfg.mid, 4),
      c3_(cfg.width + cfg.mid, cfg.width, 3, 1, rng),
      g3_(cfg.width, 4),
      out_(cfg.width, cfg.d, 1, 0, rng, /*zero_init=*/true),
      trained_flag_(Tensor::zeros({1})) {
    register_module("v1", v1_);
    register_module("v2", v2_);
    register_module("v3", v3_);
    register_module("fuse", fuse_);
    register_module("time_table", time_table_);
    register_module("time_proj1", time_proj1_);
    register_module("time_proj2", time_proj2_);
    register_module("c1a", c1a_);
    register_module("c1b", c1b_);
    register_module("g1a", g1a_);
    register_module("g1b", g1b_);
    register_module("c2a", c2a_);
    register_module("c2b", c2b_);
    register_module("g2a", g2a_);
    register_module("g2b", g2b_);
    register_module("c3", c3_);
    register_module("g3", g3_);
    register_module("out", out_);
    trained_flag_ = register_buffer("trained", trained_flag_);
}

void Validator::mark_trained() { trained_flag_.raw()[0] = 1.0f; }

Tensor Validator::vision_features(const Tensor& z_a) const {
    if (z_a.ndim() != 4 || z_a.dim(3) != cfg_.d) {
        throw ConfigError("vision_features: latent must be [N,h,w," + std::to_string(cfg_.d) +
                          "], got " + shape_str(z_a.shape()));
    }
    return v3_.forward(silu(v2_.forward(silu(v1_.forward(z_a)))));
}

Tensor Validator::fuse(const Tensor& z_a, const Tensor& f_vision) const {
    if (z_a.ndim() != 4 || f_vision.ndim() != 4 || z_a.dim(0) != f_vision.dim(0) ||
        z_a.dim(1) != f_vision.dim(1) || z_a.dim(2) != f_vision.dim(2)) {
        throw ConfigError("fuse: spatial dims of z_a and f_vision must match");
    }
    if (z_a.dim(3) != cfg_.d || f_vision.dim(3) != cfg_.d_vision) {
        throw ConfigError("fuse: channel counts must be (d, d_vision)");
    }
    return fuse_.forward(concat_channels(z_a, f_vision));
}

void Validator::identity_init_fusion() {
    auto params = fuse_.named_parameters();
    for (auto& [name, t] : params) {
        std::span<float> v = t.raw();
        std::fill(v.begin(), v.end(), 0.0f);
        if (t.ndim() == 4) {  // kernel [1,1,d+d_vision,d]
            for (int i = 0; i < cfg_.d; ++i) {
                v[static_cast<size_t>(i) * cfg_.d + i] = 1.0f;
            }
        }
    }
}

Tensor Validator::predict_eps(const Tensor& z_t, const Tensor& f_fused,
                              const std::vector<int>& ts) const {
    if (z_t.ndim() != 4 || z_t.dim(3) != cfg_.d) {
        throw ConfigError("predict_eps: z_t must be [N,h,w," + std::to_string(cfg_.d) + "]");
    }
    if (!same_shape(z_t.shape(), f_fused.shape())) {
        throw ConfigError("predict_eps: fused features must match z_t shape");
    }
    if (z_t.dim(1) % 2 != 0 || z_t.dim(2) % 2 != 0) {
        throw ConfigError("predict_eps: latent height/width must be even");
    }
    if (static_cast<int>(ts.size()) != z_t.dim(0)) {
        throw ConfigError("predict_eps: need one timestep per sample");
    }
    std::vector<int> ids(ts.size());
    for (size_t i = 0; i < ts.size(); ++i) {
        if (ts[i] < 1 || ts[i] > cfg_.T) {
            throw std::out_of_range("predict_eps: timestep " + std::to_string(ts[i]) +
                                    " outside [1," + std::to_string(cfg_.T) + "]");
        }
        ids[i] = ts[i] - 1;
    }
    ++forward_count_;

    Tensor x = concat_channels(z_t, f_fused);
    Tensor temb = time_table_.forward(ids);

    Tensor hfull = c1a_.forward(x);
    hfull = broadcast_add_channels(hfull, time_proj1_.forward(temb));
    hfull = silu(g1a_.forward(hfull));
    hfull = silu(g1b_.forward(c1b_.forward(hfull)));
    Tensor skip = hfull;

    Tensor hm = c2a_.forward(downsample2x(hfull));
    hm = broadcast_add_channels(hm, time_proj2_.forward(temb));
    hm = silu(g2a_.forward(hm));
    hm = silu(g2b_.forward(c2b_.forward(hm)));

    Tensor hd = concat_channels(skip, upsample2x(hm));
    hd = silu(g3_.forward(c3_.forward(hd)));
    return out_.forward(hd);
}

Tensor seg_loss(const Tensor& eps, const Tensor& eps_hat, const Tensor& z0_mask,
                const std::vector<int>& ts, const diff::NoiseSchedule& s, const Tensor& m_gt,
                const codec::Codec& codec, const ValidatorLossWeights& w) {
    if (!same_shape(eps.shape(), eps_hat.shape()) || !same_shape(eps.shape(), z0_mask.shape())) {
        throw ConfigError("seg_loss: eps, eps_hat and z0_mask must share a shape");
    }
    const int n = eps.dim(0);
    if (n == 0) throw ConfigError("seg_loss: empty batch");
    if (static_cast<int>(ts.size()) != n) throw ConfigError("seg_loss: one timestep per sample");
    if (!(w.lambda_latent >= 0.0f) || !(w.lambda_dice >= 0.0f)) {
        throw ConfigError("seg_loss: loss weights must be >= 0");
    }
    if (m_gt.ndim() != 4 || m_gt.dim(0) != n || m_gt.dim(3) != 1) {
        throw ConfigError("seg_loss: ground-truth mask must be [N,H,W,1]");
    }
    std::vector<double> c0(n), ce(n), inv(n);
    for (int i = 0; i < n; ++i) {
        s.check_t(ts[i]);
        const double ab = s.alpha_bar[(size_t)ts[i]];
        c0[i] = std::sqrt(ab);
        ce[i] = std::sqrt(1.0 - ab);
        inv[i] = 1.0 / std::sqrt(ab);
    }
    Tensor tc0 = per_sample_const(c0, eps.shape());
    Tensor tce = per_sample_const(ce, eps.shape());
    Tensor tinv = per_sample_const(inv, eps.shape());

    Tensor z_t = add(mul(z0_mask, tc0), mul(eps, tce));
    Tensor z0_hat = mul(sub(z_t, mul(eps_hat, tce)), tinv);

    Tensor loss = mean(abs_ew(sub(eps, eps_hat)));
    if (w.lambda_latent > 0.0f) {
        loss = add(loss, affine(mean(abs_ew(sub(z0_mask, z0_hat))), w.lambda_latent, 0.0f));
    }
    if (w.lambda_dice > 0.0f) {
        Tensor soft = channel_mean_rgb(codec.decode_norm(z0_hat));  // [N,H,W,1]
        if (!same_shape(soft.shape(), m_gt.shape())) {
            throw ConfigError("seg_loss: decoded mask shape " + shape_str(soft.shape()) +
                              " does not match ground truth " + shape_str(m_gt.shape()));
        }
        const float fudge = 1e-6f;
        Tensor inter = sum(mul(soft, m_gt));
        Tensor denom = add(sum(soft), sum(m_gt));
        Tensor dice = div_ew(affine(inter, 2.0f, fudge), affine(denom, 1.0f, fudge));
        loss = add(loss, affine(dice, -w.lambda_dice, w.lambda_dice));  // + w*(1 - dice)
    }
    return loss;
}

namespace {

Tensor binarize_decoded(const codec::Codec& codec, const Tensor& z0_hat) {
    Tensor soft = channel_mean_rgb(codec.decode_norm(z0_hat));
    const auto v = soft.values();
    std::vector<float> bin(v.size());
    for (size_t i = 0; i < v.size(); ++i) bin[i] = v[i] > 0.5f ? 1.0f : 0.0f;
    return Tensor::from_data(soft.shape(), std::move(bin));
}

void check_predict_inputs(const Validator& v, const Tensor& z_a) {
    if (!v.trained()) {
        throw ConfigError("predict_mask: validator is untrained; train or load a checkpoint");
    }
    if (z_a.ndim() != 4 || z_a.dim(0) != 1 || z_a.dim(3) != v.config().d) {
        throw ConfigError("predict_mask: expects a single latent [1,h,w,d], got " +
                          shape_str(z_a.shape()));
    }
}

}  // namespace

Tensor predict_mask(const Validator& v, const codec::Codec& codec, const Tensor& z_a,
                    const diff::NoiseSchedule& s, uint64_t seed) {
    check_predict_inputs(v, z_a);
    autograd::NoGradGuard ng;
    Rng rng = Rng::substream(seed, "predict-mask");
    Tensor z_t = diff::noise_like(z_a.shape(), rng);
    Tensor fused = v.fuse(z_a, v.vision_features(z_a));
    Tensor eps_hat = v.predict_eps(z_t, fused, {s.T});
    Tensor z0_hat = diff::estimate_z0(z_t, eps_hat, s.T, s);
    return binarize_decoded(codec, z0_hat);
}

Tensor predict_mask_multistep(const Validator& v, const codec::Codec& codec, const Tensor& z_a,
                              int steps, const diff::NoiseSchedule& s, uint64_t seed) {
    check_predict_inputs(v, z_a);
    if (steps < 1) throw ConfigError("predict_mask_multistep: steps must be >= 1");
    autograd::NoGradGuard ng;
    const std::vector<int> plan = s.strided_steps(steps);
    const diff::NoiseSchedule sub = diff::respaced(s, plan);
    Rng rng_init = Rng::substream(seed, "predict-mask-init");
    Rng rng_step = Rng::substream(seed, "predict-mask-step");
    Tensor z = diff::noise_like(z_a.shape(), rng_init);
    Tensor fused = v.fuse(z_a, v.vision_features(z_a));
    for (int k = sub.T; k >= 1; --k) {
        const int t_orig = plan[(size_t)(sub.T - k)];
        Tensor eps_hat = v.predict_eps(z, fused, {t_orig});
        z = diff::ddpm_step(z, k, eps_hat, sub, rng_step);
    }
    return binarize_decoded(codec, z);
}

std::unique_ptr<Validator> train_validator(const data::Dataset& ds, const codec::Codec& codec,
                                           const ValidatorTrainConfig& cfg,
                                           const diff::NoiseSchedule& schedule,
                                           ValidatorTrainResult* result) {
    if (cfg.steps < 0 || cfg.batch <= 0) {
        throw ConfigError("train_validator: steps must be >= 0 and batch > 0");
    }
    const auto recs = ds.select("train", /*abnormal=*/true);
    if (recs.empty()) throw ConfigError("train_validator: no abnormal training records");

    Tensor z_a = encode_all_norm(codec, data::load_images(ds, recs));
    Tensor m_gt = data::load_masks(ds, recs);
    Tensor z0m = encode_all_norm(codec, codec::mask_to_rgb(m_gt));

    ValidatorConfig vcfg;
    vcfg.d = codec.config().d;
    vcfg.T = schedule.T;
    Rng init_rng = Rng::substream(cfg.seed, "validator-init");
    auto model = std::make_unique<Validator>(vcfg, init_rng);

    optim::AdamWConfig ocfg;
    ocfg.weight_decay = cfg.weight_decay;
    optim::AdamW opt(*model, ocfg);
    Rng rng = Rng::substream(cfg.seed, "validator-train");

    const int n = static_cast<int>(recs.size());
    const int64_t latent_elems = numel({1, z0m.dim(1), z0m.dim(2), z0m.dim(3)});
    std::vector<float> losses;
    losses.reserve(cfg.steps);
    for (int step = 0; step < cfg.steps; ++step) {
        std::vector<int> idx(cfg.batch);
        std::vector<int> ts(cfg.batch);
        for (int b = 0; b < cfg.batch; ++b) {
            idx[b] = rng.uniform_int(0, n - 1);
            ts[b] = rng.uniform_int(1, schedule.T);
        }
        Tensor zab = take_rows(z_a, idx);
        Tensor z0b = take_rows(z0m, idx);
        Tensor mgb = take_rows(m_gt, idx);
        std::vector<float> noise(static_cast<size_t>(cfg.batch) * latent_elems);
        rng.fill_normal(noise);
        Tensor eps = Tensor::from_data(z0b.shape(), std::move(noise));

        Tensor fused = model->fuse(zab, model->vision_features(zab));
        std::vector<double> c0(cfg.batch), ce(cfg.batch);
        for (int b = 0; b < cfg.batch; ++b) {
            c0[b] = std::sqrt(schedule.alpha_bar[ts[b]]);
            ce[b] = std::sqrt(1.0 - schedule.alpha_bar[ts[b]]);
        }
        Tensor z_t = add(mul(z0b, per_sample_const(c0, z0b.shape())),
                         mul(eps, per_sample_const(ce, z0b.shape())));
        Tensor eps_hat = model->predict_eps(z_t, fused, ts);
        Tensor loss = seg_loss(eps, eps_hat, z0b, ts, schedule, mgb, codec, cfg.weights);
        losses.push_back(loss.item());
        loss.backward();
        opt.step(optim::cosine_lr(step, cfg.steps, cfg.lr_max, cfg.lr_min));
    }

    model->mark_trained();
    model->freeze();
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
    return model;
}

void save_validator(const std::string& path, const Validator& v,
                    const std::map<std::string, std::string>& extra_meta) {
    const ValidatorConfig& c = v.config();
    std::map<std::string, std::string> meta = extra_meta;
    meta["arch"] = "validator-v1";
    meta["d"] = std::to_string(c.d);
    meta["d_vision"] = std::to_string(c.d_vision);
    meta["width"] = std::to_string(c.width);
    meta["mid"] = std::to_string(c.mid);
    meta["time_dim"] = std::to_string(c.time_dim);
    meta["T"] = std::to_string(c.T);
    ckpt::save_module(path, v, meta);
}

std::unique_ptr<Validator> load_validator(const std::string& path, bool frozen) {
    const ckpt::Checkpoint c = ckpt::Checkpoint::load(path);
    if (!c.has("meta/arch") || c.str("meta/arch") != "validator-v1") {
        throw ConfigError("checkpoint at " + path + " is not a validator");
    }
    ValidatorConfig cfg;
    cfg.d = std::stoi(c.str("meta/d"));
    cfg.d_vision = std::stoi(c.str("meta/d_vision"));
    cfg.width = std::stoi(c.str("meta/width"));
    cfg.mid = std::stoi(c.str("meta/mid"));
    cfg.time_dim = std::stoi(c.str("meta/time_dim"));
    cfg.T = std::stoi(c.str("meta/T"));
    Rng rng(0);
    auto v = std::make_unique<Validator>(cfg, rng);
    ckpt::load_module_state(c, *v);
    if (frozen) v->freeze();
    return v;
}

}  // namespace synthval::seg
