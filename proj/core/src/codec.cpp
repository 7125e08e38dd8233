#include "synthval/codec.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "synthval/checkpoint.hpp"
#include "synthval/common.hpp"
#include "synthval/optim.hpp"

namespace synthval::codec {

namespace {

/// Per-channel affine on [N,h,w,C] with constant coefficients: out = z*a + b.
Tensor channel_affine(const Tensor& z, const std::vector<float>& a,
                      const std::vector<float>& b) {
    const int C = z.dim(3);
    if ((int)a.size() != C || (int)b.size() != C) {
        throw std::invalid_argument("channel_affine: coefficient count mismatch");
    }
    const int64_t sites = z.size() / C;
    std::vector<float> av(static_cast<size_t>(z.size())), bv(static_cast<size_t>(z.size()));
    for (int64_t s = 0; s < sites; ++s) {
        for (int c = 0; c < C; ++c) {
            av[(size_t)(s * C + c)] = a[(size_t)c];
            bv[(size_t)(s * C + c)] = b[(size_t)c];
        }
    }
    const Tensor at = Tensor::from_data(z.shape(), std::move(av));
    const Tensor bt = Tensor::from_data(z.shape(), std::move(bv));
    return add(mul(z, at), bt);
}

}  // namespace

Codec::Codec(const CodecConfig& cfg, Rng& rng)
    : cfg_(cfg),
      e1_(3, cfg.width / 2, 3, 1, rng),
      e2_(cfg.width / 2, cfg.width, 3, 1, rng),
      e3_(cfg.width, cfg.width, 3, 1, rng),
      e4_(cfg.width, cfg.d, 1, 0, rng),
      d1_(cfg.d, cfg.width, 3, 1, rng),
      d2_(cfg.width, cfg.width, 3, 1, rng),
      d3_(cfg.width, cfg.width / 2, 3, 1, rng),
      d4_(cfg.width / 2, 3, 1, 0, rng) {
    if (cfg.f != 4) throw ConfigError("codec implements exactly two 2x stages (f = 4)");
    if (cfg.d < 1 || cfg.width < 8 || cfg.width % 8 != 0) {
        throw ConfigError("codec needs d >= 1 and width a positive multiple of 8");
    }
    register_module("e1", e1_);
    register_module("e2", e2_);
    register_module("e3", e3_);
    register_module("e4", e4_);
    register_module("d1", d1_);
    register_module("d2", d2_);
    register_module("d3", d3_);
    register_module("d4", d4_);
    latent_mean_ = register_buffer("latent_mean", Tensor::zeros({cfg.d}));
    latent_std_ = register_buffer("latent_std", Tensor::full({cfg.d}, 1.0f));
    stats_flag_ = register_buffer("latent_stats_set", Tensor::zeros({1}));
}

Tensor Codec::encode(const Tensor& image) const {
    if (image.ndim() != 4 || image.dim(3) != 3) {
        throw std::invalid_argument("encode: expected [N,H,W,3]");
    }
    if (image.dim(1) % cfg_.f != 0 || image.dim(2) % cfg_.f != 0) {
        throw std::invalid_argument("encode: spatial dims must be divisible by f");
    }
    Tensor h = silu(e1_.forward(image));
    h = downsample2x(h);
    h = silu(e2_.forward(h));
    h = downsample2x(h);
    h = silu(e3_.forward(h));
    return e4_.forward(h);
}

Tensor Codec::decode(const Tensor& z) const {
    if (z.ndim() != 4 || z.dim(3) != cfg_.d) {
        throw std::invalid_argument("decode: expected [N,h,w,d]");
    }
    Tensor h = silu(d1_.forward(z));
    h = upsample2x(h);
    h = silu(d2_.forward(h));
    h = upsample2x(h);
    h = silu(d3_.forward(h));
    return sigmoid(d4_.forward(h));
}

Tensor Codec::encode_norm(const Tensor& image) const {
    if (!has_latent_stats()) {
        throw MissingArtifactError("codec latent statistics not set; train or load first");
    }
    std::vector<float> inv(static_cast<size_t>(cfg_.d)), shift(static_cast<size_t>(cfg_.d));
    for (int c = 0; c < cfg_.d; ++c) {
        inv[(size_t)c] = 1.0f / latent_std_.values()[(size_t)c];
        shift[(size_t)c] = -latent_mean_.values()[(size_t)c] * inv[(size_t)c];
    }
    return channel_affine(encode(image), inv, shift);
}

Tensor Codec::denormalize(const Tensor& zn) const {
    if (!has_latent_stats()) {
        throw MissingArtifactError("codec latent statistics not set; train or load first");
    }
    std::vector<float> scale(latent_std_.values().begin(), latent_std_.values().end());
    std::vector<float> shift(latent_mean_.values().begin(), latent_mean_.values().end());
    return channel_affine(zn, scale, shift);
}

Tensor Codec::decode_norm(const Tensor& zn) const { return decode(denormalize(zn)); }

void Codec::set_latent_stats(const std::vector<float>& mean, const std::vector<float>& stddev) {
    if ((int)mean.size() != cfg_.d || (int)stddev.size() != cfg_.d) {
        throw ConfigError("latent stats must have one entry per latent channel");
    }
    for (int c = 0; c < cfg_.d; ++c) {
        if (!(stddev[(size_t)c] > 0.0f) || !std::isfinite(stddev[(size_t)c]) ||
            !std::isfinite(mean[(size_t)c])) {
            throw NumericError("latent stats must be finite with positive std");
        }
        latent_mean_.raw()[(size_t)c] = mean[(size_t)c];
        latent_std_.raw()[(size_t)c] = stddev[(size_t)c];
    }
    stats_flag_.raw()[0] = 1.0f;
}

bool Codec::has_latent_stats() const { return stats_flag_.values()[0] != 0.0f; }

Tensor reconstruction_weights(const Tensor& masks, float inside) {
    if (masks.ndim() != 4 || masks.dim(3) != 1) {
        throw std::invalid_argument("reconstruction_weights: expected [N,H,W,1] masks");
    }
    if (!(inside > 0.0f) || !std::isfinite(inside)) {
        throw ConfigError("reconstruction_weights: inside weight must be positive");
    }
    return affine(masks, inside - 1.0f, 1.0f);
}

CodecTrainStats train_codec(Codec& codec, const Tensor& train_images,
                            const CodecTrainConfig& cfg, const Tensor* pixel_weights) {
    if (train_images.ndim() != 4 || train_images.dim(3) != 3) {
        throw std::invalid_argument("train_codec: expected [N,H,W,3] images");
    }
    const int n = train_images.dim(0);
    if (n < 1) throw ConfigError("train_codec: empty training set");
    if (cfg.steps < 1 || cfg.batch < 1) throw ConfigError("train_codec: bad steps/batch");

    Tensor weights;  // [N,H,W,3] when provided, expanded over channels
    if (pixel_weights != nullptr) {
        const Tensor& w = *pixel_weights;
        if (w.ndim() != 4 || w.dim(0) != n || w.dim(1) != train_images.dim(1) ||
            w.dim(2) != train_images.dim(2) || (w.dim(3) != 1 && w.dim(3) != 3)) {
            throw std::invalid_argument(
                "train_codec: pixel_weights must be [N,H,W,1] or [N,H,W,3] matching images");
        }
        for (float v : w.values()) {
            if (!(v > 0.0f) || !std::isfinite(v)) {
                throw ConfigError("train_codec: pixel_weights must be positive and finite");
            }
        }
        weights = w.dim(3) == 3 ? w : mask_to_rgb(w);
    }

    optim::AdamW opt(codec);
    Rng rng = Rng::substream(cfg.seed, "codec-train");
    CodecTrainStats stats;
    stats.losses.reserve(static_cast<size_t>(cfg.steps));

    for (int step = 0; step < cfg.steps; ++step) {
        std::vector<int> idx(static_cast<size_t>(cfg.batch));
        for (auto& v : idx) v = rng.uniform_int(0, n - 1);
        const Tensor batch = take_rows(train_images, idx);
        Tensor err2 = square(sub(codec.decode(codec.encode(batch)), batch));
        if (pixel_weights != nullptr) err2 = mul(err2, take_rows(weights, idx));
        Tensor loss = mean(err2);
        const float lv = loss.item();
        if (!std::isfinite(lv)) throw NumericError("codec training loss diverged");
        loss.backward();
        opt.step(optim::cosine_lr(step, cfg.steps, cfg.lr_max, cfg.lr_min));
        stats.losses.push_back(lv);
    }
    stats.initial_loss = stats.losses.front();
    stats.final_loss = stats.losses.back();

    // Latent statistics and reconstruction quality over the training set.
    {
        autograd::NoGradGuard no_grad;
        const int d = codec.config().d;
        std::vector<double> sum(static_cast<size_t>(d), 0.0);
        std::vector<double> sumsq(static_cast<size_t>(d), 0.0);
        int64_t sites = 0;
        double se = 0.0;
        int64_t px = 0;
        for (int start = 0; start < n; start += 64) {
            std::vector<int> idx;
            for (int i = start; i < std::min(n, start + 64); ++i) idx.push_back(i);
            const Tensor batch = take_rows(train_images, idx);
            const Tensor z = codec.encode(batch);
            const auto zv = z.values();
            const int64_t cells = z.size() / d;
            for (int64_t s = 0; s < cells; ++s) {
                for (int c = 0; c < d; ++c) {
                    const double v = zv[(size_t)(s * d + c)];
                    sum[(size_t)c] += v;
                    sumsq[(size_t)c] += v * v;
                }
            }
            sites += cells;
            const Tensor rec = codec.decode(z);
            for (int64_t i = 0; i < rec.size(); ++i) {
                const double e = (double)rec.values()[(size_t)i] - batch.values()[(size_t)i];
                se += e * e;
            }
            px += rec.size();
        }
        std::vector<float> mean_c(static_cast<size_t>(d)), std_c(static_cast<size_t>(d));
        for (int c = 0; c < d; ++c) {
            const double m = sum[(size_t)c] / sites;
            const double var = std::max(sumsq[(size_t)c] / sites - m * m, 1e-12);
            mean_c[(size_t)c] = static_cast<float>(m);
            std_c[(size_t)c] = static_cast<float>(std::sqrt(var));
        }
        codec.set_latent_stats(mean_c, std_c);
        const double mse = se / px;
        stats.psnr_db = mse > 0.0 ? -10.0 * std::log10(mse) : 99.0;
    }

    codec.freeze();
    return stats;
}

void save_codec(const std::string& path, const Codec& codec) {
    std::map<std::string, std::string> meta;
    meta["arch"] = "codec-v1";
    meta["f"] = std::to_string(codec.config().f);
    meta["d"] = std::to_string(codec.config().d);
    meta["width"] = std::to_string(codec.config().width);
    ckpt::save_module(path, codec, meta);
}

std::unique_ptr<Codec> load_codec(const std::string& path, bool frozen) {
    const ckpt::Checkpoint c = ckpt::Checkpoint::load(path);
    if (!c.has("meta/arch") || c.str("meta/arch") != "codec-v1") {
        throw ConfigError("checkpoint at " + path + " is not a codec");
    }
    CodecConfig cfg;
    cfg.f = std::stoi(c.str("meta/f"));
    cfg.d = std::stoi(c.str("meta/d"));
    cfg.width = std::stoi(c.str("meta/width"));
    Rng rng(0);
    auto codec = std::make_unique<Codec>(cfg, rng);
    ckpt::load_module_state(c, *codec);
    if (frozen) codec->freeze();
    return codec;
}

Tensor downscale_mask(const Tensor& mask, int f) {
    if (mask.ndim() != 4 || mask.dim(3) != 1) {
        throw std::invalid_argument("downscale_mask: expected [N,H,W,1]");
    }
    if (f < 1 || mask.dim(1) % f != 0 || mask.dim(2) % f != 0) {
        throw std::invalid_argument("downscale_mask: dims must divide by f");
    }
    const int n = mask.dim(0), h = mask.dim(1), w = mask.dim(2);
    const int oh = h / f, ow = w / f;
    std::vector<float> out(static_cast<size_t>(n) * oh * ow);
    const auto mv = mask.values();
    const double half = 0.5 * f * f;
    for (int b = 0; b < n; ++b) {
        for (int y = 0; y < oh; ++y) {
            for (int x = 0; x < ow; ++x) {
                double cov = 0.0;
                for (int dy = 0; dy < f; ++dy) {
                    for (int dx = 0; dx < f; ++dx) {
                        cov += mv[((size_t)b * h + (size_t)(y * f + dy)) * w + (size_t)(x * f + dx)];
                    }
                }
                out[((size_t)b * oh + y) * ow + x] = cov >= half ? 1.0f : 0.0f;
            }
        }
    }
    return Tensor::from_data({n, oh, ow, 1}, std::move(out));
}

Tensor mask_to_rgb(const Tensor& mask) {
    if (mask.ndim() != 4 || mask.dim(3) != 1) {
        throw std::invalid_argument("mask_to_rgb: expected [N,H,W,1]");
    }
    std::vector<float> out(static_cast<size_t>(mask.size()) * 3);
    const auto mv = mask.values();
    for (int64_t i = 0; i < mask.size(); ++i) {
        out[(size_t)(i * 3 + 0)] = mv[(size_t)i];
        out[(size_t)(i * 3 + 1)] = mv[(size_t)i];
        out[(size_t)(i * 3 + 2)] = mv[(size_t)i];
    }
    return Tensor::from_data({mask.dim(0), mask.dim(1), mask.dim(2), 3}, std::move(out));
}

double psnr(const Tensor& a, const Tensor& b) {
    if (!same_shape(a.shape(), b.shape())) {
        throw std::invalid_argument("psnr: shape mismatch");
    }
    double se = 0.0;
    for (int64_t i = 0; i < a.size(); ++i) {
        const double e = (double)a.values()[(size_t)i] - b.values()[(size_t)i];
        se += e * e;
    }
    const double mse = se / a.size();
    return mse > 0.0 ? -10.0 * std::log10(mse) : 99.0;
}

}  // namespace synthval::codec
