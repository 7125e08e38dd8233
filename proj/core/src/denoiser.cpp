#include "synthval/denoiser.hpp"

#include <stdexcept>
#include <string>

#include "synthval/common.hpp"

namespace synthval::diff {

namespace {

void check_cfg(const DenoiserConfig& c) {
    if (c.d <= 0 || c.width <= 0 || c.mid <= 0 || c.time_dim <= 0 || c.d_text <= 0 || c.T <= 0) {
        throw ConfigError("denoiser config dimensions must be positive");
    }
    if (c.width % 4 != 0 || c.mid % 4 != 0) {
        throw ConfigError("denoiser channel widths must be divisible by 4 (norm groups)");
    }
}

}  // namespace

Denoiser::Denoiser(const DenoiserConfig& cfg, Rng& rng)
    : cfg_((check_cfg(cfg), cfg)),
      time_table_(cfg.T, cfg.time_dim, rng),
      time_proj1_(cfg.time_dim, cfg.width, rng),
      time_proj2_(cfg.time_dim, cfg.mid, rng),
      text_proj_(cfg.d_text, cfg.mid, rng),
      c1a_(2 * cfg.d + 1, cfg.width, 3, 1, rng),
      c1b_(cfg.width, cfg.width, 3, 1, rng),
      g1a_(cfg.width, 4),
      g1b_(cfg.width, 4),
      c2a_(cfg.width, cfg.mid, 3, 1, rng),
      c2b_(cfg.mid, cfg.mid, 3, 1, rng),
      g2a_(cfg.mid, 4),
      g2b_(cfg.mid, 4),
      c3_(cfg.width + cfg.mid, cfg.width, 3, 1, rng),
      g3_(cfg.width, 4),
      out_(cfg.width, cfg.d, 1, 0, rng, /*zero_init=*/true) {
    register_module("time_table", time_table_);
    register_module("time_proj1", time_proj1_);
    register_module("time_proj2", time_proj2_);
    register_module("text_proj", text_proj_);
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
}

Tensor Denoiser::forward(const Tensor& z_t, const Tensor& z_n, const Tensor& mask_latent,
                         const std::vector<int>& ts, const Tensor& e_text) const {
    if (z_t.ndim() != 4 || z_t.dim(3) != cfg_.d) {
        throw ConfigError("denoiser: z_t must be [N,h,w," + std::to_string(cfg_.d) + "], got " +
                          shape_str(z_t.shape()));
    }
    if (!same_shape(z_t.shape(), z_n.shape())) {
        throw ConfigError("denoiser: z_n shape " + shape_str(z_n.shape()) +
                          " does not match z_t shape " + shape_str(z_t.shape()));
    }
    const int n = z_t.dim(0), h = z_t.dim(1), w = z_t.dim(2);
    if (mask_latent.ndim() != 4 || mask_latent.dim(0) != n || mask_latent.dim(1) != h ||
        mask_latent.dim(2) != w || mask_latent.dim(3) != 1) {
        throw ConfigError("denoiser: mask must be [N,h,w,1], got " +
                          shape_str(mask_latent.shape()));
    }
    if (h % 2 != 0 || w % 2 != 0) {
        throw ConfigError("denoiser: latent height/width must be even");
    }
    if (static_cast<int>(ts.size()) != n) {
        throw ConfigError("denoiser: need one timestep per sample");
    }
    std::vector<int> ids(ts.size());
    for (size_t i = 0; i < ts.size(); ++i) {
        if (ts[i] < 1 || ts[i] > cfg_.T) {
            throw std::out_of_range("denoiser: timestep " + std::to_string(ts[i]) +
                                    " outside [1," + std::to_string(cfg_.T) + "]");
        }
        ids[i] = ts[i] - 1;
    }
    if (e_text.ndim() != 2 || e_text.dim(0) != n || e_text.dim(1) != cfg_.d_text) {
        throw ConfigError("denoiser: e_text must be [N," + std::to_string(cfg_.d_text) +
                          "], got " + shape_str(e_text.shape()));
    }
    ++forward_count_;

    Tensor x = concat_channels(concat_channels(z_t, z_n), mask_latent);
    Tensor temb = time_table_.forward(ids);

    Tensor hfull = c1a_.forward(x);
    hfull = broadcast_add_channels(hfull, time_proj1_.forward(temb));
    hfull = silu(g1a_.forward(hfull));
    hfull = silu(g1b_.forward(c1b_.forward(hfull)));
    Tensor skip = hfull;

    Tensor hm = c2a_.forward(downsample2x(hfull));
    hm = broadcast_add_channels(hm, add(time_proj2_.forward(temb), text_proj_.forward(e_text)));
    hm = silu(g2a_.forward(hm));
    hm = silu(g2b_.forward(c2b_.forward(hm)));

    Tensor hd = concat_channels(skip, upsample2x(hm));
    hd = silu(g3_.forward(c3_.forward(hd)));
    return out_.forward(hd);
}

}  // namespace synthval::diff
