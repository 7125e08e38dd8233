#include "synthval/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace synthval::optim {

AdamW::AdamW(std::vector<Tensor> params, AdamWConfig cfg) : cfg_(cfg) {
    if (params.empty()) {
        throw std::invalid_argument("AdamW: no parameters");
    }
    slots_.reserve(params.size());
    for (auto& p : params) {
        if (!p.defined() || !p.requires_grad() || !p.is_leaf()) {
            throw std::logic_error("AdamW: parameters must be trainable leaf tensors");
        }
        Slot s;
        s.param = p;
        s.m.assign(static_cast<size_t>(p.size()), 0.0f);
        s.v.assign(static_cast<size_t>(p.size()), 0.0f);
        slots_.push_back(std::move(s));
    }
}

AdamW::AdamW(const nn::Module& module, AdamWConfig cfg) : AdamW(module.parameters(), cfg) {
    if (module.frozen()) {
        throw std::logic_error("AdamW: module is frozen");
    }
}

void AdamW::step(float lr) {
    ++t_;
    const float bc1 = 1.0f - std::pow(cfg_.beta1, static_cast<float>(t_));
    const float bc2 = 1.0f - std::pow(cfg_.beta2, static_cast<float>(t_));
    for (auto& s : slots_) {
        auto p = s.param.raw();
        auto g = s.param.grad_mut();
        const size_t n = p.size();
        for (size_t i = 0; i < n; ++i) {
            // Decoupled decay: applied to the weights directly, not the gradient.
            p[i] -= lr * cfg_.weight_decay * p[i];
            s.m[i] = cfg_.beta1 * s.m[i] + (1.0f - cfg_.beta1) * g[i];
            s.v[i] = cfg_.beta2 * s.v[i] + (1.0f - cfg_.beta2) * g[i] * g[i];
            const float mhat = s.m[i] / bc1;
            const float vhat = s.v[i] / bc2;
            p[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            g[i] = 0.0f;
        }
    }
}

float cosine_lr(int64_t step, int64_t total_steps, float lr_max, float lr_min) {
    if (total_steps <= 0) {
        throw std::invalid_argument("cosine_lr: total_steps must be positive");
    }
    if (step < 0) step = 0;
    if (step > total_steps) step = total_steps;
    const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
    return static_cast<float>(lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(M_PI * frac)));
}

}  // namespace synthval::optim
