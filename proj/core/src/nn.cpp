#include "synthval/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace synthval::nn {

Tensor Module::register_parameter(std::string name, Tensor t) {
    if (!t.defined() || !t.requires_grad() || !t.is_leaf()) {
        throw std::logic_error("register_parameter: '" + name +
                               "' must be a leaf tensor requiring gradients");
    }
    params_.emplace_back(std::move(name), t);
    return t;
}

Tensor Module::register_buffer(std::string name, Tensor t) {
    if (!t.defined() || t.requires_grad()) {
        throw std::logic_error("register_buffer: '" + name + "' must not require gradients");
    }
    buffers_.emplace_back(std::move(name), t);
    return t;
}

void Module::register_module(std::string name, Module& child) {
    children_.emplace_back(std::move(name), &child);
}

void Module::collect(const std::string& prefix, bool params, bool buffers,
                     std::vector<std::pair<std::string, Tensor>>& out) const {
    if (params) {
        for (const auto& [n, t] : params_) out.emplace_back(prefix + n, t);
    }
    if (buffers) {
        for (const auto& [n, t] : buffers_) out.emplace_back(prefix + n, t);
    }
    for (const auto& [n, child] : children_) {
        child->collect(prefix + n + ".", params, buffers, out);
    }
}

std::vector<std::pair<std::string, Tensor>> Module::named_parameters() const {
    std::vector<std::pair<std::string, Tensor>> out;
    collect("", true, false, out);
    return out;
}

std::vector<Tensor> Module::parameters() const {
    std::vector<Tensor> out;
    for (auto& [n, t] : named_parameters()) out.push_back(t);
    return out;
}

std::vector<std::pair<std::string, Tensor>> Module::named_buffers() const {
    std::vector<std::pair<std::string, Tensor>> out;
    collect("", false, true, out);
    return out;
}

std::vector<std::pair<std::string, Tensor>> Module::named_state() const {
    std::vector<std::pair<std::string, Tensor>> out;
    collect("", true, true, out);
    return out;
}

void Module::freeze() {
    frozen_ = true;
    for (auto& [n, t] : params_) {
        t.node()->requires_grad = false;
        t.node()->grad.clear();
    }
    for (auto& [n, child] : children_) child->freeze();
}

int64_t Module::parameter_count() const {
    int64_t n = 0;
    for (const auto& [name, t] : named_parameters()) n += t.size();
    return n;
}

// ---- init helpers ----

void init_conv(Tensor& w, Rng& rng) {
    const auto& s = w.shape();
    if (s.size() != 4) throw std::invalid_argument("init_conv: expected [KH,KW,Ci,Co]");
    const float fan_in = static_cast<float>(s[0] * s[1] * s[2]);
    rng.fill_normal(w.raw(), 0.0f, std::sqrt(2.0f / fan_in));
}

void init_linear(Tensor& w, Rng& rng) {
    const auto& s = w.shape();
    if (s.size() != 2) throw std::invalid_argument("init_linear: expected [K,M]");
    const float fan_in = static_cast<float>(s[0]);
    rng.fill_normal(w.raw(), 0.0f, std::sqrt(1.0f / fan_in));
}

void init_embedding(Tensor& table, Rng& rng, float std) {
    rng.fill_normal(table.raw(), 0.0f, std);
}

// ---- building blocks ----

Conv2d::Conv2d(int in_ch, int out_ch, int k, int pad, Rng& rng, bool zero_init) : pad_(pad) {
    Tensor w = Tensor::zeros({k, k, in_ch, out_ch}, true);
    if (!zero_init) init_conv(w, rng);
    w_ = register_parameter("w", w);
    b_ = register_parameter("b", Tensor::zeros({out_ch}, true));
}

GroupNorm::GroupNorm(int channels, int groups) : groups_(groups) {
    gamma_ = register_parameter("gamma", Tensor::full({channels}, 1.0f, true));
    beta_ = register_parameter("beta", Tensor::zeros({channels}, true));
}

Linear::Linear(int in_dim, int out_dim, Rng& rng, bool zero_init) {
    Tensor w = Tensor::zeros({in_dim, out_dim}, true);
    if (!zero_init) init_linear(w, rng);
    w_ = register_parameter("w", w);
    b_ = register_parameter("b", Tensor::zeros({out_dim}, true));
}

Embedding::Embedding(int vocab, int dim, Rng& rng) {
    Tensor t = Tensor::zeros({vocab, dim}, true);
    init_embedding(t, rng);
    table_ = register_parameter("table", t);
}

}  // namespace synthval::nn
