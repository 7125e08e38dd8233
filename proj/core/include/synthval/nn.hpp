#pragma once

#include <string>
#include <utility>
#include <vector>

#include "synthval/rng.hpp"
#include "synthval/tensor.hpp"

namespace synthval::nn {

/// Base class for anything with learnable state. Subclasses register their
/// parameter tensors and child modules in the constructor; traversal order is
/// registration order, and names are dotted paths from the root.
class Module {
public:
    virtual ~Module() = default;
    Module() = default;
    Module(const Module&) = delete;
    Module& operator=(const Module&) = delete;

    /// Trainable tensors, depth-first in registration order.
    std::vector<std::pair<std::string, Tensor>> named_parameters() const;
    std::vector<Tensor> parameters() const;

    /// Non-trainable persistent tensors (e.g. normalization statistics).
    std::vector<std::pair<std::string, Tensor>> named_buffers() const;

    /// Parameters followed by buffers; the full persistent state.
    std::vector<std::pair<std::string, Tensor>> named_state() const;

    /// Permanently marks the module non-trainable. Parameter gradients are no
    /// longer computed, but gradients still flow through the module to its
    /// inputs. Optimizers reject frozen modules.
    void freeze();
    bool frozen() const { return frozen_; }

    int64_t parameter_count() const;

protected:
    /// Registers `t` as a trainable parameter; returns an alias of it.
    Tensor register_parameter(std::string name, Tensor t);
    /// Registers `t` as a persistent non-trainable tensor.
    Tensor register_buffer(std::string name, Tensor t);
    void register_module(std::string name, Module& child);

private:
    void collect(const std::string& prefix, bool params, bool buffers,
                 std::vector<std::pair<std::string, Tensor>>& out) const;

    std::vector<std::pair<std::string, Tensor>> params_;
    std::vector<std::pair<std::string, Tensor>> buffers_;
    std::vector<std::pair<std::string, Module*>> children_;
    bool frozen_ = false;
};

// ---- init helpers ----

/// He-style fan-in scaled normal init for conv kernels [KH,KW,Ci,Co].
void init_conv(Tensor& w, Rng& rng);
/// Fan-in scaled normal init for linear weights [K,M].
void init_linear(Tensor& w, Rng& rng);
/// Small-scale normal init for embedding tables.
void init_embedding(Tensor& table, Rng& rng, float std = 0.02f);

// ---- building blocks ----

class Conv2d : public Module {
public:
    /// k x k convolution, stride 1, `same` padding for odd k when pad = k/2.
    /// zero_init zeroes the kernel and bias (used for residual output heads).
    Conv2d(int in_ch, int out_ch, int k, int pad, Rng& rng, bool zero_init = false);
    Tensor forward(const Tensor& x) const { return conv2d(x, w_, b_, pad_); }

private:
    int pad_;
    Tensor w_, b_;
};

class GroupNorm : public Module {
public:
    GroupNorm(int channels, int groups);
    Tensor forward(const Tensor& x) const { return group_norm(x, gamma_, beta_, groups_); }

private:
    int groups_;
    Tensor gamma_, beta_;
};

class Linear : public Module {
public:
    Linear(int in_dim, int out_dim, Rng& rng, bool zero_init = false);
    Tensor forward(const Tensor& x) const { return linear(x, w_, b_); }

private:
    Tensor w_, b_;
};

class Embedding : public Module {
public:
    Embedding(int vocab, int dim, Rng& rng);
    Tensor forward(const std::vector<int>& ids) const { return embedding(table_, ids); }
    Tensor forward_bags(const std::vector<std::vector<int>>& bags) const {
        return bag_embedding(table_, bags);
    }
    const Tensor& table() const { return table_; }

private:
    Tensor table_;
};

}  // namespace synthval::nn
