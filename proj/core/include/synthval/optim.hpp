#pragma once

#include <cstdint>
#include <vector>

#include "synthval/nn.hpp"
#include "synthval/tensor.hpp"

namespace synthval::optim {

struct AdamWConfig {
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
    float weight_decay = 0.01f;
};

/// AdamW with decoupled weight decay. step() applies one update at the given
/// learning rate and zeroes all gradients afterwards.
class AdamW {
public:
    AdamW(std::vector<Tensor> params, AdamWConfig cfg = {});
    /// Rejects frozen modules outright.
    AdamW(const nn::Module& module, AdamWConfig cfg = {});

    void step(float lr);
    int64_t step_count() const { return t_; }

private:
    struct Slot {
        Tensor param;
        std::vector<float> m, v;
    };
    std::vector<Slot> slots_;
    AdamWConfig cfg_;
    int64_t t_ = 0;
};

/// Cosine decay from lr_max at step 0 to lr_min at step total_steps.
float cosine_lr(int64_t step, int64_t total_steps, float lr_max, float lr_min);

}  // namespace synthval::optim
