#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace synthval {

/// Row-major extents; images are [H,W,C], batches [N,H,W,C], matrices [N,K].
using Shape = std::vector<int>;

int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);
bool same_shape(const Shape& a, const Shape& b);

namespace autograd {

/// Thread-local recording switch. Inside a NoGradGuard no graph is built,
/// which keeps sampling loops flat in memory.
bool grad_enabled();

struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

}  // namespace autograd

namespace detail {

struct TensorNode {
    Shape shape;
    std::vector<float> values;
    std::vector<float> grad;  // sized iff requires_grad
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    // Pulls this node's grad into the parents' grads.
    std::function<void(TensorNode&)> backward_fn;

    int64_t size() const { return static_cast<int64_t>(values.size()); }
    void ensure_grad() {
        if (requires_grad && grad.size() != values.size()) {
            grad.assign(values.size(), 0.0f);
        }
    }
};

}  // namespace detail

/// Dense float32 tensor with reverse-mode differentiation. Value-semantic
/// handle over a shared graph node; ops record the graph only while
/// autograd::grad_enabled() and some input requires a gradient.
///
/// Every public operation validates that its output is finite; NaN/Inf
/// raises NumericError instead of propagating.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, float value, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<float> values, bool requires_grad = false);
    static Tensor scalar(float value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    int dim(int i) const;
    int ndim() const;
    int64_t size() const;
    bool requires_grad() const;
    bool is_leaf() const;

    std::span<const float> values() const;
    /// Mutable access to a leaf's storage (parameters, data buffers).
    /// Refused on graph-produced nodes.
    std::span<float> raw();

    float item() const;  // scalar tensors only

    std::span<const float> grad() const;
    std::span<float> grad_mut();
    void zero_grad();

    /// Reverse-mode sweep from a scalar root. Accumulates into the grad of
    /// every reachable node with requires_grad; repeated calls accumulate.
    void backward() const;

    /// Copy of the values as a fresh leaf with no history.
    Tensor detached(bool requires_grad = false) const;

    /// Internal node access (checkpointing, optimizer).
    const std::shared_ptr<detail::TensorNode>& node() const { return node_; }
    explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<detail::TensorNode> node_;
};

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div_ew(const Tensor& a, const Tensor& b);
/// a*x + b, elementwise with scalar coefficients.
Tensor affine(const Tensor& x, float a, float b);
Tensor square(const Tensor& x);
Tensor abs_ew(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor silu(const Tensor& x);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

// ---- reductions ----
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// ---- neural blocks ----

/// 2-D convolution, stride 1, zero padding `pad`.
/// in [N,H,W,Ci], w [KH,KW,Ci,Co], bias [Co] (may be undefined) ->
/// [N, H+2p-KH+1, W+2p-KW+1, Co].
Tensor conv2d(const Tensor& in, const Tensor& w, const Tensor& bias, int pad);

/// Group normalization over channel groups; per-channel scale/shift.
/// in [N,H,W,C], gamma [C], beta [C].
Tensor group_norm(const Tensor& in, const Tensor& gamma, const Tensor& beta, int groups,
                  float eps = 1e-5f);

/// in [N,K], w [K,M], bias [M] (may be undefined) -> [N,M].
Tensor linear(const Tensor& in, const Tensor& w, const Tensor& bias);

/// Rows of `table` [V,E] selected by ids -> [N,E]; backward scatter-adds.
Tensor embedding(const Tensor& table, const std::vector<int>& ids);

/// Sum of embedding rows per id-bag: table [V,E], bags of token ids -> [N,E].
Tensor bag_embedding(const Tensor& table, const std::vector<std::vector<int>>& bags);

/// Nearest-neighbour 2x resampling on [N,H,W,C].
Tensor downsample2x(const Tensor& in);
Tensor upsample2x(const Tensor& in);

Tensor concat_channels(const Tensor& a, const Tensor& b);

/// Adds a per-sample channel vector v [N,C] to every spatial site of
/// in [N,H,W,C] (timestep / conditioning injection).
Tensor broadcast_add_channels(const Tensor& in, const Tensor& v);

/// Stacks K tensors of identical shape S into [K, S...]; differentiable.
Tensor stack_rows(const std::vector<Tensor>& rows);

/// Data-loading helper: copies the selected leading-axis rows of `in` into a
/// fresh leaf tensor (no gradient linkage to `in`).
Tensor take_rows(const Tensor& in, const std::vector<int>& rows);

}  // namespace synthval
