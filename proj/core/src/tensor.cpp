#include "synthval/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_map>

#include "synthval/common.hpp"

namespace synthval {

int64_t numel(const Shape& shape) {
    int64_t n = 1;
    for (int d : shape) {
        if (d <= 0) {
            throw std::invalid_argument("non-positive extent in shape " + shape_str(shape));
        }
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

namespace autograd {

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

}  // namespace autograd

namespace {

using Node = detail::TensorNode;
using NodePtr = std::shared_ptr<Node>;

NodePtr make_node(Shape shape) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->values.resize(static_cast<size_t>(numel(n->shape)));
    return n;
}

void check_finite(const Node& n, const char* op) {
    float ok = 0.0f;
    for (float v : n.values) {
        ok += v * 0.0f;  // NaN/Inf poison the accumulator
    }
    if (!(ok == 0.0f)) {
        throw NumericError(std::string("non-finite values produced by ") + op);
    }
}

bool should_record(std::initializer_list<const Tensor*> inputs) {
    if (!autograd::grad_enabled()) return false;
    for (const Tensor* t : inputs) {
        if (t->defined() && t->requires_grad()) return true;
    }
    return false;
}

/// Finalizes an op result: finiteness check, then graph hookup if recording.
Tensor finish(NodePtr out, const char* op, bool record, std::vector<NodePtr> parents,
              std::function<void(Node&)> backward_fn) {
    check_finite(*out, op);
    if (record) {
        out->requires_grad = true;
        out->ensure_grad();
        out->parents = std::move(parents);
        out->backward_fn = std::move(backward_fn);
    }
    return Tensor(std::move(out));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!same_shape(a.shape(), b.shape())) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
    }
}

}  // namespace

// ---- Tensor basics ----

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    auto n = make_node(std::move(shape));
    n->requires_grad = requires_grad;
    n->ensure_grad();
    return Tensor(std::move(n));
}

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
    auto n = make_node(std::move(shape));
    std::fill(n->values.begin(), n->values.end(), value);
    n->requires_grad = requires_grad;
    n->ensure_grad();
    check_finite(*n, "full");
    return Tensor(std::move(n));
}

Tensor Tensor::from_data(Shape shape, std::vector<float> values, bool requires_grad) {
    if (static_cast<int64_t>(values.size()) != numel(shape)) {
        throw std::invalid_argument("from_data: " + std::to_string(values.size()) +
                                    " values for shape " + shape_str(shape));
    }
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->values = std::move(values);
    n->requires_grad = requires_grad;
    n->ensure_grad();
    check_finite(*n, "from_data");
    return Tensor(std::move(n));
}

Tensor Tensor::scalar(float value, bool requires_grad) {
    return from_data({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }
int Tensor::dim(int i) const { return node_->shape.at(static_cast<size_t>(i)); }
int Tensor::ndim() const { return static_cast<int>(node_->shape.size()); }
int64_t Tensor::size() const { return node_->size(); }
bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }
bool Tensor::is_leaf() const { return node_ && node_->parents.empty() && !node_->backward_fn; }

std::span<const float> Tensor::values() const { return {node_->values.data(), node_->values.size()}; }

std::span<float> Tensor::raw() {
    if (!is_leaf()) {
        throw std::logic_error("raw(): mutation of a graph-produced tensor");
    }
    return {node_->values.data(), node_->values.size()};
}

float Tensor::item() const {
    if (size() != 1) {
        throw std::invalid_argument("item(): tensor has " + std::to_string(size()) + " elements");
    }
    return node_->values[0];
}

std::span<const float> Tensor::grad() const {
    if (!requires_grad()) {
        throw std::logic_error("grad(): tensor does not require gradients");
    }
    node_->ensure_grad();
    return {node_->grad.data(), node_->grad.size()};
}

std::span<float> Tensor::grad_mut() {
    if (!requires_grad()) {
        throw std::logic_error("grad_mut(): tensor does not require gradients");
    }
    node_->ensure_grad();
    return {node_->grad.data(), node_->grad.size()};
}

void Tensor::zero_grad() {
    if (node_ && node_->requires_grad) {
        node_->ensure_grad();
        std::fill(node_->grad.begin(), node_->grad.end(), 0.0f);
    }
}

Tensor Tensor::detached(bool requires_grad) const {
    return from_data(node_->shape, node_->values, requires_grad);
}

void Tensor::backward() const {
    if (!node_) {
        throw std::logic_error("backward(): undefined tensor");
    }
    if (size() != 1) {
        throw std::invalid_argument("backward(): loss must be scalar, got " + shape_str(shape()));
    }
    if (!node_->requires_grad) {
        throw std::logic_error("backward(): root does not require gradients");
    }

    // Iterative post-order over parents; tri-colour marking rejects cycles
    // in a corrupted record.
    std::vector<Node*> order;
    std::unordered_map<Node*, int> state;  // 0 new, 1 open, 2 done
    std::vector<std::pair<Node*, size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    state[node_.get()] = 1;
    while (!stack.empty()) {
        auto& [n, idx] = stack.back();
        if (idx < n->parents.size()) {
            Node* p = n->parents[idx++].get();
            auto it = state.find(p);
            if (it == state.end()) {
                state[p] = 1;
                stack.emplace_back(p, 0);
            } else if (it->second == 1) {
                throw std::logic_error("backward(): cycle in computation record");
            }
        } else {
            state[n] = 2;
            order.push_back(n);
            stack.pop_back();
        }
    }

    // Interior (recorded) nodes hold per-sweep scratch gradients; only leaf
    // gradients persist and accumulate across backward() calls.
    for (Node* n : order) {
        if (n->backward_fn) {
            n->ensure_grad();
            std::fill(n->grad.begin(), n->grad.end(), 0.0f);
        }
    }
    node_->ensure_grad();
    node_->grad[0] += 1.0f;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn) {
            n->backward_fn(*n);
        }
    }
}

// ---- elementwise ----

namespace {

template <typename Fwd, typename Bwd>
Tensor unary_op(const Tensor& x, const char* name, Fwd fwd, Bwd bwd) {
    auto out = make_node(x.shape());
    const float* xp = x.values().data();
    float* op = out->values.data();
    const int64_t n = x.size();
    for (int64_t i = 0; i < n; ++i) {
        op[i] = fwd(xp[i]);
    }
    const bool rec = should_record({&x});
    NodePtr xn = x.node();
    return finish(std::move(out), name, rec, {xn}, [xn, bwd](Node& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        const int64_t n = self.size();
        for (int64_t i = 0; i < n; ++i) {
            xn->grad[i] += bwd(xn->values[i], self.values[i]) * self.grad[i];
        }
    });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    auto out = make_node(a.shape());
    const float* ap = a.values().data();
    const float* bp = b.values().data();
    float* op = out->values.data();
    const int64_t n = a.size();
    for (int64_t i = 0; i < n; ++i) op[i] = ap[i] + bp[i];
    const bool rec = should_record({&a, &b});
    NodePtr an = a.node(), bn = b.node();
    return finish(std::move(out), "add", rec, {an, bn}, [an, bn](Node& self) {
        const int64_t n = self.size();
        if (an->requires_grad) {
            an->ensure_grad();
            for (int64_t i = 0; i < n; ++i) an->grad[i] += self.grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (int64_t i = 0; i < n; ++i) bn->grad[i] += self.grad[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    auto out = make_node(a.shape());
    const float* ap = a.values().data();
    const float* bp = b.values().data();
    float* op = out->values.data();
    const int64_t n = a.size();
    for (int64_t i = 0; i < n; ++i) op[i] = ap[i] - bp[i];
    const bool rec = should_record({&a, &b});
    NodePtr an = a.node(), bn = b.node();
    return finish(std::move(out), "sub", rec, {an, bn}, [an, bn](Node& self) {
        const int64_t n = self.size();
        if (an->requires_grad) {
            an->ensure_grad();
            for (int64_t i = 0; i < n; ++i) an->grad[i] += self.grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (int64_t i = 0; i < n; ++i) bn->grad[i] -= self.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    auto out = make_node(a.shape());
    const float* ap = a.values().data();
    const float* bp = b.values().data();
    float* op = out->values.data();
    const int64_t n = a.size();
    for (int64_t i = 0; i < n; ++i) op[i] = ap[i] * bp[i];
    const bool rec = should_record({&a, &b});
    NodePtr an = a.node(), bn = b.node();
    return finish(std::move(out), "mul", rec, {an, bn}, [an, bn](Node& self) {
        const int64_t n = self.size();
        if (an->requires_grad) {
            an->ensure_grad();
            for (int64_t i = 0; i < n; ++i) an->grad[i] += bn->values[i] * self.grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (int64_t i = 0; i < n; ++i) bn->grad[i] += an->values[i] * self.grad[i];
        }
    });
}

Tensor div_ew(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "div");
    auto out = make_node(a.shape());
    const float* ap = a.values().data();
    const float* bp = b.values().data();
    float* op = out->values.data();
    const int64_t n = a.size();
    for (int64_t i = 0; i < n; ++i) op[i] = ap[i] / bp[i];
    const bool rec = should_record({&a, &b});
    NodePtr an = a.node(), bn = b.node();
    return finish(std::move(out), "div", rec, {an, bn}, [an, bn](Node& self) {
        const int64_t n = self.size();
        if (an->requires_grad) {
            an->ensure_grad();
            for (int64_t i = 0; i < n; ++i) an->grad[i] += self.grad[i] / bn->values[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (int64_t i = 0; i < n; ++i) {
                bn->grad[i] -= self.grad[i] * an->values[i] / (bn->values[i] * bn->values[i]);
            }
        }
    });
}

Tensor affine(const Tensor& x, float a, float b) {
    return unary_op(
        x, "affine", [a, b](float v) { return a * v + b; },
        [a](float, float) { return a; });
}

Tensor square(const Tensor& x) {
    return unary_op(
        x, "square", [](float v) { return v * v; }, [](float v, float) { return 2.0f * v; });
}

Tensor abs_ew(const Tensor& x) {
    return unary_op(
        x, "abs", [](float v) { return std::fabs(v); },
        [](float v, float) { return v > 0.0f ? 1.0f : (v < 0.0f ? -1.0f : 0.0f); });
}

Tensor sigmoid(const Tensor& x) {
    return unary_op(
        x, "sigmoid", [](float v) { return 1.0f / (1.0f + std::exp(-v)); },
        [](float, float y) { return y * (1.0f - y); });
}

Tensor silu(const Tensor& x) {
    return unary_op(
        x, "silu", [](float v) { return v / (1.0f + std::exp(-v)); },
        [](float v, float) {
            const float s = 1.0f / (1.0f + std::exp(-v));
            return s * (1.0f + v * (1.0f - s));
        });
}

// ---- reductions ----

Tensor sum(const Tensor& x) {
    auto out = make_node({1});
    double acc = 0.0;
    for (float v : x.values()) acc += v;
    out->values[0] = static_cast<float>(acc);
    const bool rec = should_record({&x});
    NodePtr xn = x.node();
    return finish(std::move(out), "sum", rec, {xn}, [xn](Node& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        const float g = self.grad[0];
        for (auto& gv : xn->grad) gv += g;
    });
}

Tensor mean(const Tensor& x) {
    auto out = make_node({1});
    double acc = 0.0;
    for (float v : x.values()) acc += v;
    const int64_t n = x.size();
    out->values[0] = static_cast<float>(acc / static_cast<double>(n));
    const bool rec = should_record({&x});
    NodePtr xn = x.node();
    return finish(std::move(out), "mean", rec, {xn}, [xn, n](Node& self) {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        const float g = self.grad[0] / static_cast<float>(n);
        for (auto& gv : xn->grad) gv += g;
    });
}

// ---- neural blocks ----

Tensor conv2d(const Tensor& in, const Tensor& w, const Tensor& bias, int pad) {
    if (in.ndim() != 4 || w.ndim() != 4) {
        throw std::invalid_argument("conv2d: expected in [N,H,W,Ci], w [KH,KW,Ci,Co]");
    }
    const int N = in.dim(0), H = in.dim(1), W = in.dim(2), Ci = in.dim(3);
    const int KH = w.dim(0), KW = w.dim(1), Co = w.dim(3);
    if (w.dim(2) != Ci) {
        throw std::invalid_argument("conv2d: input has " + std::to_string(Ci) +
                                    " channels, kernel expects " + std::to_string(w.dim(2)));
    }
    if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != Co)) {
        throw std::invalid_argument("conv2d: bias shape mismatch");
    }
    const int OH = H + 2 * pad - KH + 1;
    const int OW = W + 2 * pad - KW + 1;
    if (OH <= 0 || OW <= 0) {
        throw std::invalid_argument("conv2d: kernel larger than padded input");
    }

    auto out = make_node({N, OH, OW, Co});
    const float* ip = in.values().data();
    const float* wp = w.values().data();
    const float* bp = bias.defined() ? bias.values().data() : nullptr;
    float* op = out->values.data();

    for (int n = 0; n < N; ++n) {
        for (int oy = 0; oy < OH; ++oy) {
            for (int ox = 0; ox < OW; ++ox) {
                float* orow = op + (((int64_t)n * OH + oy) * OW + ox) * Co;
                if (bp) {
                    for (int co = 0; co < Co; ++co) orow[co] = bp[co];
                } else {
                    for (int co = 0; co < Co; ++co) orow[co] = 0.0f;
                }
                for (int ky = 0; ky < KH; ++ky) {
                    const int iy = oy + ky - pad;
                    if (iy < 0 || iy >= H) continue;
                    for (int kx = 0; kx < KW; ++kx) {
                        const int ix = ox + kx - pad;
                        if (ix < 0 || ix >= W) continue;
                        const float* irow = ip + (((int64_t)n * H + iy) * W + ix) * Ci;
                        const float* wrow = wp + ((int64_t)(ky * KW + kx) * Ci) * Co;
                        for (int ci = 0; ci < Ci; ++ci) {
                            const float v = irow[ci];
                            const float* wr = wrow + (int64_t)ci * Co;
                            for (int co = 0; co < Co; ++co) {
                                orow[co] += v * wr[co];
                            }
                        }
                    }
                }
            }
        }
    }

    const bool rec = should_record({&in, &w, &bias});
    NodePtr inn = in.node(), wn = w.node(), bn = bias.defined() ? bias.node() : nullptr;
    std::vector<NodePtr> parents = {inn, wn};
    if (bn) parents.push_back(bn);
    return finish(std::move(out), "conv2d", rec, std::move(parents),
                  [inn, wn, bn, N, H, W, Ci, KH, KW, Co, OH, OW, pad](Node& self) {
                      const float* gp = self.grad.data();
                      const float* ip = inn->values.data();
                      const float* wp = wn->values.data();
                      if (inn->requires_grad) {
                          inn->ensure_grad();
                          float* gi = inn->grad.data();
                          for (int n = 0; n < N; ++n) {
                              for (int oy = 0; oy < OH; ++oy) {
                                  for (int ox = 0; ox < OW; ++ox) {
                                      const float* grow =
                                          gp + (((int64_t)n * OH + oy) * OW + ox) * Co;
                                      for (int ky = 0; ky < KH; ++ky) {
                                          const int iy = oy + ky - pad;
                                          if (iy < 0 || iy >= H) continue;
                                          for (int kx = 0; kx < KW; ++kx) {
                                              const int ix = ox + kx - pad;
                                              if (ix < 0 || ix >= W) continue;
                                              float* girow =
                                                  gi + (((int64_t)n * H + iy) * W + ix) * Ci;
                                              const float* wrow =
                                                  wp + ((int64_t)(ky * KW + kx) * Ci) * Co;
                                              for (int ci = 0; ci < Ci; ++ci) {
                                                  const float* wr = wrow + (int64_t)ci * Co;
                                                  float s = 0.0f;
                                                  for (int co = 0; co < Co; ++co) {
                                                      s += grow[co] * wr[co];
                                                  }
                                                  girow[ci] += s;
                                              }
                                          }
                                      }
                                  }
                              }
                          }
                      }
                      if (wn->requires_grad) {
                          wn->ensure_grad();
                          float* gw = wn->grad.data();
                          for (int n = 0; n < N; ++n) {
                              for (int oy = 0; oy < OH; ++oy) {
                                  for (int ox = 0; ox < OW; ++ox) {
                                      const float* grow =
                                          gp + (((int64_t)n * OH + oy) * OW + ox) * Co;
                                      for (int ky = 0; ky < KH; ++ky) {
                                          const int iy = oy + ky - pad;
                                          if (iy < 0 || iy >= H) continue;
                                          for (int kx = 0; kx < KW; ++kx) {
                                              const int ix = ox + kx - pad;
                                              if (ix < 0 || ix >= W) continue;
                                              const float* irow =
                                                  ip + (((int64_t)n * H + iy) * W + ix) * Ci;
                                              float* gwrow =
                                                  gw + ((int64_t)(ky * KW + kx) * Ci) * Co;
                                              for (int ci = 0; ci < Ci; ++ci) {
                                                  const float v = irow[ci];
                                                  float* gwr = gwrow + (int64_t)ci * Co;
                                                  for (int co = 0; co < Co; ++co) {
                                                      gwr[co] += v * grow[co];
                                                  }
                                              }
                                          }
                                      }
                                  }
                              }
                          }
                      }
                      if (bn && bn->requires_grad) {
                          bn->ensure_grad();
                          float* gb = bn->grad.data();
                          const int64_t sites = (int64_t)N * OH * OW;
                          for (int64_t s = 0; s < sites; ++s) {
                              const float* grow = gp + s * Co;
                              for (int co = 0; co < Co; ++co) gb[co] += grow[co];
                          }
                      }
                  });
}

Tensor group_norm(const Tensor& in, const Tensor& gamma, const Tensor& beta, int groups,
                  float eps) {
    if (in.ndim() != 4) {
        throw std::invalid_argument("group_norm: expected [N,H,W,C]");
    }
    const int N = in.dim(0), H = in.dim(1), W = in.dim(2), C = in.dim(3);
    if (groups <= 0 || C % groups != 0) {
        throw std::invalid_argument("group_norm: " + std::to_string(C) +
                                    " channels not divisible into " + std::to_string(groups) +
                                    " groups");
    }
    if (gamma.size() != C || beta.size() != C) {
        throw std::invalid_argument("group_norm: gamma/beta must have C entries");
    }
    const int Cg = C / groups;
    const int64_t S = (int64_t)H * W * Cg;  // elements per (sample, group)

    auto out = make_node(in.shape());
    const float* ip = in.values().data();
    const float* gmp = gamma.values().data();
    const float* btp = beta.values().data();
    float* op = out->values.data();

    std::vector<float> means((size_t)N * groups), inv_stds((size_t)N * groups);
    for (int n = 0; n < N; ++n) {
        for (int g = 0; g < groups; ++g) {
            double sum = 0.0, sq = 0.0;
            for (int y = 0; y < H; ++y) {
                for (int x = 0; x < W; ++x) {
                    const float* row = ip + (((int64_t)n * H + y) * W + x) * C + g * Cg;
                    for (int c = 0; c < Cg; ++c) {
                        const double v = row[c];
                        sum += v;
                        sq += v * v;
                    }
                }
            }
            const double m = sum / (double)S;
            const double var = sq / (double)S - m * m;
            const float inv = static_cast<float>(1.0 / std::sqrt(var + (double)eps));
            means[(size_t)n * groups + g] = static_cast<float>(m);
            inv_stds[(size_t)n * groups + g] = inv;
            for (int y = 0; y < H; ++y) {
                for (int x = 0; x < W; ++x) {
                    const int64_t base = (((int64_t)n * H + y) * W + x) * C + g * Cg;
                    for (int c = 0; c < Cg; ++c) {
                        const float xhat = (ip[base + c] - (float)m) * inv;
                        op[base + c] = gmp[g * Cg + c] * xhat + btp[g * Cg + c];
                    }
                }
            }
        }
    }

    const bool rec = should_record({&in, &gamma, &beta});
    NodePtr inn = in.node(), gn = gamma.node(), btn = beta.node();
    return finish(std::move(out), "group_norm", rec, {inn, gn, btn},
                  [inn, gn, btn, N, H, W, C, Cg, groups, S, means = std::move(means),
                   inv_stds = std::move(inv_stds)](Node& self) {
                      const float* gp = self.grad.data();
                      const float* ip = inn->values.data();
                      const float* gmp = gn->values.data();
                      const bool need_in = inn->requires_grad;
                      const bool need_gamma = gn->requires_grad;
                      const bool need_beta = btn->requires_grad;
                      if (need_in) inn->ensure_grad();
                      if (need_gamma) gn->ensure_grad();
                      if (need_beta) btn->ensure_grad();
                      for (int n = 0; n < N; ++n) {
                          for (int g = 0; g < groups; ++g) {
                              const float m = means[(size_t)n * groups + g];
                              const float inv = inv_stds[(size_t)n * groups + g];
                              // First pass: reductions over the group.
                              double sum1 = 0.0, sum2 = 0.0;
                              for (int y = 0; y < H; ++y) {
                                  for (int x = 0; x < W; ++x) {
                                      const int64_t base =
                                          (((int64_t)n * H + y) * W + x) * C + g * Cg;
                                      for (int c = 0; c < Cg; ++c) {
                                          const float xhat = (ip[base + c] - m) * inv;
                                          const float dxhat = gp[base + c] * gmp[g * Cg + c];
                                          sum1 += dxhat;
                                          sum2 += dxhat * xhat;
                                          if (need_gamma) {
                                              gn->grad[g * Cg + c] += gp[base + c] * xhat;
                                          }
                                          if (need_beta) {
                                              btn->grad[g * Cg + c] += gp[base + c];
                                          }
                                      }
                                  }
                              }
                              if (!need_in) continue;
                              const float k1 = static_cast<float>(sum1 / (double)S);
                              const float k2 = static_cast<float>(sum2 / (double)S);
                              for (int y = 0; y < H; ++y) {
                                  for (int x = 0; x < W; ++x) {
                                      const int64_t base =
                                          (((int64_t)n * H + y) * W + x) * C + g * Cg;
                                      for (int c = 0; c < Cg; ++c) {
                                          const float xhat = (ip[base + c] - m) * inv;
                                          const float dxhat = gp[base + c] * gmp[g * Cg + c];
                                          inn->grad[base + c] += inv * (dxhat - k1 - xhat * k2);
                                      }
                                  }
                              }
                          }
                      }
                  });
}

Tensor linear(const Tensor& in, const Tensor& w, const Tensor& bias) {
    if (in.ndim() != 2 || w.ndim() != 2) {
        throw std::invalid_argument("linear: expected in [N,K], w [K,M]");
    }
    const int N = in.dim(0), K = in.dim(1), M = w.dim(1);
    if (w.dim(0) != K) {
        throw std::invalid_argument("linear: inner dimension mismatch");
    }
    if (bias.defined() && bias.size() != M) {
        throw std::invalid_argument("linear: bias shape mismatch");
    }
    auto out = make_node({N, M});
    const float* ip = in.values().data();
    const float* wp = w.values().data();
    const float* bp = bias.defined() ? bias.values().data() : nullptr;
    float* op = out->values.data();
    for (int n = 0; n < N; ++n) {
        float* orow = op + (int64_t)n * M;
        if (bp) {
            for (int m = 0; m < M; ++m) orow[m] = bp[m];
        } else {
            for (int m = 0; m < M; ++m) orow[m] = 0.0f;
        }
        const float* irow = ip + (int64_t)n * K;
        for (int k = 0; k < K; ++k) {
            const float v = irow[k];
            const float* wrow = wp + (int64_t)k * M;
            for (int m = 0; m < M; ++m) orow[m] += v * wrow[m];
        }
    }
    const bool rec = should_record({&in, &w, &bias});
    NodePtr inn = in.node(), wn = w.node(), bn = bias.defined() ? bias.node() : nullptr;
    std::vector<NodePtr> parents = {inn, wn};
    if (bn) parents.push_back(bn);
    return finish(std::move(out), "linear", rec, std::move(parents),
                  [inn, wn, bn, N, K, M](Node& self) {
                      const float* gp = self.grad.data();
                      if (inn->requires_grad) {
                          inn->ensure_grad();
                          const float* wp = wn->values.data();
                          for (int n = 0; n < N; ++n) {
                              const float* grow = gp + (int64_t)n * M;
                              float* girow = inn->grad.data() + (int64_t)n * K;
                              for (int k = 0; k < K; ++k) {
                                  const float* wrow = wp + (int64_t)k * M;
                                  float s = 0.0f;
                                  for (int m = 0; m < M; ++m) s += grow[m] * wrow[m];
                                  girow[k] += s;
                              }
                          }
                      }
                      if (wn->requires_grad) {
                          wn->ensure_grad();
                          const float* ip = inn->values.data();
                          float* gw = wn->grad.data();
                          for (int n = 0; n < N; ++n) {
                              const float* irow = ip + (int64_t)n * K;
                              const float* grow = gp + (int64_t)n * M;
                              for (int k = 0; k < K; ++k) {
                                  const float v = irow[k];
                                  float* gwrow = gw + (int64_t)k * M;
                                  for (int m = 0; m < M; ++m) gwrow[m] += v * grow[m];
                              }
                          }
                      }
                      if (bn && bn->requires_grad) {
                          bn->ensure_grad();
                          for (int n = 0; n < N; ++n) {
                              const float* grow = gp + (int64_t)n * M;
                              for (int m = 0; m < M; ++m) bn->grad[m] += grow[m];
                          }
                      }
                  });
}

Tensor embedding(const Tensor& table, const std::vector<int>& ids) {
    if (table.ndim() != 2) {
        throw std::invalid_argument("embedding: table must be [V,E]");
    }
    const int V = table.dim(0), E = table.dim(1);
    const int N = static_cast<int>(ids.size());
    for (int id : ids) {
        if (id < 0 || id >= V) {
            throw std::out_of_range("embedding: id " + std::to_string(id) + " outside table of " +
                                    std::to_string(V));
        }
    }
    auto out = make_node({N, E});
    const float* tp = table.values().data();
    float* op = out->values.data();
    for (int n = 0; n < N; ++n) {
        const float* row = tp + (int64_t)ids[(size_t)n] * E;
        std::copy(row, row + E, op + (int64_t)n * E);
    }
    const bool rec = should_record({&table});
    NodePtr tn = table.node();
    return finish(std::move(out), "embedding", rec, {tn}, [tn, ids, E](Node& self) {
        if (!tn->requires_grad) return;
        tn->ensure_grad();
        const float* gp = self.grad.data();
        for (size_t n = 0; n < ids.size(); ++n) {
            float* trow = tn->grad.data() + (int64_t)ids[n] * E;
            const float* grow = gp + (int64_t)n * E;
            for (int e = 0; e < E; ++e) trow[e] += grow[e];
        }
    });
}

Tensor bag_embedding(const Tensor& table, const std::vector<std::vector<int>>& bags) {
    if (table.ndim() != 2) {
        throw std::invalid_argument("bag_embedding: table must be [V,E]");
    }
    const int V = table.dim(0), E = table.dim(1);
    const int N = static_cast<int>(bags.size());
    if (N == 0) {
        throw std::invalid_argument("bag_embedding: empty batch");
    }
    for (const auto& bag : bags) {
        for (int id : bag) {
            if (id < 0 || id >= V) {
                throw std::out_of_range("bag_embedding: id outside table");
            }
        }
    }
    auto out = make_node({N, E});
    const float* tp = table.values().data();
    float* op = out->values.data();
    for (int n = 0; n < N; ++n) {
        float* orow = op + (int64_t)n * E;
        std::fill(orow, orow + E, 0.0f);
        for (int id : bags[(size_t)n]) {
            const float* row = tp + (int64_t)id * E;
            for (int e = 0; e < E; ++e) orow[e] += row[e];
        }
    }
    const bool rec = should_record({&table});
    NodePtr tn = table.node();
    return finish(std::move(out), "bag_embedding", rec, {tn}, [tn, bags, E](Node& self) {
        if (!tn->requires_grad) return;
        tn->ensure_grad();
        const float* gp = self.grad.data();
        for (size_t n = 0; n < bags.size(); ++n) {
            const float* grow = gp + (int64_t)n * E;
            for (int id : bags[n]) {
                float* trow = tn->grad.data() + (int64_t)id * E;
                for (int e = 0; e < E; ++e) trow[e] += grow[e];
            }
        }
    });
}

Tensor downsample2x(const Tensor& in) {
    if (in.ndim() != 4 || in.dim(1) % 2 != 0 || in.dim(2) % 2 != 0) {
        throw std::invalid_argument("downsample2x: expected [N,H,W,C] with even H,W");
    }
    const int N = in.dim(0), H = in.dim(1), W = in.dim(2), C = in.dim(3);
    const int OH = H / 2, OW = W / 2;
    auto out = make_node({N, OH, OW, C});
    const float* ip = in.values().data();
    float* op = out->values.data();
    for (int n = 0; n < N; ++n) {
        for (int y = 0; y < OH; ++y) {
            for (int x = 0; x < OW; ++x) {
                const float* irow = ip + (((int64_t)n * H + 2 * y) * W + 2 * x) * C;
                float* orow = op + (((int64_t)n * OH + y) * OW + x) * C;
                std::copy(irow, irow + C, orow);
            }
        }
    }
    const bool rec = should_record({&in});
    NodePtr inn = in.node();
    return finish(std::move(out), "downsample2x", rec, {inn},
                  [inn, N, H, W, C, OH, OW](Node& self) {
                      if (!inn->requires_grad) return;
                      inn->ensure_grad();
                      const float* gp = self.grad.data();
                      for (int n = 0; n < N; ++n) {
                          for (int y = 0; y < OH; ++y) {
                              for (int x = 0; x < OW; ++x) {
                                  float* girow =
                                      inn->grad.data() + (((int64_t)n * H + 2 * y) * W + 2 * x) * C;
                                  const float* grow = gp + (((int64_t)n * OH + y) * OW + x) * C;
                                  for (int c = 0; c < C; ++c) girow[c] += grow[c];
                              }
                          }
                      }
                  });
}

Tensor upsample2x(const Tensor& in) {
    if (in.ndim() != 4) {
        throw std::invalid_argument("upsample2x: expected [N,H,W,C]");
    }
    const int N = in.dim(0), H = in.dim(1), W = in.dim(2), C = in.dim(3);
    const int OH = H * 2, OW = W * 2;
    auto out = make_node({N, OH, OW, C});
    const float* ip = in.values().data();
    float* op = out->values.data();
    for (int n = 0; n < N; ++n) {
        for (int y = 0; y < OH; ++y) {
            for (int x = 0; x < OW; ++x) {
                const float* irow = ip + (((int64_t)n * H + y / 2) * W + x / 2) * C;
                float* orow = op + (((int64_t)n * OH + y) * OW + x) * C;
                std::copy(irow, irow + C, orow);
            }
        }
    }
    const bool rec = should_record({&in});
    NodePtr inn = in.node();
    return finish(std::move(out), "upsample2x", rec, {inn}, [inn, N, H, W, C, OH, OW](Node& self) {
        if (!inn->requires_grad) return;
        inn->ensure_grad();
        const float* gp = self.grad.data();
        for (int n = 0; n < N; ++n) {
            for (int y = 0; y < OH; ++y) {
                for (int x = 0; x < OW; ++x) {
                    float* girow = inn->grad.data() + (((int64_t)n * H + y / 2) * W + x / 2) * C;
                    const float* grow = gp + (((int64_t)n * OH + y) * OW + x) * C;
                    for (int c = 0; c < C; ++c) girow[c] += grow[c];
                }
            }
        }
    });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 4 || b.ndim() != 4 || a.dim(0) != b.dim(0) || a.dim(1) != b.dim(1) ||
        a.dim(2) != b.dim(2)) {
        throw std::invalid_argument("concat_channels: spatial/batch dims must match, got " +
                                    shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    const int N = a.dim(0), H = a.dim(1), W = a.dim(2), Ca = a.dim(3), Cb = b.dim(3);
    const int C = Ca + Cb;
    auto out = make_node({N, H, W, C});
    const float* ap = a.values().data();
    const float* bp = b.values().data();
    float* op = out->values.data();
    const int64_t sites = (int64_t)N * H * W;
    for (int64_t s = 0; s < sites; ++s) {
        std::copy(ap + s * Ca, ap + (s + 1) * Ca, op + s * C);
        std::copy(bp + s * Cb, bp + (s + 1) * Cb, op + s * C + Ca);
    }
    const bool rec = should_record({&a, &b});
    NodePtr an = a.node(), bn = b.node();
    return finish(std::move(out), "concat_channels", rec, {an, bn},
                  [an, bn, sites, Ca, Cb, C](Node& self) {
                      const float* gp = self.grad.data();
                      if (an->requires_grad) {
                          an->ensure_grad();
                          for (int64_t s = 0; s < sites; ++s) {
                              const float* grow = gp + s * C;
                              float* garow = an->grad.data() + s * Ca;
                              for (int c = 0; c < Ca; ++c) garow[c] += grow[c];
                          }
                      }
                      if (bn->requires_grad) {
                          bn->ensure_grad();
                          for (int64_t s = 0; s < sites; ++s) {
                              const float* grow = gp + s * C + Ca;
                              float* gbrow = bn->grad.data() + s * Cb;
                              for (int c = 0; c < Cb; ++c) gbrow[c] += grow[c];
                          }
                      }
                  });
}

Tensor broadcast_add_channels(const Tensor& in, const Tensor& v) {
    if (in.ndim() != 4 || v.ndim() != 2 || v.dim(0) != in.dim(0) || v.dim(1) != in.dim(3)) {
        throw std::invalid_argument("broadcast_add_channels: expected [N,H,W,C] and [N,C]");
    }
    const int N = in.dim(0), H = in.dim(1), W = in.dim(2), C = in.dim(3);
    auto out = make_node(in.shape());
    const float* ip = in.values().data();
    const float* vp = v.values().data();
    float* op = out->values.data();
    for (int n = 0; n < N; ++n) {
        const float* vrow = vp + (int64_t)n * C;
        const int64_t base = (int64_t)n * H * W * C;
        for (int64_t s = 0; s < (int64_t)H * W; ++s) {
            const float* irow = ip + base + s * C;
            float* orow = op + base + s * C;
            for (int c = 0; c < C; ++c) orow[c] = irow[c] + vrow[c];
        }
    }
    const bool rec = should_record({&in, &v});
    NodePtr inn = in.node(), vn = v.node();
    return finish(std::move(out), "broadcast_add_channels", rec, {inn, vn},
                  [inn, vn, N, H, W, C](Node& self) {
                      const float* gp = self.grad.data();
                      if (inn->requires_grad) {
                          inn->ensure_grad();
                          const int64_t total = self.size();
                          for (int64_t i = 0; i < total; ++i) inn->grad[i] += gp[i];
                      }
                      if (vn->requires_grad) {
                          vn->ensure_grad();
                          for (int n = 0; n < N; ++n) {
                              float* gvrow = vn->grad.data() + (int64_t)n * C;
                              const int64_t base = (int64_t)n * H * W * C;
                              for (int64_t s = 0; s < (int64_t)H * W; ++s) {
                                  const float* grow = gp + base + s * C;
                                  for (int c = 0; c < C; ++c) gvrow[c] += grow[c];
                              }
                          }
                      }
                  });
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
    if (rows.empty()) {
        throw std::invalid_argument("stack_rows: empty input");
    }
    const Shape& s0 = rows[0].shape();
    for (const auto& r : rows) {
        if (!same_shape(r.shape(), s0)) {
            throw std::invalid_argument("stack_rows: inconsistent row shapes");
        }
    }
    Shape out_shape;
    out_shape.push_back(static_cast<int>(rows.size()));
    out_shape.insert(out_shape.end(), s0.begin(), s0.end());
    auto out = make_node(std::move(out_shape));
    const int64_t stride = rows[0].size();
    for (size_t k = 0; k < rows.size(); ++k) {
        auto vals = rows[k].values();
        std::copy(vals.begin(), vals.end(), out->values.begin() + (int64_t)k * stride);
    }
    bool rec = false;
    if (autograd::grad_enabled()) {
        for (const auto& r : rows) rec = rec || r.requires_grad();
    }
    std::vector<NodePtr> parents;
    parents.reserve(rows.size());
    for (const auto& r : rows) parents.push_back(r.node());
    return finish(std::move(out), "stack_rows", rec, parents, [parents, stride](Node& self) {
        for (size_t k = 0; k < parents.size(); ++k) {
            auto& p = parents[k];
            if (!p->requires_grad) continue;
            p->ensure_grad();
            const float* grow = self.grad.data() + (int64_t)k * stride;
            for (int64_t i = 0; i < stride; ++i) p->grad[i] += grow[i];
        }
    });
}

Tensor take_rows(const Tensor& in, const std::vector<int>& rows) {
    if (in.ndim() < 1) {
        throw std::invalid_argument("take_rows: input needs a leading axis");
    }
    if (rows.empty()) {
        throw std::invalid_argument("take_rows: empty row selection");
    }
    const int n = in.dim(0);
    const int64_t stride = in.size() / n;
    Shape out_shape = in.shape();
    out_shape[0] = static_cast<int>(rows.size());
    std::vector<float> data;
    data.reserve(static_cast<size_t>(stride) * rows.size());
    const auto vals = in.values();
    for (int r : rows) {
        if (r < 0 || r >= n) {
            throw std::out_of_range("take_rows: row index outside the leading axis");
        }
        data.insert(data.end(), vals.begin() + (int64_t)r * stride,
                    vals.begin() + (int64_t)(r + 1) * stride);
    }
    return Tensor::from_data(std::move(out_shape), std::move(data));
}

}  // namespace synthval
