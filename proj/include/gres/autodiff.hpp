#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <unordered_set>
#include <utility>
#include <vector>

#include "gres/tensor.hpp"

namespace gres::ad {

// Reverse-mode autodiff over Tensor values. Each op allocates one graph
// node whose `back` closure scatters the node's gradient into its parents.
// Graphs are rebuilt per step; leaves (parameters) persist across steps.
struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
    Tensor val;
    Tensor grad;
    bool requires_grad = false;
    std::vector<NodePtr> parents;
    std::function<void(Node&)> back;

    explicit Node(Tensor v, bool rg) : val(std::move(v)), requires_grad(rg) {
        grad = Tensor::zeros_like(val);
    }
};

struct Var {
    NodePtr n;

    Var() = default;
    explicit Var(NodePtr p) : n(std::move(p)) {}

    bool defined() const { return static_cast<bool>(n); }
    const Tensor& val() const { return n->val; }
    Tensor& val() { return n->val; }
    const Tensor& grad() const { return n->grad; }
    Tensor& grad() { return n->grad; }
    double scalar() const { return n->val.data[0]; }

    void zero_grad() { n->grad.fill(0.0); }
};

inline Var constant(Tensor t) { return Var(std::make_shared<Node>(std::move(t), false)); }

inline Var parameter(Tensor t) { return Var(std::make_shared<Node>(std::move(t), true)); }

// Builder for custom ops defined outside this header.
inline Var make_op(Tensor val, std::vector<Var> parents, std::function<void(Node&)> back) {
    bool rg = false;
    for (const Var& p : parents) rg = rg || p.n->requires_grad;
    auto node = std::make_shared<Node>(std::move(val), rg);
    if (rg) {
        node->parents.reserve(parents.size());
        for (Var& p : parents) node->parents.push_back(p.n);
        node->back = std::move(back);
    }
    return Var(node);
}

// Backpropagate from a scalar root through the whole reachable graph.
inline void backward(const Var& root) {
    if (root.n->val.numel() != 1)
        throw std::invalid_argument("backward: root must be scalar");
    if (!root.n->requires_grad) return;

    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.n.get(), 0);
    seen.insert(root.n.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    root.n->grad.data[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->back) (*it)->back(**it);
}

// ---------------------------------------------------------------------------
// Elementwise and dense ops
// ---------------------------------------------------------------------------

inline Var relu(const Var& x) {
    Tensor out = x.val();
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return make_op(std::move(out), {x}, [x](Node& self) {
        Tensor& gx = x.n->grad;
        for (std::size_t i = 0; i < gx.data.size(); ++i)
            if (x.n->val.data[i] > 0.0) gx.data[i] += self.grad.data[i];
    });
}

// y = W x + b, W: (M,K), x: (K), b: (M)
inline Var affine(const Var& W, const Var& b, const Var& x) {
    const int M = W.val().size(0), K = W.val().size(1);
    if (x.val().numel() != K || b.val().numel() != M)
        throw std::invalid_argument("affine: shape mismatch");
    Tensor out({M});
    for (int i = 0; i < M; ++i) {
        double s = b.val().at(i);
        for (int j = 0; j < K; ++j) s += W.val().at(i, j) * x.val().at(j);
        out.at(i) = s;
    }
    return make_op(std::move(out), {W, b, x}, [W, b, x, M, K](Node& self) {
        for (int i = 0; i < M; ++i) {
            const double g = self.grad.at(i);
            if (g == 0.0) continue;
            b.n->grad.at(i) += g;
            for (int j = 0; j < K; ++j) {
                W.n->grad.at(i, j) += g * x.n->val.at(j);
                x.n->grad.at(j) += g * W.n->val.at(i, j);
            }
        }
    });
}

// Mean of embedding-table rows selected by token indices. table: (V, C).
inline Var embed_mean(const Var& table, const std::vector<int>& indices) {
    if (indices.empty()) throw std::invalid_argument("embed_mean: empty index list");
    const int C = table.val().size(1);
    Tensor out({C});
    for (int idx : indices)
        for (int c = 0; c < C; ++c) out.at(c) += table.val().at(idx, c);
    const double inv = 1.0 / static_cast<double>(indices.size());
    for (double& v : out.data) v *= inv;
    return make_op(std::move(out), {table}, [table, indices, C, inv](Node& self) {
        for (int idx : indices)
            for (int c = 0; c < C; ++c) table.n->grad.at(idx, c) += inv * self.grad.at(c);
    });
}

// ---------------------------------------------------------------------------
// Convolutions (CHW layout)
// ---------------------------------------------------------------------------

// x: (Ci,H,W), W: (Co,Ci,k,k), b: (Co); zero padding.
inline Var conv2d(const Var& x, const Var& W, const Var& b, int stride, int pad) {
    const int Ci = x.val().size(0), H = x.val().size(1), Wd = x.val().size(2);
    const int Co = W.val().size(0), k = W.val().size(2);
    if (W.val().size(1) != Ci) throw std::invalid_argument("conv2d: channel mismatch");
    const int Ho = (H + 2 * pad - k) / stride + 1;
    const int Wo = (Wd + 2 * pad - k) / stride + 1;
    if (Ho <= 0 || Wo <= 0) throw std::invalid_argument("conv2d: output would be empty");

    Tensor out({Co, Ho, Wo});
#pragma omp parallel for schedule(static)
    for (int co = 0; co < Co; ++co) {
        for (int oy = 0; oy < Ho; ++oy)
            for (int ox = 0; ox < Wo; ++ox) {
                double s = b.val().at(co);
                for (int ci = 0; ci < Ci; ++ci)
                    for (int ky = 0; ky < k; ++ky) {
                        const int iy = oy * stride - pad + ky;
                        if (iy < 0 || iy >= H) continue;
                        for (int kx = 0; kx < k; ++kx) {
                            const int ix = ox * stride - pad + kx;
                            if (ix < 0 || ix >= Wd) continue;
                            s += x.val().at(ci, iy, ix) * W.val().at(co, ci, ky, kx);
                        }
                    }
                out.at(co, oy, ox) = s;
            }
    }
    return make_op(std::move(out), {x, W, b},
                   [x, W, b, Ci, H, Wd, Co, k, stride, pad, Ho, Wo](Node& self) {
        // dW and db: each co owned by one iteration.
#pragma omp parallel for schedule(static)
        for (int co = 0; co < Co; ++co) {
            for (int oy = 0; oy < Ho; ++oy)
                for (int ox = 0; ox < Wo; ++ox) {
                    const double g = self.grad.at(co, oy, ox);
                    if (g == 0.0) continue;
                    b.n->grad.at(co) += g;
                    for (int ci = 0; ci < Ci; ++ci)
                        for (int ky = 0; ky < k; ++ky) {
                            const int iy = oy * stride - pad + ky;
                            if (iy < 0 || iy >= H) continue;
                            for (int kx = 0; kx < k; ++kx) {
                                const int ix = ox * stride - pad + kx;
                                if (ix < 0 || ix >= Wd) continue;
                                W.n->grad.at(co, ci, ky, kx) += g * x.n->val.at(ci, iy, ix);
                            }
                        }
                }
        }
        if (!x.n->requires_grad) return;
        // dx: each ci owned by one iteration.
#pragma omp parallel for schedule(static)
        for (int ci = 0; ci < Ci; ++ci) {
            for (int co = 0; co < Co; ++co)
                for (int oy = 0; oy < Ho; ++oy)
                    for (int ox = 0; ox < Wo; ++ox) {
                        const double g = self.grad.at(co, oy, ox);
                        if (g == 0.0) continue;
                        for (int ky = 0; ky < k; ++ky) {
                            const int iy = oy * stride - pad + ky;
                            if (iy < 0 || iy >= H) continue;
                            for (int kx = 0; kx < k; ++kx) {
                                const int ix = ox * stride - pad + kx;
                                if (ix < 0 || ix >= Wd) continue;
                                x.n->grad.at(ci, iy, ix) += g * W.n->val.at(co, ci, ky, kx);
                            }
                        }
                    }
        }
    });
}

// Transposed conv, no padding. x: (Ci,H,W), W: (Ci,Co,k,k), b: (Co).
// out spatial size = (in - 1) * stride + k.
inline Var conv_transpose2d(const Var& x, const Var& W, const Var& b, int stride) {
    const int Ci = x.val().size(0), H = x.val().size(1), Wd = x.val().size(2);
    if (W.val().size(0) != Ci) throw std::invalid_argument("conv_transpose2d: channel mismatch");
    const int Co = W.val().size(1), k = W.val().size(2);
    const int Ho = (H - 1) * stride + k;
    const int Wo = (Wd - 1) * stride + k;

    Tensor out({Co, Ho, Wo});
#pragma omp parallel for schedule(static)
    for (int co = 0; co < Co; ++co) {
        const double bias = b.val().at(co);
        for (int i = 0; i < Ho * Wo; ++i) out.data[static_cast<std::size_t>(co) * Ho * Wo + i] = bias;
        for (int ci = 0; ci < Ci; ++ci)
            for (int iy = 0; iy < H; ++iy)
                for (int ix = 0; ix < Wd; ++ix) {
                    const double v = x.val().at(ci, iy, ix);
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx)
                            out.at(co, iy * stride + ky, ix * stride + kx) +=
                                v * W.val().at(ci, co, ky, kx);
                }
    }
    return make_op(std::move(out), {x, W, b},
                   [x, W, b, Ci, H, Wd, Co, k, stride](Node& self) {
#pragma omp parallel for schedule(static)
        for (int co = 0; co < Co; ++co) {
            for (int oy = 0; oy < self.val.size(1); ++oy)
                for (int ox = 0; ox < self.val.size(2); ++ox)
                    b.n->grad.at(co) += self.grad.at(co, oy, ox);
            for (int ci = 0; ci < Ci; ++ci)
                for (int iy = 0; iy < H; ++iy)
                    for (int ix = 0; ix < Wd; ++ix) {
                        const double v = x.n->val.at(ci, iy, ix);
                        for (int ky = 0; ky < k; ++ky)
                            for (int kx = 0; kx < k; ++kx)
                                W.n->grad.at(ci, co, ky, kx) +=
                                    v * self.grad.at(co, iy * stride + ky, ix * stride + kx);
                    }
        }
        if (!x.n->requires_grad) return;
#pragma omp parallel for schedule(static)
        for (int ci = 0; ci < Ci; ++ci) {
            for (int iy = 0; iy < H; ++iy)
                for (int ix = 0; ix < Wd; ++ix) {
                    double s = 0.0;
                    for (int co = 0; co < Co; ++co)
                        for (int ky = 0; ky < k; ++ky)
                            for (int kx = 0; kx < k; ++kx)
                                s += W.n->val.at(ci, co, ky, kx) *
                                     self.grad.at(co, iy * stride + ky, ix * stride + kx);
                    x.n->grad.at(ci, iy, ix) += s;
                }
        }
    });
}

// ---------------------------------------------------------------------------
// Reductions and structure ops
// ---------------------------------------------------------------------------

// Concatenate a (C,H,W) tensor with single-channel (H,W) maps along channels.
inline Var concat_channels(const Var& base, const std::vector<Var>& maps) {
    const int C = base.val().size(0), H = base.val().size(1), W = base.val().size(2);
    for (const Var& m : maps)
        if (m.val().size(0) != H || m.val().size(1) != W)
            throw std::invalid_argument("concat_channels: map shape mismatch");
    Tensor out({C + static_cast<int>(maps.size()), H, W});
    std::copy(base.val().data.begin(), base.val().data.end(), out.data.begin());
    std::size_t off = base.val().data.size();
    for (const Var& m : maps) {
        std::copy(m.val().data.begin(), m.val().data.end(), out.data.begin() + off);
        off += m.val().data.size();
    }
    std::vector<Var> parents = {base};
    parents.insert(parents.end(), maps.begin(), maps.end());
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    return make_op(std::move(out), parents, [base, maps, plane](Node& self) {
        for (std::size_t i = 0; i < base.n->grad.data.size(); ++i)
            base.n->grad.data[i] += self.grad.data[i];
        std::size_t off = base.n->grad.data.size();
        for (const Var& m : maps) {
            for (std::size_t i = 0; i < plane; ++i) m.n->grad.data[i] += self.grad.data[off + i];
            off += plane;
        }
    });
}

// Spatial global average pool: (C,H,W) -> (C).
inline Var global_avg_pool(const Var& x) {
    const int C = x.val().size(0), H = x.val().size(1), W = x.val().size(2);
    const double inv = 1.0 / (static_cast<double>(H) * W);
    Tensor out({C});
    for (int c = 0; c < C; ++c) {
        double s = 0.0;
        for (int y = 0; y < H; ++y)
            for (int xw = 0; xw < W; ++xw) s += x.val().at(c, y, xw);
        out.at(c) = s * inv;
    }
    return make_op(std::move(out), {x}, [x, C, H, W, inv](Node& self) {
        for (int c = 0; c < C; ++c) {
            const double g = self.grad.at(c) * inv;
            for (int y = 0; y < H; ++y)
                for (int xw = 0; xw < W; ++xw) x.n->grad.at(c, y, xw) += g;
        }
    });
}

// Euclidean distance between equal-length vectors; subgradient 0 at a == b.
inline Var l2_dist(const Var& a, const Var& b) {
    if (!a.val().same_shape(b.val())) throw std::invalid_argument("l2_dist: shape mismatch");
    const double d = l2_distance(a.val(), b.val());
    return make_op(Tensor::scalar(d), {a, b}, [a, b, d](Node& self) {
        if (d <= 1e-12) return;
        const double g = self.grad.data[0] / d;
        for (std::size_t i = 0; i < a.n->val.data.size(); ++i) {
            const double diff = a.n->val.data[i] - b.n->val.data[i];
            a.n->grad.data[i] += g * diff;
            b.n->grad.data[i] -= g * diff;
        }
    });
}

// max(x, 0) on a scalar; subgradient 0 at the kink.
inline Var hinge(const Var& x) {
    const double v = x.scalar();
    return make_op(Tensor::scalar(v > 0.0 ? v : 0.0), {x}, [x, v](Node& self) {
        if (v > 0.0) x.n->grad.data[0] += self.grad.data[0];
    });
}

// Mean binary cross-entropy of sigmoid(logits) against a {0,1} target,
// computed in the numerically stable softplus form.
inline Var bce_with_logits_mean(const Var& logits, const Tensor& target) {
    if (!logits.val().same_shape(target))
        throw std::invalid_argument("bce_with_logits_mean: shape mismatch");
    const std::size_t n = logits.val().data.size();
    const double inv = 1.0 / static_cast<double>(n);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double z = logits.val().data[i];
        const double t = target.data[i];
        loss += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
    }
    loss *= inv;
    return make_op(Tensor::scalar(loss), {logits}, [logits, target, n, inv](Node& self) {
        const double g = self.grad.data[0] * inv;
        for (std::size_t i = 0; i < n; ++i) {
            const double z = logits.n->val.data[i];
            const double s = 1.0 / (1.0 + std::exp(-z));
            logits.n->grad.data[i] += g * (s - target.data[i]);
        }
    });
}

// ---------------------------------------------------------------------------
// Scalar arithmetic
// ---------------------------------------------------------------------------

inline Var add(const Var& a, const Var& b) {
    return make_op(Tensor::scalar(a.scalar() + b.scalar()), {a, b}, [a, b](Node& self) {
        a.n->grad.data[0] += self.grad.data[0];
        b.n->grad.data[0] += self.grad.data[0];
    });
}

inline Var sub(const Var& a, const Var& b) {
    return make_op(Tensor::scalar(a.scalar() - b.scalar()), {a, b}, [a, b](Node& self) {
        a.n->grad.data[0] += self.grad.data[0];
        b.n->grad.data[0] -= self.grad.data[0];
    });
}

inline Var scale(const Var& a, double c) {
    return make_op(Tensor::scalar(a.scalar() * c), {a}, [a, c](Node& self) {
        a.n->grad.data[0] += c * self.grad.data[0];
    });
}

inline Var add_const(const Var& a, double c) {
    return make_op(Tensor::scalar(a.scalar() + c), {a}, [a](Node& self) {
        a.n->grad.data[0] += self.grad.data[0];
    });
}

inline Var mean_of(const std::vector<Var>& xs) {
    if (xs.empty()) throw std::invalid_argument("mean_of: empty list");
    double s = 0.0;
    for (const Var& x : xs) s += x.scalar();
    const double inv = 1.0 / static_cast<double>(xs.size());
    std::vector<Var> parents(xs.begin(), xs.end());
    return make_op(Tensor::scalar(s * inv), parents, [xs, inv](Node& self) {
        for (const Var& x : xs) x.n->grad.data[0] += inv * self.grad.data[0];
    });
}

} // namespace gres::ad
