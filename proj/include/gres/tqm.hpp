#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "gres/autodiff.hpp"

namespace gres {

// Triphasic query: a language-activated heatmap per image, a prototype per
// image pooled under that heatmap, and one vision-activated heatmap per
// (image, prototype) pair. All maps are cosine similarities in [-1, 1].

constexpr double kNormEps = 1e-8;

// Cross-modal projection: maps the sentence vector into visual-feature space.
inline ad::Var project_language(const ad::Var& W, const ad::Var& b, const ad::Var& L) {
    return ad::affine(W, b, L);
}

// Per-cell cosine similarity between feature columns of V (C,H,W) and a
// query vector q (C). Cells (or queries) with near-zero norm get similarity
// 0 and pass no gradient.
inline ad::Var cosine_map(const ad::Var& V, const ad::Var& q) {
    const int C = V.val().size(0), H = V.val().size(1), W = V.val().size(2);
    if (q.val().numel() != C) throw std::invalid_argument("cosine_map: channel mismatch");

    const double nq = l2_norm(q.val());
    Tensor out({H, W});
    Tensor col_norm({H, W});
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            double a = 0.0, vv = 0.0;
            for (int c = 0; c < C; ++c) {
                const double v = V.val().at(c, y, x);
                a += v * q.val().at(c);
                vv += v * v;
            }
            const double nv = std::sqrt(vv);
            col_norm.at(y, x) = nv;
            out.at(y, x) = (nv > kNormEps && nq > kNormEps) ? a / (nv * nq) : 0.0;
        }
    return ad::make_op(std::move(out), {V, q}, [V, q, C, H, W, nq, col_norm](ad::Node& self) {
        if (nq <= kNormEps) return;
        const double nq2 = nq * nq;
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                const double g = self.grad.at(y, x);
                if (g == 0.0) continue;
                const double nv = col_norm.at(y, x);
                if (nv <= kNormEps) continue;
                const double m = self.val.at(y, x);
                const double inv_vq = 1.0 / (nv * nq);
                const double nv2 = nv * nv;
                for (int c = 0; c < C; ++c) {
                    const double v = V.n->val.at(c, y, x);
                    const double qq = q.n->val.at(c);
                    V.n->grad.at(c, y, x) += g * (qq * inv_vq - m * v / nv2);
                    q.n->grad.at(c) += g * (v * inv_vq - m * qq / nq2);
                }
            }
    });
}

inline ad::Var language_heatmap(const ad::Var& V, const ad::Var& Lp) {
    return cosine_map(V, Lp);
}

// Mask average pooling: weights are the heatmap shifted from [-1,1] to
// [0,1]; the prototype is the weight-normalized spatial mean of V.
// If every weight vanishes the prototype is the zero vector and
// `degenerate` (when given) is set.
inline ad::Var extract_prototype(const ad::Var& V, const ad::Var& M, bool* degenerate = nullptr) {
    const int C = V.val().size(0), H = V.val().size(1), W = V.val().size(2);
    if (M.val().size(0) != H || M.val().size(1) != W)
        throw std::invalid_argument("extract_prototype: heatmap shape mismatch");

    double wsum = 0.0;
    for (double m : M.val().data) wsum += 0.5 * (m + 1.0);
    const bool degen = wsum <= kNormEps;
    if (degenerate) *degenerate = degen;

    Tensor out({C});
    if (!degen) {
        const double inv = 1.0 / wsum;
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                const double w = 0.5 * (M.val().at(y, x) + 1.0) * inv;
                for (int c = 0; c < C; ++c) out.at(c) += w * V.val().at(c, y, x);
            }
    }
    Tensor proto = out;
    return ad::make_op(std::move(out), {V, M}, [V, M, C, H, W, wsum, degen, proto](ad::Node& self) {
        if (degen) return;
        const double inv = 1.0 / wsum;
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                const double w = 0.5 * (M.n->val.at(y, x) + 1.0) * inv;
                double dm = 0.0;
                for (int c = 0; c < C; ++c) {
                    const double g = self.grad.at(c);
                    V.n->grad.at(c, y, x) += g * w;
                    dm += g * (V.n->val.at(c, y, x) - proto.at(c));
                }
                M.n->grad.at(y, x) += 0.5 * inv * dm;
            }
    });
}

// One vision-activated heatmap per prototype, in prototype order.
inline std::vector<ad::Var> vision_heatmaps(const ad::Var& V,
                                            const std::vector<ad::Var>& prototypes) {
    if (prototypes.empty()) throw std::invalid_argument("vision_heatmaps: no prototypes");
    std::vector<ad::Var> maps;
    maps.reserve(prototypes.size());
    for (const ad::Var& p : prototypes) maps.push_back(cosine_map(V, p));
    return maps;
}

} // namespace gres
