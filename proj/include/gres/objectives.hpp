#pragma once

#include <stdexcept>

#include "gres/autodiff.hpp"

namespace gres {

// Training objectives: per-pixel segmentation cross-entropy, the triplet
// margin loss over group embeddings, and the ramped composite.

inline ad::Var seg_loss(const ad::Var& logits, const Tensor& target) {
    if (!logits.val().same_shape(target))
        throw std::invalid_argument("seg_loss: logits/target shape mismatch");
    return ad::bce_with_logits_mean(logits, target);
}

// For a ground-truth positive the anchor should sit nearer the expression
// than the anti-expression by the margin; for a negative, the reverse.
inline ad::Var triplet_loss(const ad::Var& e, const ad::Var& lp, const ad::Var& lp_anti,
                            bool is_positive_gt, double m) {
    if (m < 0.0) throw std::invalid_argument("triplet_loss: margin must be nonnegative");
    const ad::Var d_pos = ad::l2_dist(e, lp);
    const ad::Var d_neg = ad::l2_dist(e, lp_anti);
    const ad::Var gap = is_positive_gt ? ad::sub(d_pos, d_neg) : ad::sub(d_neg, d_pos);
    return ad::hinge(ad::add_const(gap, m));
}

struct LossTerms {
    double ce = 0.0;
    double ce_mirror = 0.0;
    double tri = 0.0;
    double total = 0.0;
    double epoch_weight = 0.0; // t / T
    double lambda = 0.0;
    bool had_positives = true; // false when ce/ce_mirror are placeholder zeros
};

// total = ce + lambda * ce_mirror + (t/T) * tri. Cross-entropy terms are
// computed over ground-truth positives only; the triplet term over all
// images (callers enforce this when aggregating).
inline ad::Var total_loss(const ad::Var& ce, const ad::Var& ce_mirror, const ad::Var& tri,
                          int t, int T, double lambda, LossTerms* terms = nullptr) {
    if (T < 1 || t < 0 || t > T) throw std::invalid_argument("total_loss: need 0 <= t <= T, T >= 1");
    if (lambda < 0.0) throw std::invalid_argument("total_loss: lambda must be nonnegative");
    const double ramp = static_cast<double>(t) / static_cast<double>(T);
    const ad::Var total =
        ad::add(ce, ad::add(ad::scale(ce_mirror, lambda), ad::scale(tri, ramp)));
    if (terms) {
        terms->ce = ce.scalar();
        terms->ce_mirror = ce_mirror.scalar();
        terms->tri = tri.scalar();
        terms->total = total.scalar();
        terms->epoch_weight = ramp;
        terms->lambda = lambda;
    }
    return total;
}

} // namespace gres
