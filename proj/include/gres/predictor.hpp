#pragma once

#include <stdexcept>
#include <vector>

#include "gres/autodiff.hpp"
#include "gres/encoders.hpp"
#include "gres/hierarchizer.hpp"

namespace gres {

// Mask predictor: stacks visual features with the language heatmap and the
// ranked vision heatmaps, embeds the stack for the positive/negative
// decision, and decodes full-resolution segmentation logits.

// z layout: channels [0, C_v) = V, channel C_v = language heatmap,
// channels C_v+1 .. C_v+N = ranked vision heatmaps.
inline ad::Var assemble_triphasic(const ad::Var& V, const ad::Var& Ml,
                                  const std::vector<ad::Var>& ranked_maps) {
    std::vector<ad::Var> maps;
    maps.reserve(1 + ranked_maps.size());
    maps.push_back(Ml);
    maps.insert(maps.end(), ranked_maps.begin(), ranked_maps.end());
    return ad::concat_channels(V, maps);
}

struct EmbedHeadParams {
    ad::Var w; // (C_v, z_channels)
    ad::Var b; // (C_v)

    EmbedHeadParams() = default;

    EmbedHeadParams(Rng& rng, int c_v, int z_channels) {
        w = ad::parameter(init::kaiming(rng, {c_v, z_channels}));
        b = ad::parameter(init::bias(rng, c_v, z_channels));
    }
};

// Spatial mean of z followed by an affine map into the language space.
inline ad::Var embed_group_features(const EmbedHeadParams& p, const ad::Var& z) {
    return ad::affine(p.w, p.b, ad::global_avg_pool(z));
}

struct Decision {
    bool is_positive = false;
    double d_pos = 0.0;
    double d_neg = 0.0;
};

// Positive iff the embedding is closer to the expression than to the
// anti-expression by more than the margin (strict inequality).
inline Decision decide(const Tensor& e, const Tensor& lp, const Tensor& lp_anti, double m) {
    if (m < 0.0) throw std::invalid_argument("decide: margin must be nonnegative");
    Decision d;
    d.d_pos = l2_distance(e, lp);
    d.d_neg = l2_distance(e, lp_anti);
    d.is_positive = d.d_pos + m < d.d_neg;
    return d;
}

struct DecoderParams {
    ad::Var t1w, t1b; // z_channels -> d1, transposed, stride 2
    ad::Var t2w, t2b; // d1 -> d2, transposed, stride 2
    ad::Var hw, hb;   // d2 -> 1, pointwise

    int d1 = 0, d2 = 0;

    DecoderParams() = default;

    DecoderParams(Rng& rng, int z_channels, int d1_ = 32, int d2_ = 16) : d1(d1_), d2(d2_) {
        t1w = ad::parameter(init::kaiming(rng, {z_channels, d1, 2, 2}));
        t1b = ad::parameter(init::bias(rng, d1, static_cast<long long>(z_channels) * 4));
        t2w = ad::parameter(init::kaiming(rng, {d1, d2, 2, 2}));
        t2b = ad::parameter(init::bias(rng, d2, static_cast<long long>(d1) * 4));
        hw = ad::parameter(init::kaiming(rng, {1, d2, 1, 1}));
        hb = ad::parameter(init::bias(rng, 1, d2));
    }
};

namespace detail {

// (1,H,W) -> (H,W); gradient passes through unchanged.
inline ad::Var squeeze_channel(const ad::Var& x) {
    if (x.val().size(0) != 1) throw std::invalid_argument("squeeze_channel: C != 1");
    Tensor out({x.val().size(1), x.val().size(2)});
    out.data = x.val().data;
    return ad::make_op(std::move(out), {x}, [x](ad::Node& self) {
        for (std::size_t i = 0; i < self.grad.data.size(); ++i)
            x.n->grad.data[i] += self.grad.data[i];
    });
}

} // namespace detail

// Two stride-2 upsampling blocks and a pointwise head: (Cz, H, W) logits
// at (4H, 4W). Predicted mask = logits > 0.
inline ad::Var decode_mask(const DecoderParams& p, const ad::Var& z) {
    ad::Var h = ad::relu(ad::conv_transpose2d(z, p.t1w, p.t1b, /*stride=*/2));
    h = ad::relu(ad::conv_transpose2d(h, p.t2w, p.t2b, /*stride=*/2));
    return detail::squeeze_channel(ad::conv2d(h, p.hw, p.hb, /*stride=*/1, /*pad=*/0));
}

// Binary mask from logits under the decision contract: a negative decision
// always yields the all-zero mask.
inline Tensor emit_mask(const Tensor& logits, const Decision& decision) {
    Tensor mask(logits.shape);
    if (!decision.is_positive) return mask;
    for (std::size_t i = 0; i < logits.data.size(); ++i)
        mask.data[i] = logits.data[i] > 0.0 ? 1.0 : 0.0;
    return mask;
}

} // namespace gres
