#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gres/config.hpp"
#include "gres/dataset.hpp"
#include "gres/encoders.hpp"
#include "gres/hierarchizer.hpp"
#include "gres/objectives.hpp"
#include "gres/predictor.hpp"
#include "gres/tqm.hpp"

namespace gres {

// The full grouped referring segmenter: text/image encoders, the triphasic
// query module, the heatmap hierarchizer, and the mask predictor, with the
// mirror pass available for training.
struct Model {
    RunConfig cfg;
    Vocabulary vocab;

    TextEncoderParams text;
    ad::Var proj_w, proj_b; // shared cross-modal projection
    ImageEncoderParams image;
    EmbedHeadParams embed_head;
    DecoderParams decoder;

    Model() = default;

    Model(const RunConfig& config, const std::vector<std::string>& data_vocab)
        : cfg(config), vocab(data_vocab) {
        cfg.validate();
        Rng rng = Rng(cfg.seed).fork(hash_name("model-init"));
        text = TextEncoderParams(rng, vocab.size(), cfg.c_l);
        proj_w = ad::parameter(init::kaiming(rng, {cfg.c_v, cfg.c_l}));
        proj_b = ad::parameter(init::bias(rng, cfg.c_v, cfg.c_l));
        image = ImageEncoderParams(rng, cfg.c_v);
        embed_head = EmbedHeadParams(rng, cfg.c_v, z_channels());
        decoder = DecoderParams(rng, z_channels());
    }

    int z_channels() const { return cfg.c_v + 1 + (cfg.use_tqm ? cfg.n : 0); }

    std::vector<std::pair<std::string, ad::Var>> named_params() const {
        return {
            {"text.embed", text.embed}, {"text.w1", text.w1}, {"text.b1", text.b1},
            {"text.w2", text.w2},       {"text.b2", text.b2}, {"proj.w", proj_w},
            {"proj.b", proj_b},         {"image.w1", image.w1}, {"image.b1", image.b1},
            {"image.w2", image.w2},     {"image.b2", image.b2}, {"image.w3", image.w3},
            {"image.b3", image.b3},     {"embed.w", embed_head.w}, {"embed.b", embed_head.b},
            {"dec.t1w", decoder.t1w},   {"dec.t1b", decoder.t1b}, {"dec.t2w", decoder.t2w},
            {"dec.t2b", decoder.t2b},   {"dec.hw", decoder.hw},   {"dec.hb", decoder.hb}};
    }

    struct TextVars {
        ad::Var L, L_anti;
        ad::Var lp, lp_anti;
    };

    TextVars encode_expression(const std::vector<std::string>& expression) const {
        TextVars t;
        t.L = encode_text(text, vocab, expression);
        t.L_anti = encode_text(text, vocab, make_anti(expression));
        t.lp = project_language(proj_w, proj_b, t.L);
        t.lp_anti = project_language(proj_w, proj_b, t.L_anti);
        return t;
    }

    std::vector<ad::Var> encode_images(const GroupSample& group) const {
        std::vector<ad::Var> vs;
        vs.reserve(group.images.size());
        for (const ImageRecord& rec : group.images) {
            if (rec.height % kEncoderStride != 0 || rec.width % kEncoderStride != 0)
                throw std::invalid_argument("model: image size not divisible by encoder stride");
            vs.push_back(encode_image(image, ad::constant(pixels_to_tensor(rec))));
        }
        return vs;
    }

    struct ImagePass {
        ad::Var V;
        ad::Var Ml;
        std::vector<ad::Var> vision_maps; // prototype order (before ranking)
        ad::Var z;
        ad::Var e;
        ad::Var d_pos, d_neg; // always against (lp, lp_anti), never swapped
    };

    struct GroupPass {
        std::vector<ad::Var> prototypes;
        PrototypeScores scores; // role-adjusted when swap_roles is set
        Ranking ranking;
        std::vector<ImagePass> images;
    };

    // The shared query/rank/assemble/embed pipeline. With `swap_roles` the
    // anti-expression takes the expression's place in the heatmap query and
    // in the scoring roles (the mirror configuration). Ranking is computed
    // on score values; no gradient flows through the ordering.
    GroupPass run_pipeline(const TextVars& t, const std::vector<ad::Var>& vs, bool swap_roles,
                           std::uint64_t rank_seed, bool want_embed = true) const {
        const std::size_t n = vs.size();
        const ad::Var& primary = swap_roles ? t.lp_anti : t.lp;
        const ad::Var& secondary = swap_roles ? t.lp : t.lp_anti;

        GroupPass pass;
        pass.images.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            pass.images[i].V = vs[i];
            pass.images[i].Ml = language_heatmap(vs[i], primary);
        }

        if (cfg.use_tqm) {
            pass.prototypes.reserve(n);
            std::vector<Tensor> proto_vals;
            proto_vals.reserve(n);
            for (std::size_t i = 0; i < n; ++i) {
                pass.prototypes.push_back(extract_prototype(vs[i], pass.images[i].Ml));
                proto_vals.push_back(pass.prototypes.back().val());
            }
            pass.scores = score_prototypes(proto_vals, primary.val(), secondary.val());
            const RankCriterion criterion =
                cfg.use_hierarchizer ? cfg.rank_criterion : RankCriterion::Random;
            pass.ranking = compute_ranking(pass.scores, criterion, rank_seed);

            for (std::size_t i = 0; i < n; ++i) {
                ImagePass& ip = pass.images[i];
                ip.vision_maps = vision_heatmaps(vs[i], pass.prototypes);
                std::vector<ad::Var> ranked;
                ranked.reserve(n);
                for (int src : pass.ranking.order)
                    ranked.push_back(ip.vision_maps[static_cast<std::size_t>(src)]);
                ip.z = assemble_triphasic(ip.V, ip.Ml, ranked);
            }
        } else {
            for (std::size_t i = 0; i < n; ++i)
                pass.images[i].z = assemble_triphasic(pass.images[i].V, pass.images[i].Ml, {});
        }

        if (want_embed) {
            for (std::size_t i = 0; i < n; ++i) {
                ImagePass& ip = pass.images[i];
                ip.e = embed_group_features(embed_head, ip.z);
                ip.d_pos = ad::l2_dist(ip.e, t.lp);
                ip.d_neg = ad::l2_dist(ip.e, t.lp_anti);
            }
        }
        return pass;
    }

    ad::Var decode(const ad::Var& z) const { return decode_mask(decoder, z); }
};

struct GroupLoss {
    ad::Var total;
    LossTerms terms;
};

// Losses for one group at epoch t of T. Cross-entropy and mirror
// cross-entropy average over ground-truth positives; the triplet term
// averages over every image. Decoding runs only where a loss consumes it.
inline GroupLoss group_loss(const Model& model, const GroupSample& group, int t, int T,
                            std::uint64_t rank_seed) {
    const Model::TextVars text = model.encode_expression(group.expression);
    const std::vector<ad::Var> vs = model.encode_images(group);
    const Model::GroupPass main =
        model.run_pipeline(text, vs, /*swap_roles=*/false, rank_seed,
                           /*want_embed=*/model.cfg.use_triplet);

    std::vector<std::size_t> positives;
    for (std::size_t i = 0; i < group.images.size(); ++i)
        if (group.images[i].is_positive) positives.push_back(i);

    GroupLoss out;
    out.terms.had_positives = !positives.empty();

    ad::Var ce = ad::constant(Tensor::scalar(0.0));
    if (!positives.empty()) {
        std::vector<ad::Var> terms;
        terms.reserve(positives.size());
        for (std::size_t i : positives)
            terms.push_back(
                seg_loss(model.decode(main.images[i].z), mask_to_tensor(group.images[i])));
        ce = ad::mean_of(terms);
    }

    ad::Var ce_mirror = ad::constant(Tensor::scalar(0.0));
    if (model.cfg.use_mirror && !positives.empty()) {
        const Model::GroupPass mirror =
            model.run_pipeline(text, vs, /*swap_roles=*/true, rank_seed ^ 0x5bd1e995u,
                               /*want_embed=*/false);
        std::vector<ad::Var> terms;
        terms.reserve(positives.size());
        for (std::size_t i : positives) {
            Tensor background = mask_to_tensor(group.images[i]);
            for (double& v : background.data) v = 1.0 - v;
            terms.push_back(seg_loss(model.decode(mirror.images[i].z), background));
        }
        ce_mirror = ad::mean_of(terms);
    }

    ad::Var tri = ad::constant(Tensor::scalar(0.0));
    if (model.cfg.use_triplet) {
        std::vector<ad::Var> terms;
        terms.reserve(group.images.size());
        for (std::size_t i = 0; i < group.images.size(); ++i)
            terms.push_back(triplet_loss(main.images[i].e, text.lp, text.lp_anti,
                                         group.images[i].is_positive, model.cfg.margin));
        tri = ad::mean_of(terms);
    }

    out.total = total_loss(ce, ce_mirror, tri, t, T, model.cfg.lambda, &out.terms);
    return out;
}

// The mirror objective in isolation: the pipeline rerun with the roles of
// the expression and anti-expression swapped, scored against the
// background. Zero (flagged) when the group has no positives.
inline double mirror_pass(const Model& model, const GroupSample& group, std::uint64_t rank_seed,
                          bool* had_positives = nullptr) {
    const Model::TextVars text = model.encode_expression(group.expression);
    const std::vector<ad::Var> vs = model.encode_images(group);
    const Model::GroupPass mirror =
        model.run_pipeline(text, vs, /*swap_roles=*/true, rank_seed, /*want_embed=*/false);
    double sum = 0.0;
    int count = 0;
    for (std::size_t i = 0; i < group.images.size(); ++i) {
        if (!group.images[i].is_positive) continue;
        Tensor background = mask_to_tensor(group.images[i]);
        for (double& v : background.data) v = 1.0 - v;
        sum += seg_loss(model.decode(mirror.images[i].z), background).scalar();
        ++count;
    }
    if (had_positives) *had_positives = count > 0;
    return count > 0 ? sum / count : 0.0;
}

} // namespace gres
