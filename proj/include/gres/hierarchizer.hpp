#pragma once

#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gres/rng.hpp"
#include "gres/tensor.hpp"

namespace gres {

// Heatmap hierarchizer: scores each prototype against the projected
// expression and anti-expression, turns the scores into ranks, and
// reorders the vision-activated heatmap stack by the combined rank.

struct PrototypeScores {
    std::vector<double> s_pos; // distance to projected expression
    std::vector<double> s_neg; // distance to projected anti-expression
};

enum class RankCriterion { Pos, Neg, PosPlusNeg, Random };

inline RankCriterion parse_rank_criterion(const std::string& s) {
    if (s == "pos") return RankCriterion::Pos;
    if (s == "neg") return RankCriterion::Neg;
    if (s == "pos_plus_neg") return RankCriterion::PosPlusNeg;
    if (s == "random") return RankCriterion::Random;
    throw std::invalid_argument("unknown rank criterion: " + s +
                                " (expected pos|neg|pos_plus_neg|random)");
}

inline std::string to_string(RankCriterion c) {
    switch (c) {
        case RankCriterion::Pos: return "pos";
        case RankCriterion::Neg: return "neg";
        case RankCriterion::PosPlusNeg: return "pos_plus_neg";
        default: return "random";
    }
}

inline PrototypeScores score_prototypes(std::span<const Tensor> prototypes,
                                        const Tensor& lp, const Tensor& lp_anti) {
    PrototypeScores s;
    s.s_pos.reserve(prototypes.size());
    s.s_neg.reserve(prototypes.size());
    for (const Tensor& p : prototypes) {
        if (!p.same_shape(lp) || !p.same_shape(lp_anti))
            throw std::invalid_argument("score_prototypes: dimension mismatch");
        s.s_pos.push_back(l2_distance(p, lp));
        s.s_neg.push_back(l2_distance(p, lp_anti));
    }
    return s;
}

namespace detail {

// rank[i] = position of element i in the sorted order; ties keep index order.
inline std::vector<int> ranks_of(const std::vector<double>& v, bool ascending) {
    std::vector<int> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        if (v[a] != v[b]) return ascending ? v[a] < v[b] : v[a] > v[b];
        return a < b;
    });
    std::vector<int> rank(v.size());
    for (std::size_t pos = 0; pos < idx.size(); ++pos) rank[idx[pos]] = static_cast<int>(pos);
    return rank;
}

} // namespace detail

struct Ranking {
    std::vector<int> order; // order[k] = original index placed at slot k
    std::vector<int> keys;  // sort key of the map at slot k, nondecreasing
};

// Positive rank: smallest s_pos first. Negative rank: largest s_neg first.
// Slots are sorted by the criterion's key, ties broken by original index.
inline Ranking compute_ranking(const PrototypeScores& scores, RankCriterion criterion,
                               std::uint64_t seed) {
    const std::size_t n = scores.s_pos.size();
    if (scores.s_neg.size() != n)
        throw std::invalid_argument("compute_ranking: score length mismatch");

    Ranking r;
    r.order.resize(n);
    std::iota(r.order.begin(), r.order.end(), 0);
    r.keys.assign(n, 0);

    if (criterion == RankCriterion::Random) {
        Rng rng(seed);
        rng.shuffle(r.order);
        for (std::size_t k = 0; k < n; ++k) r.keys[k] = static_cast<int>(k);
        return r;
    }

    const std::vector<int> r_pos = detail::ranks_of(scores.s_pos, /*ascending=*/true);
    const std::vector<int> r_neg = detail::ranks_of(scores.s_neg, /*ascending=*/false);
    std::vector<int> key(n);
    for (std::size_t i = 0; i < n; ++i) {
        switch (criterion) {
            case RankCriterion::Pos: key[i] = r_pos[i]; break;
            case RankCriterion::Neg: key[i] = r_neg[i]; break;
            default: key[i] = r_pos[i] + r_neg[i]; break;
        }
    }
    std::stable_sort(r.order.begin(), r.order.end(),
                     [&](int a, int b) { return key[a] != key[b] ? key[a] < key[b] : a < b; });
    for (std::size_t k = 0; k < n; ++k) r.keys[k] = key[r.order[k]];
    return r;
}

template <typename MapT>
struct RankedHeatmapStack {
    std::vector<MapT> maps;
    std::vector<int> order;
    std::vector<int> keys;
};

template <typename MapT>
RankedHeatmapStack<MapT> rank_and_rearrange(const std::vector<MapT>& maps,
                                            const PrototypeScores& scores,
                                            RankCriterion criterion, std::uint64_t seed = 0) {
    if (maps.size() != scores.s_pos.size() || maps.size() != scores.s_neg.size())
        throw std::invalid_argument("rank_and_rearrange: length mismatch");
    Ranking ranking = compute_ranking(scores, criterion, seed);
    RankedHeatmapStack<MapT> out;
    out.order = std::move(ranking.order);
    out.keys = std::move(ranking.keys);
    out.maps.reserve(maps.size());
    for (int src : out.order) out.maps.push_back(maps[static_cast<std::size_t>(src)]);
    return out;
}

} // namespace gres
