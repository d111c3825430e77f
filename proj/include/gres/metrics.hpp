#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gres/tensor.hpp"

namespace gres {

// Group-aware evaluation. The adapted mean IoU treats the group setting's
// negatives through confusion-matrix categories: a true negative counts as
// IoU 1, false positives and false negatives as 0.

enum class Category { TP, TN, FP, FN };

inline std::string to_string(Category c) {
    switch (c) {
        case Category::TP: return "TP";
        case Category::TN: return "TN";
        case Category::FP: return "FP";
        default: return "FN";
    }
}

struct EvalRecord {
    std::string image_id;
    bool gt_positive = false;
    bool pred_positive = false;
    double iou = 0.0; // meaningful only for TP records
    Category category = Category::TN;
};

inline Category categorize(bool gt_positive, bool pred_positive) {
    if (gt_positive) return pred_positive ? Category::TP : Category::FN;
    return pred_positive ? Category::FP : Category::TN;
}

inline EvalRecord make_eval_record(std::string image_id, bool gt_positive, bool pred_positive,
                                   double iou_when_tp = 0.0) {
    EvalRecord r;
    r.image_id = std::move(image_id);
    r.gt_positive = gt_positive;
    r.pred_positive = pred_positive;
    r.category = categorize(gt_positive, pred_positive);
    r.iou = r.category == Category::TP ? iou_when_tp : 0.0;
    return r;
}

// Intersection over union of binary maps; empty against empty is 1.
inline double iou(const Tensor& pred, const Tensor& gt) {
    if (!pred.same_shape(gt)) throw std::invalid_argument("iou: shape mismatch");
    long long inter = 0, uni = 0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const bool p = pred.data[i] > 0.5, g = gt.data[i] > 0.5;
        inter += (p && g);
        uni += (p || g);
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

inline double adapted_miou(std::span<const EvalRecord> records) {
    if (records.empty()) throw std::invalid_argument("adapted_miou: no records");
    double sum = 0.0;
    for (const EvalRecord& r : records) {
        switch (r.category) {
            case Category::TP: sum += r.iou; break;
            case Category::TN: sum += 1.0; break;
            default: break; // FP, FN contribute 0
        }
    }
    return sum / static_cast<double>(records.size());
}

// Vanilla mIoU over ground-truth positives (missed positives score 0);
// empty when the record set has no positives.
inline std::optional<double> miou_positives(std::span<const EvalRecord> records) {
    double sum = 0.0;
    int count = 0;
    for (const EvalRecord& r : records) {
        if (!r.gt_positive) continue;
        ++count;
        if (r.category == Category::TP) sum += r.iou;
    }
    if (count == 0) return std::nullopt;
    return sum / count;
}

// Recall of negative samples, scaled by 100; empty when there are no
// ground-truth negatives.
inline std::optional<double> r_neg(std::span<const EvalRecord> records) {
    long long tn = 0, fp = 0;
    for (const EvalRecord& r : records) {
        if (r.category == Category::TN) ++tn;
        if (r.category == Category::FP) ++fp;
    }
    if (tn + fp == 0) return std::nullopt;
    return 100.0 * static_cast<double>(tn) / static_cast<double>(tn + fp);
}

// ---------------------------------------------------------------------------
// Saliency measures
// ---------------------------------------------------------------------------

struct SaliencyPair {
    Tensor pred; // real-valued, clamped to [0,1]
    Tensor gt;   // binary
};

struct SodMetrics {
    double mae = 0.0;
    double f_max = 0.0;
    double s_alpha = 0.0;
    double e_xi = 0.0;
};

namespace sod {

constexpr double kBetaSq = 0.3;
constexpr double kAlpha = 0.5;
constexpr double kEps = 1e-12;
constexpr int kThresholds = 255;

inline double mean_of(const Tensor& t) {
    double s = 0.0;
    for (double v : t.data) s += v;
    return s / static_cast<double>(t.data.size());
}

inline double object_score(const Tensor& values, const Tensor& region) {
    // mean/std of `values` restricted to region > 0.5; sample std (N-1).
    double sum = 0.0;
    long long n = 0;
    for (std::size_t i = 0; i < values.data.size(); ++i)
        if (region.data[i] > 0.5) {
            sum += values.data[i];
            ++n;
        }
    if (n == 0) return 0.0;
    const double x = sum / static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < values.data.size(); ++i)
        if (region.data[i] > 0.5) {
            const double d = values.data[i] - x;
            var += d * d;
        }
    const double sigma = n > 1 ? std::sqrt(var / static_cast<double>(n - 1)) : 0.0;
    return 2.0 * x / (x * x + 1.0 + sigma + kEps);
}

inline double s_object(const Tensor& pred, const Tensor& gt) {
    Tensor fg = pred;
    Tensor bg = pred;
    Tensor gt_inv = gt;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const bool g = gt.data[i] > 0.5;
        fg.data[i] = g ? pred.data[i] : 0.0;
        bg.data[i] = g ? 0.0 : 1.0 - pred.data[i];
        gt_inv.data[i] = g ? 0.0 : 1.0;
    }
    const double u = mean_of(gt);
    return u * object_score(fg, gt) + (1.0 - u) * object_score(bg, gt_inv);
}

// SSIM-style similarity between a prediction block and a binary block.
inline double region_ssim(std::span<const double> p, std::span<const double> g) {
    const std::size_t n = p.size();
    if (n == 0) return 1.0;
    double x = 0.0, y = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        x += p[i];
        y += g[i];
    }
    x /= static_cast<double>(n);
    y /= static_cast<double>(n);
    double sx = 0.0, sy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sx += (p[i] - x) * (p[i] - x);
        sy += (g[i] - y) * (g[i] - y);
        sxy += (p[i] - x) * (g[i] - y);
    }
    const double denom_n = static_cast<double>(n) - 1.0 + kEps;
    sx /= denom_n;
    sy /= denom_n;
    sxy /= denom_n;
    const double a = 4.0 * x * y * sxy;
    const double b = (x * x + y * y) * (sx + sy);
    if (a != 0.0) return a / (b + kEps);
    return b == 0.0 ? 1.0 : 0.0;
}

inline double s_region(const Tensor& pred, const Tensor& gt) {
    const int H = gt.size(0), W = gt.size(1);
    // Foreground centroid (1-based, matching the measure's reference code).
    double total = 0.0, sum_x = 0.0, sum_y = 0.0;
    for (int yy = 0; yy < H; ++yy)
        for (int xx = 0; xx < W; ++xx)
            if (gt.at(yy, xx) > 0.5) {
                total += 1.0;
                sum_x += xx + 1;
                sum_y += yy + 1;
            }
    int cx, cy;
    if (total == 0.0) {
        cx = static_cast<int>(std::lround(W / 2.0));
        cy = static_cast<int>(std::lround(H / 2.0));
    } else {
        cx = static_cast<int>(std::lround(sum_x / total));
        cy = static_cast<int>(std::lround(sum_y / total));
    }
    cx = std::clamp(cx, 1, W);
    cy = std::clamp(cy, 1, H);

    const double area = static_cast<double>(H) * W;
    double score = 0.0;
    std::vector<double> pb, gb;
    const auto quadrant = [&](int y0, int y1, int x0, int x1, double weight) {
        pb.clear();
        gb.clear();
        for (int yy = y0; yy < y1; ++yy)
            for (int xx = x0; xx < x1; ++xx) {
                pb.push_back(pred.at(yy, xx));
                gb.push_back(gt.at(yy, xx));
            }
        score += weight * region_ssim(pb, gb);
    };
    const double w1 = (cx * cy) / area;
    const double w2 = ((W - cx) * cy) / area;
    const double w3 = (cx * (H - cy)) / area;
    const double w4 = 1.0 - w1 - w2 - w3;
    quadrant(0, cy, 0, cx, w1);
    quadrant(0, cy, cx, W, w2);
    quadrant(cy, H, 0, cx, w3);
    quadrant(cy, H, cx, W, w4);
    return score;
}

inline double structure_measure(const Tensor& pred, const Tensor& gt) {
    const double y = mean_of(gt);
    if (y == 0.0) return 1.0 - mean_of(pred);
    if (y == 1.0) return mean_of(pred);
    const double q = kAlpha * s_object(pred, gt) + (1.0 - kAlpha) * s_region(pred, gt);
    return std::max(q, 0.0);
}

// Enhanced-alignment measure of the map binarized at twice its mean
// (clamped to 1 so saturated maps keep their foreground).
inline double e_measure(const Tensor& pred, const Tensor& gt) {
    const std::size_t n = pred.data.size();
    const double thr = std::min(2.0 * mean_of(pred), 1.0);
    Tensor fm(pred.shape);
    for (std::size_t i = 0; i < n; ++i) fm.data[i] = pred.data[i] >= thr ? 1.0 : 0.0;

    double gt_sum = 0.0;
    for (double v : gt.data) gt_sum += v > 0.5 ? 1.0 : 0.0;

    double enhanced_sum = 0.0;
    if (gt_sum == 0.0) {
        for (std::size_t i = 0; i < n; ++i) enhanced_sum += 1.0 - fm.data[i];
    } else if (gt_sum == static_cast<double>(n)) {
        for (std::size_t i = 0; i < n; ++i) enhanced_sum += fm.data[i];
    } else {
        const double mu_fm = mean_of(fm);
        const double mu_gt = gt_sum / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double afm = fm.data[i] - mu_fm;
            const double agt = (gt.data[i] > 0.5 ? 1.0 : 0.0) - mu_gt;
            const double align = 2.0 * agt * afm / (agt * agt + afm * afm + kEps);
            enhanced_sum += (align + 1.0) * (align + 1.0) / 4.0;
        }
    }
    return enhanced_sum / (static_cast<double>(n) - 1.0 + kEps);
}

} // namespace sod

inline SodMetrics sod_metrics(std::span<const SaliencyPair> pairs) {
    if (pairs.empty()) throw std::invalid_argument("sod_metrics: no pairs");
    for (const SaliencyPair& p : pairs)
        if (!p.pred.same_shape(p.gt)) throw std::invalid_argument("sod_metrics: shape mismatch");

    SodMetrics out;

    double mae_sum = 0.0;
    std::vector<SaliencyPair> clamped(pairs.begin(), pairs.end());
    for (SaliencyPair& p : clamped) {
        double s = 0.0;
        for (std::size_t i = 0; i < p.pred.data.size(); ++i) {
            p.pred.data[i] = std::clamp(p.pred.data[i], 0.0, 1.0);
            s += std::abs(p.pred.data[i] - (p.gt.data[i] > 0.5 ? 1.0 : 0.0));
        }
        mae_sum += s / static_cast<double>(p.pred.data.size());
    }
    out.mae = mae_sum / static_cast<double>(clamped.size());

    // Maximum of the mean F-curve over uniform thresholds j/255.
    double best_f = 0.0;
    for (int j = 0; j < sod::kThresholds; ++j) {
        const double thr = static_cast<double>(j) / 255.0;
        double f_sum = 0.0;
        for (const SaliencyPair& p : clamped) {
            long long tp = 0, pred_pos = 0, gt_pos = 0;
            for (std::size_t i = 0; i < p.pred.data.size(); ++i) {
                const bool pb = p.pred.data[i] >= thr;
                const bool gb = p.gt.data[i] > 0.5;
                tp += (pb && gb);
                pred_pos += pb;
                gt_pos += gb;
            }
            if (tp == 0 || pred_pos == 0 || gt_pos == 0) continue;
            const double prec = static_cast<double>(tp) / static_cast<double>(pred_pos);
            const double rec = static_cast<double>(tp) / static_cast<double>(gt_pos);
            f_sum += (1.0 + sod::kBetaSq) * prec * rec / (sod::kBetaSq * prec + rec);
        }
        best_f = std::max(best_f, f_sum / static_cast<double>(clamped.size()));
    }
    out.f_max = best_f;

    double s_sum = 0.0, e_sum = 0.0;
    for (const SaliencyPair& p : clamped) {
        s_sum += sod::structure_measure(p.pred, p.gt);
        e_sum += sod::e_measure(p.pred, p.gt);
    }
    out.s_alpha = s_sum / static_cast<double>(clamped.size());
    out.e_xi = e_sum / static_cast<double>(clamped.size());
    return out;
}

} // namespace gres
