// Acceptance suite: seven gate criteria, one PASS/FAIL line each.
// Criteria 5-7 drive the command-line tool end to end and parse its
// reports; the rest exercise the library against independent oracles.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <sys/wait.h>

#include <nlohmann/json.hpp>

#include "fd_check.hpp"
#include "gres/config.hpp"
#include "gres/dataset.hpp"
#include "gres/metrics.hpp"
#include "gres/model.hpp"
#include "gres/trainer.hpp"

namespace fs = std::filesystem;
using namespace gres;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

Tensor random_tensor(Rng& rng, std::vector<int> shape, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.data) v = rng.uniform(-scale, scale);
    return t;
}

int run_cli(const std::string& args, bool quiet = true) {
    const std::string cmd =
        std::string(GRES_CLI_PATH) + " " + args + (quiet ? " >/dev/null 2>&1" : "");
    const int status = std::system(cmd.c_str());
    if (status == -1) return -1;
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

nlohmann::json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    nlohmann::json j;
    in >> j;
    return j;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------------------
// 1. Kernel oracles
// ---------------------------------------------------------------------------

bool criterion_kernels() {
    const auto t0 = Clock::now();
    Rng rng(2024);
    double worst = 0.0;

    // language/vision heatmaps vs a per-pixel loop oracle
    for (int trial = 0; trial < 120; ++trial) {
        const int C = 2 + static_cast<int>(rng.below(6));
        const int H = 1 + static_cast<int>(rng.below(5));
        const int W = 1 + static_cast<int>(rng.below(5));
        const Tensor V = random_tensor(rng, {C, H, W}, 2.0);
        const Tensor q = random_tensor(rng, {C}, 2.0);

        const Tensor m = cosine_map(ad::constant(V), ad::constant(q)).val();
        double nq = 0.0;
        for (int c = 0; c < C; ++c) nq += q.at(c) * q.at(c);
        nq = std::sqrt(nq);
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                double a = 0.0, nv = 0.0;
                for (int c = 0; c < C; ++c) {
                    a += V.at(c, y, x) * q.at(c);
                    nv += V.at(c, y, x) * V.at(c, y, x);
                }
                nv = std::sqrt(nv);
                const double expect = (nv > 1e-8 && nq > 1e-8) ? a / (nv * nq) : 0.0;
                worst = std::max(worst, std::abs(m.at(y, x) - expect));
            }
    }

    // prototype pooling vs an explicit double-loop oracle
    for (int trial = 0; trial < 120; ++trial) {
        const int C = 2 + static_cast<int>(rng.below(6));
        const int H = 1 + static_cast<int>(rng.below(5));
        const int W = 1 + static_cast<int>(rng.below(5));
        const Tensor V = random_tensor(rng, {C, H, W}, 2.0);
        Tensor M({H, W});
        for (double& v : M.data) v = rng.uniform(-1.0, 1.0);
        const Tensor p = extract_prototype(ad::constant(V), ad::constant(M)).val();

        double wsum = 0.0;
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) wsum += 0.5 * (M.at(y, x) + 1.0);
        for (int c = 0; c < C; ++c) {
            double s = 0.0;
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x) s += 0.5 * (M.at(y, x) + 1.0) * V.at(c, y, x);
            worst = std::max(worst, std::abs(p.at(c) - (wsum > 1e-8 ? s / wsum : 0.0)));
        }
    }

    // projection vs a dense matvec oracle
    for (int trial = 0; trial < 120; ++trial) {
        const int M = 2 + static_cast<int>(rng.below(6));
        const int K = 2 + static_cast<int>(rng.below(6));
        const Tensor W = random_tensor(rng, {M, K});
        const Tensor b = random_tensor(rng, {M});
        const Tensor L = random_tensor(rng, {K});
        const Tensor out = project_language(ad::constant(W), ad::constant(b),
                                            ad::constant(L)).val();
        for (int i = 0; i < M; ++i) {
            double s = b.at(i);
            for (int k = 0; k < K; ++k) s += W.at(i, k) * L.at(k);
            worst = std::max(worst, std::abs(out.at(i) - s));
        }
    }

    // ranking vs the brute-force sort oracle, exact
    bool rank_ok = true;
    for (int trial = 0; trial < 300; ++trial) {
        const int n = 2 + static_cast<int>(rng.below(7));
        PrototypeScores s;
        for (int i = 0; i < n; ++i) {
            s.s_pos.push_back(static_cast<double>(rng.below(5)) * 0.2);
            s.s_neg.push_back(static_cast<double>(rng.below(5)) * 0.2);
        }
        for (RankCriterion crit :
             {RankCriterion::Pos, RankCriterion::Neg, RankCriterion::PosPlusNeg}) {
            std::vector<int> idx(static_cast<std::size_t>(n));
            std::iota(idx.begin(), idx.end(), 0);
            const auto rank_by = [&](const std::vector<double>& v, bool asc) {
                std::vector<int> sorted = idx;
                std::stable_sort(sorted.begin(), sorted.end(), [&](int a, int b) {
                    const double va = v[static_cast<std::size_t>(a)];
                    const double vb = v[static_cast<std::size_t>(b)];
                    if (va != vb) return asc ? va < vb : va > vb;
                    return a < b;
                });
                std::vector<int> rank(static_cast<std::size_t>(n));
                for (int pos = 0; pos < n; ++pos)
                    rank[static_cast<std::size_t>(sorted[pos])] = pos;
                return rank;
            };
            const auto rp = rank_by(s.s_pos, true);
            const auto rn = rank_by(s.s_neg, false);
            std::vector<std::pair<int, int>> keyed;
            for (int i = 0; i < n; ++i) {
                int key = rp[static_cast<std::size_t>(i)] + rn[static_cast<std::size_t>(i)];
                if (crit == RankCriterion::Pos) key = rp[static_cast<std::size_t>(i)];
                if (crit == RankCriterion::Neg) key = rn[static_cast<std::size_t>(i)];
                keyed.emplace_back(key, i);
            }
            std::sort(keyed.begin(), keyed.end());
            std::vector<int> expect;
            for (const auto& [k, i] : keyed) expect.push_back(i);
            rank_ok = rank_ok && compute_ranking(s, crit, 0).order == expect;
        }
    }

    const double dt = seconds_since(t0);
    std::cout << "  kernels: max abs diff " << worst << ", ranking exact "
              << (rank_ok ? "yes" : "no") << ", " << dt << " s\n";
    return worst <= 1e-6 && rank_ok && dt < 30.0;
}

// ---------------------------------------------------------------------------
// 2. Gradient oracles
// ---------------------------------------------------------------------------

struct GradientFixture {
    RunConfig cfg;
    Model model;
    GroupSample group;

    GradientFixture() {
        cfg.n = 2;
        cfg.image_size = 16;
        cfg.c_l = 6;
        cfg.c_v = 6;
        cfg.seed = 31;
        model = Model(cfg, {"red", "circle"});

        Rng rng(77);
        group.group_id = "fd";
        group.expression = {"red", "circle"};
        for (int i = 0; i < 2; ++i) {
            ImageRecord rec;
            rec.image_id = "fd_i" + std::to_string(i);
            rec.width = rec.height = 16;
            rec.rgb.resize(16 * 16 * 3);
            for (auto& v : rec.rgb) v = static_cast<std::uint8_t>(rng.below(256));
            if (i == 0) {
                rec.is_positive = true;
                std::vector<std::uint8_t> mask(16 * 16, 0);
                for (int k = 0; k < 60; ++k)
                    mask[static_cast<std::size_t>(rng.below(256))] = 1;
                rec.mask = std::move(mask);
            }
            group.images.push_back(std::move(rec));
        }
    }

    // distance of each image's triplet argument from the hinge kink
    double kink_margin() const {
        const Model::TextVars text = model.encode_expression(group.expression);
        const std::vector<ad::Var> vs = model.encode_images(group);
        const auto pass = model.run_pipeline(text, vs, false, 1);
        double margin = 1e18;
        for (std::size_t i = 0; i < group.images.size(); ++i) {
            const double dp = pass.images[i].d_pos.scalar();
            const double dn = pass.images[i].d_neg.scalar();
            const double gap = group.images[i].is_positive ? dp - dn + model.cfg.margin
                                                           : dn - dp + model.cfg.margin;
            margin = std::min(margin, std::abs(gap));
        }
        return margin;
    }
};

bool criterion_gradients() {
    const auto t0 = Clock::now();
    Rng rng(4242);
    bool ok = true;
    double worst_rel = 0.0;

    // triplet loss away from the kink
    int done = 0;
    while (done < 15) {
        ad::Var e = ad::parameter(random_tensor(rng, {6}, 2.0));
        ad::Var lp = ad::parameter(random_tensor(rng, {6}, 2.0));
        ad::Var la = ad::parameter(random_tensor(rng, {6}, 2.0));
        const double gap =
            l2_distance(e.val(), lp.val()) - l2_distance(e.val(), la.val()) + 1.0;
        if (std::abs(gap) < 0.05) continue;
        ++done;
        const auto res = test::check_gradients(
            {{"e", e}, {"lp", lp}, {"la", la}},
            [&] { return triplet_loss(e, lp, la, true, 1.0); }, rng, 12, 1e-4, 1e-6);
        ok = ok && res.ok;
        worst_rel = std::max(worst_rel, res.max_rel);
    }

    // segmentation cross-entropy w.r.t. logits
    for (int trial = 0; trial < 10; ++trial) {
        ad::Var logits = ad::parameter(random_tensor(rng, {8, 8}, 2.0));
        Tensor target({8, 8});
        for (double& v : target.data) v = rng.uniform() > 0.5 ? 1.0 : 0.0;
        const auto res = test::check_gradients(
            {{"logits", logits}}, [&] { return seg_loss(logits, target); }, rng, 24, 1e-4, 1e-6);
        ok = ok && res.ok;
        worst_rel = std::max(worst_rel, res.max_rel);
    }

    // mirror cross-entropy and the ramped composite through the full model
    GradientFixture fx;
    if (fx.kink_margin() < 0.02) {
        std::cout << "  gradient fixture unexpectedly near the hinge kink\n";
        ok = false;
    }
    {
        const auto rebuild_mirror = [&] {
            const Model::TextVars text = fx.model.encode_expression(fx.group.expression);
            const std::vector<ad::Var> vs = fx.model.encode_images(fx.group);
            const auto mirror = fx.model.run_pipeline(text, vs, true, 5, false);
            std::vector<ad::Var> terms;
            for (std::size_t i = 0; i < fx.group.images.size(); ++i) {
                if (!fx.group.images[i].is_positive) continue;
                Tensor bg = mask_to_tensor(fx.group.images[i]);
                for (double& v : bg.data) v = 1.0 - v;
                terms.push_back(seg_loss(fx.model.decode(mirror.images[i].z), bg));
            }
            return ad::mean_of(terms);
        };
        const auto res = test::check_gradients(fx.model.named_params(), rebuild_mirror, rng, 8,
                                               1e-4, 1e-6);
        ok = ok && res.ok;
        worst_rel = std::max(worst_rel, res.max_rel);
        if (!res.ok) std::cout << "  mirror-ce worst: " << res.worst << "\n";
    }
    {
        const auto rebuild_total = [&] {
            return group_loss(fx.model, fx.group, 1, 2, 9).total;
        };
        const auto res = test::check_gradients(fx.model.named_params(), rebuild_total, rng, 8,
                                               1e-4, 1e-6);
        ok = ok && res.ok;
        worst_rel = std::max(worst_rel, res.max_rel);
        if (!res.ok) std::cout << "  composite worst: " << res.worst << "\n";
    }

    const double dt = seconds_since(t0);
    std::cout << "  gradients: worst rel " << worst_rel << ", " << dt << " s\n";
    return ok && dt < 120.0;
}

// ---------------------------------------------------------------------------
// 3. Metric oracles
// ---------------------------------------------------------------------------

bool criterion_metrics() {
    Rng rng(555);
    bool ok = true;

    // exact hand-computed confusion case
    const std::vector<EvalRecord> mixed = {
        make_eval_record("tp", true, true, 0.5), make_eval_record("tn", false, false),
        make_eval_record("fp", false, true), make_eval_record("fn", true, false)};
    ok = ok && adapted_miou(mixed) == 0.375;
    const std::vector<EvalRecord> all_tn = {make_eval_record("a", false, false)};
    ok = ok && adapted_miou(all_tn) == 1.0;

    // zero negatives, all predicted positive -> equals vanilla mIoU to 1e-12
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<EvalRecord> recs;
        for (int i = 0; i < 12; ++i)
            recs.push_back(make_eval_record("p", true, true, rng.uniform()));
        const auto vanilla = miou_positives(recs);
        ok = ok && vanilla && std::abs(adapted_miou(recs) - *vanilla) <= 1e-12;
    }

    // MAE / F_max loop oracles
    double worst = 0.0;
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<SaliencyPair> pairs;
        for (int k = 0; k < 2; ++k) {
            SaliencyPair p;
            p.pred = Tensor({8, 8});
            for (double& v : p.pred.data) v = rng.uniform();
            p.gt = Tensor({8, 8});
            for (double& v : p.gt.data) v = rng.uniform() > 0.5 ? 1.0 : 0.0;
            p.gt.data[0] = 1.0;
            pairs.push_back(std::move(p));
        }
        const SodMetrics m = sod_metrics(pairs);

        double mae = 0.0;
        for (const SaliencyPair& p : pairs) {
            double s = 0.0;
            for (std::size_t i = 0; i < p.pred.data.size(); ++i)
                s += std::abs(p.pred.data[i] - p.gt.data[i]);
            mae += s / 64.0;
        }
        mae /= static_cast<double>(pairs.size());
        worst = std::max(worst, std::abs(m.mae - mae));

        double best_f = 0.0;
        for (int j = 0; j < 255; ++j) {
            const double thr = j / 255.0;
            double fsum = 0.0;
            for (const SaliencyPair& p : pairs) {
                double tp = 0, pp = 0, gp = 0;
                for (std::size_t i = 0; i < p.pred.data.size(); ++i) {
                    const bool pb = p.pred.data[i] >= thr;
                    const bool gb = p.gt.data[i] > 0.5;
                    tp += pb && gb;
                    pp += pb;
                    gp += gb;
                }
                if (tp == 0 || pp == 0 || gp == 0) continue;
                fsum += 1.3 * (tp / pp) * (tp / gp) / (0.3 * (tp / pp) + tp / gp);
            }
            best_f = std::max(best_f, fsum / static_cast<double>(pairs.size()));
        }
        worst = std::max(worst, std::abs(m.f_max - best_f));
    }
    std::cout << "  metrics: mae/f_max oracle max diff " << worst << "\n";
    return ok && worst <= 1e-6;
}

// ---------------------------------------------------------------------------
// 4. Decision rule
// ---------------------------------------------------------------------------

bool criterion_decision() {
    Rng rng(808);
    bool ok = true;
    const double m = 1.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const Tensor e = random_tensor(rng, {8}, 3.0);
        const Tensor lp = random_tensor(rng, {8}, 3.0);
        const Tensor la = random_tensor(rng, {8}, 3.0);
        const Decision d = decide(e, lp, la, m);
        ok = ok && d.is_positive == (d.d_pos + m < d.d_neg);
        ok = ok && d.d_pos >= 0.0 && d.d_neg >= 0.0;

        // monotonicity: scaling lp_anti away from e only increases d_neg
        Tensor far = la;
        const double s = 1.0 + rng.uniform(0.0, 9.0);
        for (int c = 0; c < 8; ++c) far.at(c) = e.at(c) + s * (la.at(c) - e.at(c));
        const Decision d_far = decide(e, lp, far, m);
        if (d.is_positive && !(d_far.is_positive)) ok = false;

        // pulling lp toward e only decreases d_pos
        Tensor near = lp;
        const double a = rng.uniform(0.0, 1.0);
        for (int c = 0; c < 8; ++c) near.at(c) = e.at(c) + a * (lp.at(c) - e.at(c));
        const Decision d_near = decide(e, near, la, m);
        if (d.is_positive && !d_near.is_positive) ok = false;

        // the zero-mask contract
        if (!d.is_positive) {
            const Tensor logits = random_tensor(rng, {6, 6}, 4.0);
            const Tensor mask = emit_mask(logits, d);
            for (double v : mask.data) ok = ok && v == 0.0;
        }
    }
    std::cout << "  decision rule: 1000 randomized triples checked\n";
    return ok;
}

// ---------------------------------------------------------------------------
// 5-7. End-to-end runs through the CLI
// ---------------------------------------------------------------------------

struct E2E {
    fs::path root;
    fs::path cfg_path;
    RunConfig cfg;
    fs::path data;
    fs::path full_ckpt;
    nlohmann::json full_report;
    double full_minutes = 0.0;
    bool full_ok = false;
};

void write_config(const RunConfig& cfg, const fs::path& path) {
    std::ofstream out(path);
    out << config_to_text(cfg);
}

bool criterion_e2e(E2E& e2e) {
    const auto t0 = Clock::now();
    e2e.data = e2e.root / "data";
    e2e.full_ckpt = e2e.root / "full.ckpt.json";
    const fs::path report = e2e.root / "full.report.json";

    if (run_cli("generate --config " + e2e.cfg_path.string() + " --out " + e2e.data.string()) != 0)
        return false;
    if (run_cli("train --config " + e2e.cfg_path.string() + " --data " + e2e.data.string() +
                " --out " + e2e.full_ckpt.string()) != 0)
        return false;
    if (run_cli("eval --ckpt " + e2e.full_ckpt.string() + " --data " + e2e.data.string() +
                " --report " + report.string()) != 0)
        return false;

    e2e.full_report = read_json(report);
    const double miou_bar = e2e.full_report.at("miou_bar").get<double>();
    const double rneg = e2e.full_report.at("r_neg").get<double>();
    e2e.full_minutes = seconds_since(t0) / 60.0;
    std::cout << "  e2e: miou_bar " << miou_bar << ", r_neg " << rneg << ", "
              << e2e.full_minutes << " min\n";

    // diagnostic: mirror logits anti-correlate with main logits on positives
    try {
        const Model model = load_checkpoint(e2e.full_ckpt.string());
        const DatasetManifest test_m =
            load_manifest((e2e.data / "manifest_test.json").string());
        const GroupSample group = load_group(test_m, test_m.groups[0].group_id, e2e.data.string());
        const Model::TextVars text = model.encode_expression(group.expression);
        const std::vector<ad::Var> vs = model.encode_images(group);
        const auto main_pass = model.run_pipeline(text, vs, false, 3);
        const auto mirror_pass_r = model.run_pipeline(text, vs, true, 3);
        for (std::size_t i = 0; i < group.images.size(); ++i) {
            if (!group.images[i].is_positive) continue;
            const Tensor a = model.decode(main_pass.images[i].z).val();
            const Tensor b = model.decode(mirror_pass_r.images[i].z).val();
            double ma = 0.0, mb = 0.0;
            for (std::size_t k = 0; k < a.data.size(); ++k) {
                ma += a.data[k];
                mb += b.data[k];
            }
            ma /= static_cast<double>(a.data.size());
            mb /= static_cast<double>(b.data.size());
            double cov = 0.0, va = 0.0, vb = 0.0;
            for (std::size_t k = 0; k < a.data.size(); ++k) {
                cov += (a.data[k] - ma) * (b.data[k] - mb);
                va += (a.data[k] - ma) * (a.data[k] - ma);
                vb += (b.data[k] - mb) * (b.data[k] - mb);
            }
            std::cout << "  e2e diagnostic: main/mirror logit correlation "
                      << cov / std::sqrt(va * vb + 1e-12) << " (expected negative)\n";
            break;
        }
    } catch (const std::exception& ex) {
        std::cout << "  e2e diagnostic skipped: " << ex.what() << "\n";
    }

    e2e.full_ok = miou_bar >= 0.70 && rneg >= 80.0 && e2e.full_minutes < 15.0;
    return e2e.full_ok;
}

bool criterion_ablations(E2E& e2e) {
    bool ok = true;

    // (a) without the triplet objective, R_neg is exactly 0
    {
        RunConfig cfg = e2e.cfg;
        cfg.use_triplet = false;
        const fs::path cfg_path = e2e.root / "no_triplet.cfg";
        write_config(cfg, cfg_path);
        const fs::path ckpt = e2e.root / "no_triplet.ckpt.json";
        const fs::path report = e2e.root / "no_triplet.report.json";
        if (run_cli("train --config " + cfg_path.string() + " --data " + e2e.data.string() +
                    " --out " + ckpt.string()) != 0 ||
            run_cli("eval --ckpt " + ckpt.string() + " --data " + e2e.data.string() +
                    " --report " + report.string()) != 0)
            return false;
        const double rneg = read_json(report).at("r_neg").get<double>();
        std::cout << "  ablation a: no_triplet r_neg " << rneg << "\n";
        ok = ok && rneg == 0.0;
    }

    // (b) the full model strictly beats w/o TQM on adapted mIoU
    double miou_no_tqm = 0.0;
    {
        RunConfig cfg = e2e.cfg;
        cfg.use_tqm = false;
        const fs::path cfg_path = e2e.root / "no_tqm.cfg";
        write_config(cfg, cfg_path);
        const fs::path ckpt = e2e.root / "no_tqm.ckpt.json";
        const fs::path report = e2e.root / "no_tqm.report.json";
        if (run_cli("train --config " + cfg_path.string() + " --data " + e2e.data.string() +
                    " --out " + ckpt.string()) != 0 ||
            run_cli("eval --ckpt " + ckpt.string() + " --data " + e2e.data.string() +
                    " --report " + report.string()) != 0)
            return false;
        miou_no_tqm = read_json(report).at("miou_bar").get<double>();
        const double full = e2e.full_report.at("miou_bar").get<double>();
        std::cout << "  ablation b: full " << full << " vs no_tqm " << miou_no_tqm << "\n";
        ok = ok && full > miou_no_tqm;
    }

    // (c) adapted mIoU nondecreasing in N over {1, 2, 4}
    {
        double prev = -1.0;
        bool nondecreasing = true;
        for (int n : {1, 2}) {
            RunConfig cfg = e2e.cfg;
            cfg.n = n;
            const fs::path cfg_path = e2e.root / ("n" + std::to_string(n) + ".cfg");
            write_config(cfg, cfg_path);
            const fs::path data = e2e.root / ("data_n" + std::to_string(n));
            const fs::path ckpt = e2e.root / ("n" + std::to_string(n) + ".ckpt.json");
            const fs::path report = e2e.root / ("n" + std::to_string(n) + ".report.json");
            if (run_cli("generate --config " + cfg_path.string() + " --out " + data.string()) != 0 ||
                run_cli("train --config " + cfg_path.string() + " --data " + data.string() +
                        " --out " + ckpt.string()) != 0 ||
                run_cli("eval --ckpt " + ckpt.string() + " --data " + data.string() +
                        " --report " + report.string()) != 0)
                return false;
            const double miou_bar = read_json(report).at("miou_bar").get<double>();
            std::cout << "  ablation c: N=" << n << " miou_bar " << miou_bar << "\n";
            nondecreasing = nondecreasing && miou_bar >= prev;
            prev = miou_bar;
        }
        const double n4 = e2e.full_report.at("miou_bar").get<double>();
        std::cout << "  ablation c: N=4 miou_bar " << n4 << "\n";
        nondecreasing = nondecreasing && n4 >= prev;
        ok = ok && nondecreasing;
    }

    // (d) matched train/test ranking criterion beats the mismatched cell
    {
        const fs::path report = e2e.root / "mismatched.report.json";
        if (run_cli("eval --ckpt " + e2e.full_ckpt.string() + " --data " + e2e.data.string() +
                    " --report " + report.string() + " --rank-criterion random") != 0)
            return false;
        const double mismatched = read_json(report).at("miou_bar").get<double>();
        const double matched = e2e.full_report.at("miou_bar").get<double>();
        std::cout << "  ablation d: matched " << matched << " vs mismatched " << mismatched
                  << "\n";
        ok = ok && matched >= mismatched;
    }
    return ok;
}

bool criterion_determinism(const E2E& e2e) {
    RunConfig cfg = e2e.cfg;
    cfg.synth_train_groups = 20;
    cfg.synth_test_groups = 6;
    cfg.epochs = 4;
    const fs::path cfg_path = e2e.root / "determinism.cfg";
    write_config(cfg, cfg_path);

    std::string first;
    for (int run = 0; run < 2; ++run) {
        const fs::path dir = e2e.root / ("det_run" + std::to_string(run));
        const fs::path data = dir / "data";
        const fs::path ckpt = dir / "model.json";
        const fs::path report = dir / "report.json";
        fs::create_directories(dir);
        if (run_cli("generate --config " + cfg_path.string() + " --out " + data.string()) != 0 ||
            run_cli("train --config " + cfg_path.string() + " --data " + data.string() +
                    " --out " + ckpt.string()) != 0 ||
            run_cli("eval --ckpt " + ckpt.string() + " --data " + data.string() + " --report " +
                    report.string()) != 0)
            return false;
        const std::string bytes = slurp(report);
        if (run == 0)
            first = bytes;
        else if (bytes != first) {
            std::cout << "  determinism: reports differ\n";
            return false;
        }
    }
    std::cout << "  determinism: byte-identical reports across reruns\n";
    return true;
}

} // namespace

int main() {
    const struct {
        const char* name;
    } names[] = {{"kernel oracle suite"},   {"gradient suite"},  {"metric suite"},
                 {"decision-rule suite"},   {"end-to-end run"},  {"ablation directions"},
                 {"determinism"}};

    E2E e2e;
    e2e.root = fs::temp_directory_path() / "gres_acceptance";
    fs::remove_all(e2e.root);
    fs::create_directories(e2e.root);
    e2e.cfg = RunConfig{};
    e2e.cfg_path = e2e.root / "default.cfg";
    write_config(e2e.cfg, e2e.cfg_path);

    bool results[7] = {};
    results[0] = criterion_kernels();
    results[1] = criterion_gradients();
    results[2] = criterion_metrics();
    results[3] = criterion_decision();
    results[4] = criterion_e2e(e2e);
    results[5] = criterion_ablations(e2e);
    results[6] = criterion_determinism(e2e);

    bool all = true;
    for (int i = 0; i < 7; ++i) {
        std::cout << (results[i] ? "PASS" : "FAIL") << " criterion " << i + 1 << ": "
                  << names[i].name << "\n";
        all = all && results[i];
    }
    return all ? 0 : 1;
}
