#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gres/metrics.hpp"
#include "gres/model.hpp"

namespace gres {

// Orchestration: the training loop over grouped samples, checkpoint
// serialization, group inference, evaluation reports, and the ablation
// harness.

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

inline void save_checkpoint(const Model& model, int epoch, const std::string& path) {
    nlohmann::ordered_json j;
    j["format"] = "gres-checkpoint-v1";
    j["epoch"] = epoch;
    {
        nlohmann::ordered_json jc;
        std::istringstream text(config_to_text(model.cfg));
        std::string line;
        while (std::getline(text, line)) {
            const std::size_t eq = line.find('=');
            jc[detail::trim(line.substr(0, eq))] = detail::trim(line.substr(eq + 1));
        }
        j["config"] = std::move(jc);
    }
    j["vocab"] = model.vocab.tokens;
    nlohmann::ordered_json jp;
    for (const auto& [name, var] : model.named_params()) {
        nlohmann::ordered_json entry;
        entry["shape"] = var.val().shape;
        entry["data"] = var.val().data;
        jp[name] = std::move(entry);
    }
    j["params"] = std::move(jp);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_checkpoint: cannot write " + path);
    out << j.dump() << "\n";
}

inline Model load_checkpoint(const std::string& path, int* epoch = nullptr) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
    nlohmann::json j;
    in >> j;
    if (!j.contains("format") || j.at("format") != "gres-checkpoint-v1")
        throw std::runtime_error("load_checkpoint: unrecognized format in " + path);
    if (epoch) *epoch = j.at("epoch").get<int>();

    RunConfig cfg;
    for (const auto& [key, value] : j.at("config").items())
        apply_config_line(cfg, key, value.get<std::string>());
    cfg.validate();

    std::vector<std::string> stored_vocab = j.at("vocab").get<std::vector<std::string>>();
    // Reserved tokens are re-added by the Vocabulary constructor; strip them.
    std::vector<std::string> data_vocab;
    for (const std::string& t : stored_vocab)
        if (t != kUnkToken && t != kNoToken) data_vocab.push_back(t);

    Model model(cfg, data_vocab);
    if (model.vocab.tokens != stored_vocab)
        throw std::runtime_error("load_checkpoint: vocabulary mismatch");
    for (auto& [name, var] : model.named_params()) {
        const auto& entry = j.at("params").at(name);
        const std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
        if (shape != var.val().shape)
            throw std::runtime_error("load_checkpoint: shape mismatch for " + name);
        var.val().data = entry.at("data").get<std::vector<double>>();
    }
    return model;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainOptions {
    std::string loss_csv_path;  // per-step loss breakdown when nonempty
    std::ostream* log = nullptr;
};

inline std::vector<GroupSample> load_all_groups(const DatasetManifest& manifest,
                                                const std::string& root) {
    std::vector<GroupSample> groups;
    groups.reserve(manifest.groups.size());
    for (const ManifestGroup& g : manifest.groups)
        groups.push_back(load_group(manifest, g.group_id, root));
    return groups;
}

// Plain gradient descent with decoupled weight decay; one group per step.
inline Model train(const RunConfig& cfg, const DatasetManifest& manifest,
                   const std::string& data_root, const TrainOptions& opts = {}) {
    cfg.validate();
    if (manifest.n != cfg.n)
        throw std::invalid_argument("train: manifest N " + std::to_string(manifest.n) +
                                    " != config n " + std::to_string(cfg.n));
    {
        const ValidationReport report = validate_manifest(manifest, data_root, /*deep=*/false);
        if (!report.ok())
            throw std::runtime_error("train: invalid manifest: " + report.violations.front());
    }

    const std::vector<GroupSample> groups = load_all_groups(manifest, data_root);
    if (groups.empty()) throw std::invalid_argument("train: empty manifest");

    Model model(cfg, manifest.vocab);
    auto params = model.named_params();

    std::ofstream csv;
    if (!opts.loss_csv_path.empty()) {
        csv.open(opts.loss_csv_path);
        if (!csv) throw std::runtime_error("train: cannot write " + opts.loss_csv_path);
        csv << "epoch,step,ce,ce_mirror,tri,total,ramp\n";
    }

    Rng order_rng = Rng(cfg.seed).fork(hash_name("epoch-order"));
    long long step = 0;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::vector<std::size_t> order(groups.size());
        std::iota(order.begin(), order.end(), 0);
        Rng epoch_rng = order_rng.fork(static_cast<std::uint64_t>(epoch));
        epoch_rng.shuffle(order);

        double epoch_total = 0.0;
        for (std::size_t gi : order) {
            const std::uint64_t rank_seed =
                Rng(cfg.seed).fork(hash_name("rank")).fork(static_cast<std::uint64_t>(step)).next_u64();
            GroupLoss loss = group_loss(model, groups[gi], epoch, cfg.epochs, rank_seed);
            if (!std::isfinite(loss.terms.total))
                throw std::runtime_error("train: non-finite loss at epoch " +
                                         std::to_string(epoch) + ", group " +
                                         groups[gi].group_id);
            epoch_total += loss.terms.total;

            ad::backward(loss.total);
            const double decay = 1.0 - cfg.lr * cfg.weight_decay;
            for (auto& [name, var] : params) {
                Tensor& w = var.val();
                const Tensor& g = var.grad();
                for (std::size_t i = 0; i < w.data.size(); ++i)
                    w.data[i] = w.data[i] * decay - cfg.lr * g.data[i];
                var.zero_grad();
            }

            if (csv.is_open())
                csv << epoch << "," << step << "," << loss.terms.ce << ","
                    << loss.terms.ce_mirror << "," << loss.terms.tri << "," << loss.terms.total
                    << "," << loss.terms.epoch_weight << "\n";
            ++step;
        }
        if (opts.log)
            (*opts.log) << "epoch " << epoch << "/" << cfg.epochs << " mean loss "
                        << epoch_total / static_cast<double>(groups.size()) << "\n";
    }
    return model;
}

// ---------------------------------------------------------------------------
// Inference and evaluation
// ---------------------------------------------------------------------------

struct ImageInference {
    std::string image_id;
    Tensor mask;     // {0,1}, all-zero when decided negative
    Decision decision;
    bool pred_positive = false; // decision gated by the triplet ablation
    Tensor saliency; // sigmoid(logits), zeros when not decoded
    Tensor lang_heatmap;
    std::vector<Tensor> ranked_heatmaps;
    std::vector<int> ranking_order;
};

// Full forward pass without the mirror branch. A negative decision yields
// the all-zero mask. A model trained without the triplet objective never
// predicts negative: its margin test was never trained, so the decision
// gate is bypassed (distances are still reported).
inline std::vector<ImageInference> infer_group(
    const Model& model, const GroupSample& group,
    std::optional<RankCriterion> criterion_override = std::nullopt) {
    if (static_cast<int>(group.images.size()) != model.cfg.n)
        throw std::invalid_argument("infer_group: group size " +
                                    std::to_string(group.images.size()) + " != model N " +
                                    std::to_string(model.cfg.n));

    Model eval_model = model;
    if (criterion_override) eval_model.cfg.rank_criterion = *criterion_override;

    const std::uint64_t rank_seed =
        Rng(model.cfg.seed).fork(hash_name("eval-rank")).fork(hash_name(group.group_id)).next_u64();

    const Model::TextVars text = eval_model.encode_expression(group.expression);
    const std::vector<ad::Var> vs = eval_model.encode_images(group);
    const Model::GroupPass pass =
        eval_model.run_pipeline(text, vs, /*swap_roles=*/false, rank_seed);

    std::vector<ImageInference> out(group.images.size());
    for (std::size_t i = 0; i < group.images.size(); ++i) {
        ImageInference& r = out[i];
        r.image_id = group.images[i].image_id;
        r.decision = decide(pass.images[i].e.val(), text.lp.val(), text.lp_anti.val(),
                            model.cfg.margin);
        r.pred_positive = model.cfg.use_triplet ? r.decision.is_positive : true;

        r.lang_heatmap = pass.images[i].Ml.val();
        if (model.cfg.use_tqm) {
            r.ranking_order = pass.ranking.order;
            for (int src : pass.ranking.order)
                r.ranked_heatmaps.push_back(
                    pass.images[i].vision_maps[static_cast<std::size_t>(src)].val());
        }

        if (r.pred_positive) {
            const Tensor logits = eval_model.decode(pass.images[i].z).val();
            Decision gated = r.decision;
            gated.is_positive = true;
            r.mask = emit_mask(logits, gated);
            r.saliency = Tensor(logits.shape);
            for (std::size_t px = 0; px < logits.data.size(); ++px)
                r.saliency.data[px] = 1.0 / (1.0 + std::exp(-logits.data[px]));
        } else {
            r.mask = Tensor({group.images[i].height, group.images[i].width});
        }
    }
    return out;
}

struct EvalRecordRow {
    EvalRecord record;
    std::string group_id;
    double d_pos = 0.0;
    double d_neg = 0.0;
};

struct EvalReport {
    double miou_bar = 0.0;
    std::optional<double> miou;
    std::optional<double> r_neg_pct;
    std::optional<SodMetrics> sod; // over true positives only
    std::vector<EvalRecordRow> rows;
};

struct EvalOptions {
    std::string heatmap_dir; // dump heatmap PNGs when nonempty
    std::optional<RankCriterion> criterion_override;
};

namespace detail {

inline void dump_heatmap_png(const Tensor& map, const std::string& path) {
    PngImage img;
    img.height = map.size(0);
    img.width = map.size(1);
    img.channels = 1;
    img.pixels.resize(map.data.size());
    for (std::size_t i = 0; i < map.data.size(); ++i) {
        const double v = std::clamp((map.data[i] + 1.0) * 0.5, 0.0, 1.0);
        img.pixels[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
    write_png(path, img);
}

} // namespace detail

inline EvalReport evaluate(const Model& model, const DatasetManifest& manifest,
                           const std::string& data_root, const EvalOptions& opts = {}) {
    namespace fs = std::filesystem;
    if (!opts.heatmap_dir.empty()) fs::create_directories(opts.heatmap_dir);

    EvalReport report;
    std::vector<SaliencyPair> tp_pairs;

    for (const ManifestGroup& mg : manifest.groups) {
        const GroupSample group = load_group(manifest, mg.group_id, data_root);
        const std::vector<ImageInference> inferred =
            infer_group(model, group, opts.criterion_override);

        for (std::size_t i = 0; i < group.images.size(); ++i) {
            const ImageRecord& rec = group.images[i];
            const ImageInference& inf = inferred[i];
            const Tensor gt = mask_to_tensor(rec);

            double tp_iou = 0.0;
            const bool tp = rec.is_positive && inf.pred_positive;
            if (tp) tp_iou = iou(inf.mask, gt);

            EvalRecordRow row;
            row.record = make_eval_record(inf.image_id, rec.is_positive, inf.pred_positive, tp_iou);
            row.group_id = mg.group_id;
            row.d_pos = inf.decision.d_pos;
            row.d_neg = inf.decision.d_neg;
            report.rows.push_back(std::move(row));

            if (tp) tp_pairs.push_back({inf.saliency, gt});

            if (!opts.heatmap_dir.empty()) {
                const fs::path dir(opts.heatmap_dir);
                detail::dump_heatmap_png(inf.lang_heatmap,
                                         (dir / (inf.image_id + "_lang.png")).string());
                for (std::size_t k = 0; k < inf.ranked_heatmaps.size(); ++k)
                    detail::dump_heatmap_png(
                        inf.ranked_heatmaps[k],
                        (dir / (inf.image_id + "_rank" + std::to_string(k) + ".png")).string());
            }
        }
    }

    std::vector<EvalRecord> records;
    records.reserve(report.rows.size());
    for (const EvalRecordRow& r : report.rows) records.push_back(r.record);
    report.miou_bar = adapted_miou(records);
    report.miou = miou_positives(records);
    report.r_neg_pct = r_neg(records);
    if (!tp_pairs.empty()) report.sod = sod_metrics(tp_pairs);
    return report;
}

inline nlohmann::ordered_json report_to_json(const EvalReport& r) {
    nlohmann::ordered_json j;
    j["miou_bar"] = r.miou_bar;
    j["miou"] = r.miou ? nlohmann::ordered_json(*r.miou) : nlohmann::ordered_json(nullptr);
    j["r_neg"] = r.r_neg_pct ? nlohmann::ordered_json(*r.r_neg_pct) : nlohmann::ordered_json(nullptr);
    if (r.sod) {
        j["mae"] = r.sod->mae;
        j["f_max"] = r.sod->f_max;
        j["s_alpha"] = r.sod->s_alpha;
        j["e_xi"] = r.sod->e_xi;
    } else {
        j["mae"] = nullptr;
        j["f_max"] = nullptr;
        j["s_alpha"] = nullptr;
        j["e_xi"] = nullptr;
    }
    j["sod_over"] = "tp_only";
    j["records"] = nlohmann::ordered_json::array();
    for (const EvalRecordRow& row : r.rows) {
        nlohmann::ordered_json jr;
        jr["image_id"] = row.record.image_id;
        jr["group_id"] = row.group_id;
        jr["gt_positive"] = row.record.gt_positive;
        jr["pred_positive"] = row.record.pred_positive;
        jr["category"] = to_string(row.record.category);
        jr["iou"] = row.record.category == Category::TP ? nlohmann::ordered_json(row.record.iou)
                                                        : nlohmann::ordered_json(nullptr);
        jr["d_pos"] = row.d_pos;
        jr["d_neg"] = row.d_neg;
        j["records"].push_back(std::move(jr));
    }
    return j;
}

inline void save_report(const EvalReport& r, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_report: cannot write " + path);
    out << report_to_json(r).dump(1) << "\n";
}

// ---------------------------------------------------------------------------
// Ablation harness
// ---------------------------------------------------------------------------

struct AblationRow {
    std::string suite;
    std::string cell;
    std::string train_criterion;
    std::string test_criterion;
    int n = 0;
    double miou_bar = 0.0;
    std::optional<double> e_xi;
    std::optional<double> r_neg_pct;
};

namespace detail {

inline AblationRow eval_cell(const Model& model, const DatasetManifest& test,
                             const std::string& root, const std::string& suite,
                             const std::string& cell,
                             std::optional<RankCriterion> test_criterion = std::nullopt) {
    EvalOptions opts;
    opts.criterion_override = test_criterion;
    const EvalReport report = evaluate(model, test, root, opts);
    AblationRow row;
    row.suite = suite;
    row.cell = cell;
    row.train_criterion = to_string(model.cfg.rank_criterion);
    row.test_criterion = to_string(test_criterion.value_or(model.cfg.rank_criterion));
    row.n = model.cfg.n;
    row.miou_bar = report.miou_bar;
    if (report.sod) row.e_xi = report.sod->e_xi;
    row.r_neg_pct = report.r_neg_pct;
    return row;
}

} // namespace detail

// Suites: "main" toggles each design off in turn; "rank_criteria" crosses
// train/test ranking criteria; "group_size" regenerates the synthetic
// corpus at N in {1,3,5,8} and retrains.
inline std::vector<AblationRow> ablate(const RunConfig& cfg, const std::string& data_root,
                                       const std::string& suite, std::ostream* log = nullptr) {
    namespace fs = std::filesystem;
    std::vector<AblationRow> rows;

    const auto train_manifest_path = (fs::path(data_root) / "manifest_train.json").string();
    const auto test_manifest_path = (fs::path(data_root) / "manifest_test.json").string();

    const auto run_cell = [&](const RunConfig& cell_cfg, const std::string& cell,
                              const DatasetManifest& train_m, const DatasetManifest& test_m,
                              const std::string& root,
                              std::optional<RankCriterion> test_criterion = std::nullopt) {
        if (log) (*log) << "[ablate] " << suite << " / " << cell << "\n";
        const Model model = train(cell_cfg, train_m, root);
        rows.push_back(detail::eval_cell(model, test_m, root, suite, cell, test_criterion));
    };

    if (suite == "main") {
        const DatasetManifest train_m = load_manifest(train_manifest_path);
        const DatasetManifest test_m = load_manifest(test_manifest_path);
        const std::vector<std::pair<std::string, RunConfig>> cells = [&] {
            std::vector<std::pair<std::string, RunConfig>> c;
            c.emplace_back("full", cfg);
            RunConfig v = cfg;
            v.use_tqm = false;
            c.emplace_back("no_tqm", v);
            v = cfg;
            v.use_hierarchizer = false;
            c.emplace_back("no_hierarchizer", v);
            v = cfg;
            v.use_mirror = false;
            c.emplace_back("no_mirror", v);
            v = cfg;
            v.use_triplet = false;
            c.emplace_back("no_triplet", v);
            return c;
        }();
        for (const auto& [cell, cell_cfg] : cells)
            run_cell(cell_cfg, cell, train_m, test_m, data_root);
    } else if (suite == "rank_criteria") {
        const DatasetManifest train_m = load_manifest(train_manifest_path);
        const DatasetManifest test_m = load_manifest(test_manifest_path);
        const auto with_criterion = [&](RankCriterion c) {
            RunConfig v = cfg;
            v.rank_criterion = c;
            return v;
        };
        const Model random_model = train(with_criterion(RankCriterion::Random), train_m, data_root);
        const Model combined_model =
            train(with_criterion(RankCriterion::PosPlusNeg), train_m, data_root);
        rows.push_back(detail::eval_cell(random_model, test_m, data_root, suite, "random/random",
                                         RankCriterion::Random));
        rows.push_back(detail::eval_cell(random_model, test_m, data_root, suite,
                                         "random/pos_plus_neg", RankCriterion::PosPlusNeg));
        rows.push_back(detail::eval_cell(combined_model, test_m, data_root, suite,
                                         "pos_plus_neg/random", RankCriterion::Random));
        rows.push_back(detail::eval_cell(combined_model, test_m, data_root, suite,
                                         "pos_plus_neg/pos_plus_neg", RankCriterion::PosPlusNeg));
        const Model pos_model = train(with_criterion(RankCriterion::Pos), train_m, data_root);
        rows.push_back(
            detail::eval_cell(pos_model, test_m, data_root, suite, "pos/pos", RankCriterion::Pos));
        const Model neg_model = train(with_criterion(RankCriterion::Neg), train_m, data_root);
        rows.push_back(
            detail::eval_cell(neg_model, test_m, data_root, suite, "neg/neg", RankCriterion::Neg));
    } else if (suite == "group_size") {
        for (int n : {1, 3, 5, 8}) {
            RunConfig cell_cfg = cfg;
            cell_cfg.n = n;
            const std::string root = (fs::path(data_root) / ("ablate_n" + std::to_string(n))).string();
            SynthConfig synth;
            synth.image_size = cfg.image_size;
            synth.colors = cfg.synth_colors;
            synth.shapes = cfg.synth_shapes;
            synth.n = n;
            synth.out_dir = root;
            synth.groups = cfg.synth_train_groups;
            synth.split = "train";
            const DatasetManifest train_m = generate_synthetic(synth, cfg.seed);
            save_manifest(train_m, (fs::path(root) / "manifest_train.json").string());
            synth.groups = cfg.synth_test_groups;
            synth.split = "test";
            const DatasetManifest test_m = generate_synthetic(synth, cfg.seed);
            save_manifest(test_m, (fs::path(root) / "manifest_test.json").string());
            run_cell(cell_cfg, "n" + std::to_string(n), train_m, test_m, root);
        }
    } else {
        throw std::invalid_argument("ablate: unknown suite '" + suite +
                                    "' (expected main|rank_criteria|group_size)");
    }
    return rows;
}

inline void save_ablation_csv(const std::vector<AblationRow>& rows, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_ablation_csv: cannot write " + path);
    out << "suite,cell,train_criterion,test_criterion,n,miou_bar,e_xi,r_neg\n";
    for (const AblationRow& r : rows) {
        out << r.suite << "," << r.cell << "," << r.train_criterion << "," << r.test_criterion
            << "," << r.n << "," << r.miou_bar << ",";
        if (r.e_xi) out << *r.e_xi;
        out << ",";
        if (r.r_neg_pct) out << *r.r_neg_pct;
        out << "\n";
    }
}

} // namespace gres
