// Command-line front end: generate | train | eval | ablate | validate.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "gres/config.hpp"
#include "gres/dataset.hpp"
#include "gres/trainer.hpp"

namespace fs = std::filesystem;

namespace {

gres::RunConfig load_run_config(const std::string& path, std::optional<std::uint64_t> seed_flag) {
    gres::RunConfig cfg = path.empty() ? gres::RunConfig{} : gres::load_config(path);
    if (const char* env = std::getenv("GRES_SEED"); env && *env) cfg.seed = std::stoull(env);
    if (seed_flag) cfg.seed = *seed_flag; // --seed wins over GRES_SEED
    cfg.validate();
    return cfg;
}

int cmd_generate(const gres::RunConfig& cfg, const std::string& out_dir) {
    gres::SynthConfig synth;
    synth.image_size = cfg.image_size;
    synth.colors = cfg.synth_colors;
    synth.shapes = cfg.synth_shapes;
    synth.n = cfg.n;
    synth.out_dir = out_dir;

    synth.split = "train";
    synth.groups = cfg.synth_train_groups;
    const gres::DatasetManifest train_m = gres::generate_synthetic(synth, cfg.seed);
    gres::save_manifest(train_m, (fs::path(out_dir) / "manifest_train.json").string());

    synth.split = "test";
    synth.groups = cfg.synth_test_groups;
    const gres::DatasetManifest test_m = gres::generate_synthetic(synth, cfg.seed);
    gres::save_manifest(test_m, (fs::path(out_dir) / "manifest_test.json").string());

    std::cout << "generated " << train_m.groups.size() << " train and " << test_m.groups.size()
              << " test groups under " << out_dir << "\n";
    return 0;
}

int cmd_train(const gres::RunConfig& cfg, const std::string& data_dir, const std::string& out_ckpt) {
    const gres::DatasetManifest manifest =
        gres::load_manifest((fs::path(data_dir) / "manifest_train.json").string());
    gres::TrainOptions opts;
    opts.loss_csv_path = out_ckpt + ".losses.csv";
    opts.log = &std::cout;
    const gres::Model model = gres::train(cfg, manifest, data_dir, opts);
    gres::save_checkpoint(model, cfg.epochs, out_ckpt);
    std::cout << "checkpoint written to " << out_ckpt << "\n";
    return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_dir,
             const std::string& report_path, bool dump_heatmaps,
             const std::string& test_criterion) {
    const gres::Model model = gres::load_checkpoint(ckpt_path);
    const gres::DatasetManifest manifest =
        gres::load_manifest((fs::path(data_dir) / "manifest_test.json").string());

    gres::EvalOptions opts;
    if (dump_heatmaps)
        opts.heatmap_dir = (fs::path(report_path).parent_path() / "heatmaps").string();
    if (!test_criterion.empty())
        opts.criterion_override = gres::parse_rank_criterion(test_criterion);

    const gres::EvalReport report = gres::evaluate(model, manifest, data_dir, opts);
    gres::save_report(report, report_path);

    std::cout << "miou_bar " << report.miou_bar;
    if (report.r_neg_pct) std::cout << "  r_neg " << *report.r_neg_pct;
    if (report.sod) std::cout << "  e_xi " << report.sod->e_xi;
    std::cout << "  report " << report_path << "\n";
    return 0;
}

int cmd_ablate(const gres::RunConfig& cfg, const std::string& data_dir, const std::string& suite,
               const std::string& report_path) {
    const std::vector<gres::AblationRow> rows = gres::ablate(cfg, data_dir, suite, &std::cout);
    gres::save_ablation_csv(rows, report_path);
    std::cout << "ablation table written to " << report_path << "\n";
    return 0;
}

int cmd_validate(const std::string& data_dir, const std::string& manifest_name) {
    int worst = 0;
    for (const std::string name : manifest_name.empty()
                                      ? std::vector<std::string>{"manifest_train.json",
                                                                 "manifest_test.json"}
                                      : std::vector<std::string>{manifest_name}) {
        const fs::path path = fs::path(data_dir) / name;
        if (!fs::exists(path)) continue;
        const gres::DatasetManifest manifest = gres::load_manifest(path.string());
        const gres::ValidationReport report = gres::validate_manifest(manifest, data_dir);
        std::cout << name << ": " << manifest.groups.size() << " groups, "
                  << report.violations.size() << " violation(s)\n";
        for (const std::string& v : report.violations) std::cout << "  " << v << "\n";
        if (!report.ok()) worst = 1;
    }
    return worst;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Group-wise referring expression segmentation pipeline"};
    app.require_subcommand(1);

    std::string config_path, data_dir, out_path, report_path, ckpt_path;
    std::string suite = "main", manifest_name, test_criterion;
    bool dump_heatmaps = false;
    std::optional<std::uint64_t> seed_flag;

    CLI::App* generate = app.add_subcommand("generate", "Write a seeded synthetic corpus");
    generate->add_option("--config", config_path, "run config file");
    generate->add_option("--out", out_path, "output dataset directory")->required();
    generate->add_option("--seed", seed_flag, "seed override");

    CLI::App* train = app.add_subcommand("train", "Train on a grouped dataset");
    train->add_option("--config", config_path, "run config file");
    train->add_option("--data", data_dir, "dataset directory")->required();
    train->add_option("--out", ckpt_path, "output checkpoint path")->required();
    train->add_option("--seed", seed_flag, "seed override");

    CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
    eval->add_option("--ckpt", ckpt_path, "checkpoint path")->required();
    eval->add_option("--data", data_dir, "dataset directory")->required();
    eval->add_option("--report", report_path, "output report JSON")->required();
    eval->add_flag("--dump-heatmaps", dump_heatmaps, "write heatmap PNGs next to the report");
    eval->add_option("--rank-criterion", test_criterion,
                     "override the ranking criterion at test time");

    CLI::App* ablate = app.add_subcommand("ablate", "Run an ablation suite");
    ablate->add_option("--suite", suite, "main | rank_criteria | group_size");
    ablate->add_option("--config", config_path, "run config file");
    ablate->add_option("--data", data_dir, "dataset directory")->required();
    ablate->add_option("--report", report_path, "output CSV path")->required();
    ablate->add_option("--seed", seed_flag, "seed override");

    CLI::App* validate = app.add_subcommand("validate", "Check manifest invariants");
    validate->add_option("--data", data_dir, "dataset directory")->required();
    validate->add_option("--manifest", manifest_name, "specific manifest file name");

    CLI11_PARSE(app, argc, argv);

    try {
        if (generate->parsed()) return cmd_generate(load_run_config(config_path, seed_flag), out_path);
        if (train->parsed()) return cmd_train(load_run_config(config_path, seed_flag), data_dir, ckpt_path);
        if (eval->parsed())
            return cmd_eval(ckpt_path, data_dir, report_path, dump_heatmaps, test_criterion);
        if (ablate->parsed())
            return cmd_ablate(load_run_config(config_path, seed_flag), data_dir, suite, report_path);
        if (validate->parsed()) return cmd_validate(data_dir, manifest_name);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
