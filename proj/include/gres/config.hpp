#pragma once

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gres/hierarchizer.hpp"

namespace gres {

// Flat key-value run configuration. Lines are `key = value`; '#' starts a
// comment. Unknown keys are rejected with the list of valid keys.
struct RunConfig {
    int n = 4;
    int epochs = 24;
    double lr = 0.08;
    double weight_decay = 1e-4;
    int image_size = 64;
    int c_l = 64;
    int c_v = 64;
    double margin = 1.0;
    double lambda = 1.0;
    RankCriterion rank_criterion = RankCriterion::PosPlusNeg;
    bool use_tqm = true;
    bool use_hierarchizer = true;
    bool use_mirror = true;
    bool use_triplet = true;
    std::uint64_t seed = 7;

    // synthetic corpus
    int synth_train_groups = 200;
    int synth_test_groups = 50;
    std::vector<std::string> synth_colors = {"red", "green", "blue"};
    std::vector<std::string> synth_shapes = {"circle", "square", "triangle"};

    void validate() const {
        if (n < 1) throw std::invalid_argument("config: n must be >= 1");
        if (epochs < 1) throw std::invalid_argument("config: epochs must be >= 1");
        if (margin < 0.0) throw std::invalid_argument("config: margin must be >= 0");
        if (lambda < 0.0) throw std::invalid_argument("config: lambda must be >= 0");
        if (image_size < 16 || image_size % 4 != 0)
            throw std::invalid_argument("config: image_size must be >= 16 and divisible by 4");
        if (c_l < 1 || c_v < 1) throw std::invalid_argument("config: c_l and c_v must be >= 1");
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

inline bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw std::invalid_argument("config: bad boolean for " + key + ": " + v);
}

inline const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = {
        "n",           "epochs",       "lr",
        "weight_decay", "image_size",  "c_l",
        "c_v",         "margin",       "lambda",
        "rank_criterion", "use_tqm",   "use_hierarchizer",
        "use_mirror",  "use_triplet",  "seed",
        "synth_train_groups", "synth_test_groups", "synth_colors", "synth_shapes"};
    return keys;
}

} // namespace detail

inline void apply_config_line(RunConfig& cfg, const std::string& key, const std::string& value) {
    using detail::parse_bool;
    if (key == "n") cfg.n = std::stoi(value);
    else if (key == "epochs") cfg.epochs = std::stoi(value);
    else if (key == "lr") cfg.lr = std::stod(value);
    else if (key == "weight_decay") cfg.weight_decay = std::stod(value);
    else if (key == "image_size") cfg.image_size = std::stoi(value);
    else if (key == "c_l") cfg.c_l = std::stoi(value);
    else if (key == "c_v") cfg.c_v = std::stoi(value);
    else if (key == "margin") cfg.margin = std::stod(value);
    else if (key == "lambda") cfg.lambda = std::stod(value);
    else if (key == "rank_criterion") cfg.rank_criterion = parse_rank_criterion(value);
    else if (key == "use_tqm") cfg.use_tqm = parse_bool(value, key);
    else if (key == "use_hierarchizer") cfg.use_hierarchizer = parse_bool(value, key);
    else if (key == "use_mirror") cfg.use_mirror = parse_bool(value, key);
    else if (key == "use_triplet") cfg.use_triplet = parse_bool(value, key);
    else if (key == "seed") cfg.seed = std::stoull(value);
    else if (key == "synth_train_groups") cfg.synth_train_groups = std::stoi(value);
    else if (key == "synth_test_groups") cfg.synth_test_groups = std::stoi(value);
    else if (key == "synth_colors") cfg.synth_colors = detail::split_list(value);
    else if (key == "synth_shapes") cfg.synth_shapes = detail::split_list(value);
    else {
        std::string msg = "config: unknown key '" + key + "'; valid keys:";
        for (const std::string& k : detail::config_keys()) msg += " " + k;
        throw std::invalid_argument(msg);
    }
}

inline RunConfig parse_config(std::istream& in) {
    RunConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                        " is not `key = value`");
        apply_config_line(cfg, detail::trim(line.substr(0, eq)),
                          detail::trim(line.substr(eq + 1)));
    }
    cfg.validate();
    return cfg;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_config: cannot open " + path);
    return parse_config(in);
}

inline std::string config_to_text(const RunConfig& c) {
    std::ostringstream out;
    out << std::setprecision(17);
    const auto join = [](const std::vector<std::string>& v) {
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (i) s += ",";
            s += v[i];
        }
        return s;
    };
    out << "n = " << c.n << "\n";
    out << "epochs = " << c.epochs << "\n";
    out << "lr = " << c.lr << "\n";
    out << "weight_decay = " << c.weight_decay << "\n";
    out << "image_size = " << c.image_size << "\n";
    out << "c_l = " << c.c_l << "\n";
    out << "c_v = " << c.c_v << "\n";
    out << "margin = " << c.margin << "\n";
    out << "lambda = " << c.lambda << "\n";
    out << "rank_criterion = " << to_string(c.rank_criterion) << "\n";
    out << "use_tqm = " << (c.use_tqm ? "true" : "false") << "\n";
    out << "use_hierarchizer = " << (c.use_hierarchizer ? "true" : "false") << "\n";
    out << "use_mirror = " << (c.use_mirror ? "true" : "false") << "\n";
    out << "use_triplet = " << (c.use_triplet ? "true" : "false") << "\n";
    out << "seed = " << c.seed << "\n";
    out << "synth_train_groups = " << c.synth_train_groups << "\n";
    out << "synth_test_groups = " << c.synth_test_groups << "\n";
    out << "synth_colors = " << join(c.synth_colors) << "\n";
    out << "synth_shapes = " << join(c.synth_shapes) << "\n";
    return out.str();
}

} // namespace gres
