#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "gres/png_io.hpp"
#include "gres/rng.hpp"
#include "gres/tensor.hpp"

namespace gres {

// Grouped dataset: one expression versus a group of N images, some of
// which are negatives whose ground truth is the zero mask.

struct ImageRecord {
    std::string image_id;
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;                 // H*W*3 interleaved
    std::optional<std::vector<std::uint8_t>> mask; // H*W, values {0,1}
    bool is_positive = false;

    bool mask_has_foreground() const {
        if (!mask) return false;
        for (std::uint8_t v : *mask)
            if (v) return true;
        return false;
    }
};

struct GroupSample {
    std::string group_id;
    std::vector<std::string> expression;
    std::vector<ImageRecord> images;
};

struct ManifestImage {
    std::string path;
    std::optional<std::string> mask_path;
    bool is_positive = false;
};

struct ManifestGroup {
    std::string group_id;
    std::vector<std::string> expression;
    std::vector<ManifestImage> images;
};

struct DatasetManifest {
    int n = 0;
    std::string split = "train"; // train|val|test
    std::vector<std::string> vocab;
    std::vector<ManifestGroup> groups;

    const ManifestGroup* find_group(const std::string& id) const {
        for (const ManifestGroup& g : groups)
            if (g.group_id == id) return &g;
        return nullptr;
    }
};

// ---------------------------------------------------------------------------
// Manifest JSON
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json manifest_to_json(const DatasetManifest& m) {
    nlohmann::ordered_json j;
    j["N"] = m.n;
    j["split"] = m.split;
    j["vocab"] = m.vocab;
    j["groups"] = nlohmann::ordered_json::array();
    for (const ManifestGroup& g : m.groups) {
        nlohmann::ordered_json jg;
        jg["group_id"] = g.group_id;
        jg["expression"] = g.expression;
        jg["images"] = nlohmann::ordered_json::array();
        for (const ManifestImage& im : g.images) {
            nlohmann::ordered_json ji;
            ji["path"] = im.path;
            if (im.mask_path)
                ji["mask_path"] = *im.mask_path;
            else
                ji["mask_path"] = nullptr;
            ji["is_positive"] = im.is_positive;
            jg["images"].push_back(std::move(ji));
        }
        j["groups"].push_back(std::move(jg));
    }
    return j;
}

inline void save_manifest(const DatasetManifest& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_manifest: cannot write " + path);
    out << manifest_to_json(m).dump(1) << "\n";
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j) {
    DatasetManifest m;
    m.n = j.at("N").get<int>();
    if (j.contains("split")) m.split = j.at("split").get<std::string>();
    m.vocab = j.at("vocab").get<std::vector<std::string>>();
    for (const auto& jg : j.at("groups")) {
        ManifestGroup g;
        g.group_id = jg.at("group_id").get<std::string>();
        g.expression = jg.at("expression").get<std::vector<std::string>>();
        for (const auto& ji : jg.at("images")) {
            ManifestImage im;
            im.path = ji.at("path").get<std::string>();
            if (ji.contains("mask_path") && !ji.at("mask_path").is_null())
                im.mask_path = ji.at("mask_path").get<std::string>();
            im.is_positive = ji.at("is_positive").get<bool>();
            g.images.push_back(std::move(im));
        }
        m.groups.push_back(std::move(g));
    }
    return m;
}

inline DatasetManifest load_manifest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_manifest: cannot open " + path);
    nlohmann::json j;
    in >> j;
    return manifest_from_json(j);
}

// ---------------------------------------------------------------------------
// Synthetic corpus
// ---------------------------------------------------------------------------

struct SynthConfig {
    int image_size = 64;
    std::vector<std::string> colors = {"red", "green", "blue"};
    std::vector<std::string> shapes = {"circle", "square", "triangle"};
    int groups = 10;
    int n = 4;
    std::string split = "train";
    std::string out_dir; // images land in <out_dir>/images
};

namespace detail {

inline void rgb_of(const std::string& color, int& r, int& g, int& b) {
    if (color == "red") {
        r = 215; g = 45; b = 45;
    } else if (color == "green") {
        r = 45; g = 190; b = 45;
    } else if (color == "blue") {
        r = 45; g = 85; b = 215;
    } else if (color == "yellow") {
        r = 215; g = 200; b = 40;
    } else if (color == "purple") {
        r = 150; g = 50; b = 190;
    } else { // cyan and anything else
        r = 50; g = 190; b = 190;
    }
}

struct Placed {
    int cx, cy, half;
};

inline bool inside_shape(const std::string& shape, int cx, int cy, int half, int x, int y) {
    if (shape == "circle") {
        const long long dx = x - cx, dy = y - cy;
        return dx * dx + dy * dy <= static_cast<long long>(half) * half;
    }
    if (shape == "square") return std::abs(x - cx) <= half && std::abs(y - cy) <= half;
    // triangle, apex up
    if (y < cy - half || y > cy + half) return false;
    const double t = static_cast<double>(y - (cy - half)) / (2.0 * half);
    return std::abs(x - cx) <= t * half;
}

inline void draw_shape(PngImage& img, std::vector<std::uint8_t>* mask, const std::string& shape,
                       const std::string& color, int cx, int cy, int half, Rng& rng) {
    int r, g, b;
    rgb_of(color, r, g, b);
    const int jr = static_cast<int>(rng.range(-12, 12));
    const int jg = static_cast<int>(rng.range(-12, 12));
    const int jb = static_cast<int>(rng.range(-12, 12));
    for (int y = std::max(0, cy - half); y <= std::min(img.height - 1, cy + half); ++y)
        for (int x = std::max(0, cx - half); x <= std::min(img.width - 1, cx + half); ++x) {
            if (!inside_shape(shape, cx, cy, half, x, y)) continue;
            const std::size_t off = (static_cast<std::size_t>(y) * img.width + x) * 3;
            img.pixels[off + 0] = static_cast<std::uint8_t>(std::clamp(r + jr, 0, 255));
            img.pixels[off + 1] = static_cast<std::uint8_t>(std::clamp(g + jg, 0, 255));
            img.pixels[off + 2] = static_cast<std::uint8_t>(std::clamp(b + jb, 0, 255));
            if (mask) (*mask)[static_cast<std::size_t>(y) * img.width + x] = 255;
        }
}

inline bool place_nonoverlapping(Rng& rng, int image_size, int half, std::vector<Placed>& placed,
                                 int& cx, int& cy) {
    for (int attempt = 0; attempt < 40; ++attempt) {
        cx = static_cast<int>(rng.range(half + 2, image_size - half - 3));
        cy = static_cast<int>(rng.range(half + 2, image_size - half - 3));
        bool clear = true;
        for (const Placed& p : placed) {
            const long long dx = cx - p.cx, dy = cy - p.cy;
            const long long min_d = p.half + half + 2;
            if (dx * dx + dy * dy < min_d * min_d) {
                clear = false;
                break;
            }
        }
        if (clear) {
            placed.push_back({cx, cy, half});
            return true;
        }
    }
    return false;
}

} // namespace detail

// Seeded synthetic corpus: each group pairs a "color shape" expression with
// positives containing exactly one matching shape among distractors and
// negatives containing distractors only.
inline DatasetManifest generate_synthetic(const SynthConfig& cfg, std::uint64_t seed) {
    if (cfg.image_size < 16 || cfg.image_size % 4 != 0)
        throw std::invalid_argument("generate_synthetic: image_size must be >= 16 and divisible by 4");
    if (cfg.n < 1 || cfg.groups < 1)
        throw std::invalid_argument("generate_synthetic: need n >= 1 and groups >= 1");
    const int combos = static_cast<int>(cfg.colors.size() * cfg.shapes.size());
    if (combos < 2)
        throw std::invalid_argument(
            "generate_synthetic: vocabulary too small to produce distractors");

    namespace fs = std::filesystem;
    const fs::path root(cfg.out_dir);
    fs::create_directories(root / "images");
    fs::create_directories(root / "masks");

    DatasetManifest manifest;
    manifest.n = cfg.n;
    manifest.split = cfg.split;
    manifest.vocab = cfg.colors;
    manifest.vocab.insert(manifest.vocab.end(), cfg.shapes.begin(), cfg.shapes.end());

    const int S = cfg.image_size;
    const int max_half = std::max(5, S / 5);
    const int min_half = std::max(4, S / 9);

    for (int g = 0; g < cfg.groups; ++g) {
        Rng rng = Rng(seed).fork(hash_name(cfg.split)).fork(static_cast<std::uint64_t>(g));

        const int combo = g % combos;
        const std::string target_color = cfg.colors[combo / cfg.shapes.size()];
        const std::string target_shape = cfg.shapes[combo % cfg.shapes.size()];

        int positives = cfg.n / 2;
        if (cfg.n % 2 != 0 && g % 2 == 0) ++positives; // odd N: alternate the extra slot

        std::vector<int> slot_positive(static_cast<std::size_t>(cfg.n), 0);
        for (int i = 0; i < positives; ++i) slot_positive[static_cast<std::size_t>(i)] = 1;
        rng.shuffle(slot_positive);

        char gid[32];
        std::snprintf(gid, sizeof(gid), "%s_g%04d", cfg.split.c_str(), g);

        ManifestGroup group;
        group.group_id = gid;
        group.expression = {target_color, target_shape};

        for (int i = 0; i < cfg.n; ++i) {
            PngImage img;
            img.width = img.height = S;
            img.channels = 3;
            img.pixels.resize(static_cast<std::size_t>(S) * S * 3);
            for (std::size_t px = 0; px < img.pixels.size(); ++px)
                img.pixels[px] = static_cast<std::uint8_t>(
                    std::clamp(static_cast<int>(std::lround(rng.normal(120.0, 6.0))), 0, 255));

            const bool positive = slot_positive[static_cast<std::size_t>(i)];
            std::vector<detail::Placed> placed;
            std::vector<std::uint8_t> mask;

            if (positive) {
                mask.assign(static_cast<std::size_t>(S) * S, 0);
                const int half = static_cast<int>(rng.range(min_half, max_half));
                int cx, cy;
                detail::place_nonoverlapping(rng, S, half, placed, cx, cy);
                detail::draw_shape(img, &mask, target_shape, target_color, cx, cy, half, rng);
            }

            const int distractors =
                static_cast<int>(positive ? rng.range(1, 2) : rng.range(2, 3));
            for (int d = 0; d < distractors; ++d) {
                int pick = static_cast<int>(rng.below(static_cast<std::uint64_t>(combos - 1)));
                if (pick >= combo) ++pick; // any combo except the target
                const std::string& dc = cfg.colors[static_cast<std::size_t>(pick) / cfg.shapes.size()];
                const std::string& ds = cfg.shapes[static_cast<std::size_t>(pick) % cfg.shapes.size()];
                const int half = static_cast<int>(rng.range(min_half, max_half));
                int cx, cy;
                if (detail::place_nonoverlapping(rng, S, half, placed, cx, cy))
                    detail::draw_shape(img, nullptr, ds, dc, cx, cy, half, rng);
            }

            char iid[48];
            std::snprintf(iid, sizeof(iid), "%s_i%d", gid, i);

            ManifestImage mi;
            mi.path = std::string("images/") + iid + ".png";
            mi.is_positive = positive;
            write_png((root / mi.path).string(), img);
            if (positive) {
                PngImage mimg;
                mimg.width = mimg.height = S;
                mimg.channels = 1;
                mimg.pixels = mask;
                mi.mask_path = std::string("masks/") + iid + ".png";
                write_png((root / *mi.mask_path).string(), mimg);
            }
            group.images.push_back(std::move(mi));
        }
        manifest.groups.push_back(std::move(group));
    }
    return manifest;
}

// ---------------------------------------------------------------------------
// Regrouping per-image referring annotations
// ---------------------------------------------------------------------------

struct Annotation {
    std::string image_id;
    std::string image_path;
    std::optional<std::string> mask_path;
    std::vector<std::string> expression;
};

struct PoolImage {
    std::string image_id;
    std::string image_path;
};

namespace detail {

inline std::string expr_key(const std::vector<std::string>& e) {
    std::string k;
    for (const std::string& t : e) {
        k += t;
        k += '\x1f';
    }
    return k;
}

} // namespace detail

// Rebuilds per-image annotations into groups of N: records sharing an
// expression (exact token-sequence match) become the positives of a group,
// chunked at N/2 per group, and each group is filled to N with negatives
// sampled from pool images that never carry that expression.
inline DatasetManifest regroup_res(const std::vector<Annotation>& annotations,
                                   const std::vector<PoolImage>& negatives_pool, int n,
                                   std::uint64_t seed, const std::string& split = "train") {
    if (annotations.empty()) throw std::invalid_argument("regroup_res: no annotations");
    if (n < 1) throw std::invalid_argument("regroup_res: n must be >= 1");

    // expression -> annotation indices, in first-appearance order
    std::vector<std::string> class_keys;
    std::unordered_map<std::string, std::vector<std::size_t>> classes;
    std::unordered_map<std::string, std::unordered_set<std::string>> exprs_of_image;
    for (std::size_t i = 0; i < annotations.size(); ++i) {
        const std::string key = detail::expr_key(annotations[i].expression);
        auto [it, inserted] = classes.try_emplace(key);
        if (inserted) class_keys.push_back(key);
        it->second.push_back(i);
        exprs_of_image[annotations[i].image_id].insert(key);
    }

    DatasetManifest manifest;
    manifest.n = n;
    manifest.split = split;
    {
        std::set<std::string> vocab;
        for (const Annotation& a : annotations)
            vocab.insert(a.expression.begin(), a.expression.end());
        manifest.vocab.assign(vocab.begin(), vocab.end());
    }

    Rng rng = Rng(seed).fork(hash_name("regroup"));
    const std::size_t chunk_cap = static_cast<std::size_t>(std::max(1, n / 2));
    int group_seq = 0;

    for (const std::string& key : class_keys) {
        const std::vector<std::size_t>& members = classes[key];
        for (std::size_t start = 0; start < members.size(); start += chunk_cap) {
            const std::size_t stop = std::min(members.size(), start + chunk_cap);

            ManifestGroup group;
            char gid[32];
            std::snprintf(gid, sizeof(gid), "%s_g%04d", split.c_str(), group_seq++);
            group.group_id = gid;
            group.expression = annotations[members[start]].expression;

            std::unordered_set<std::string> used_ids;
            for (std::size_t m = start; m < stop; ++m) {
                const Annotation& a = annotations[members[m]];
                if (!used_ids.insert(a.image_id).second)
                    throw std::invalid_argument("regroup_res: duplicate image '" + a.image_id +
                                                "' within one group");
                ManifestImage mi;
                mi.path = a.image_path;
                mi.mask_path = a.mask_path;
                mi.is_positive = true;
                group.images.push_back(std::move(mi));
            }

            const std::size_t need_neg = static_cast<std::size_t>(n) - group.images.size();
            if (need_neg > 0) {
                std::vector<const PoolImage*> eligible;
                for (const PoolImage& p : negatives_pool) {
                    if (used_ids.count(p.image_id)) continue;
                    auto it = exprs_of_image.find(p.image_id);
                    if (it != exprs_of_image.end() && it->second.count(key)) continue;
                    eligible.push_back(&p);
                }
                if (eligible.size() < need_neg)
                    throw std::runtime_error(
                        "regroup_res: negatives pool exhausted for expression group " +
                        std::string(gid));
                for (std::size_t k = 0; k < need_neg; ++k) {
                    const std::size_t pick =
                        k + static_cast<std::size_t>(rng.below(eligible.size() - k));
                    std::swap(eligible[k], eligible[pick]);
                    if (!used_ids.insert(eligible[k]->image_id).second)
                        throw std::invalid_argument("regroup_res: duplicate image '" +
                                                    eligible[k]->image_id + "' within one group");
                    ManifestImage mi;
                    mi.path = eligible[k]->image_path;
                    mi.is_positive = false;
                    group.images.push_back(std::move(mi));
                }
            }
            rng.shuffle(group.images);
            manifest.groups.push_back(std::move(group));
        }
    }
    return manifest;
}

// ---------------------------------------------------------------------------
// Loading and validation
// ---------------------------------------------------------------------------

// Decodes one group's pixels and masks; masks binarize at half their peak
// value. Mixed mask values are reported through `warnings` when given.
inline GroupSample load_group(const DatasetManifest& manifest, const std::string& group_id,
                              const std::string& root_dir,
                              std::vector<std::string>* warnings = nullptr) {
    const ManifestGroup* mg = manifest.find_group(group_id);
    if (!mg) throw std::invalid_argument("load_group: unknown group " + group_id);

    namespace fs = std::filesystem;
    GroupSample sample;
    sample.group_id = mg->group_id;
    sample.expression = mg->expression;

    for (const ManifestImage& mi : mg->images) {
        ImageRecord rec;
        rec.image_id = fs::path(mi.path).stem().string();
        rec.is_positive = mi.is_positive;

        const PngImage img = read_png((fs::path(root_dir) / mi.path).string());
        rec.width = img.width;
        rec.height = img.height;
        rec.rgb.resize(static_cast<std::size_t>(img.width) * img.height * 3);
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x)
                for (int c = 0; c < 3; ++c)
                    rec.rgb[(static_cast<std::size_t>(y) * img.width + x) * 3 + c] =
                        img.channels == 3 ? img.at(y, x, c) : img.at(y, x, 0);

        if (mi.mask_path) {
            const PngImage m = read_png((fs::path(root_dir) / *mi.mask_path).string());
            if (m.width != img.width || m.height != img.height)
                throw std::runtime_error("load_group: mask size mismatch for " + mi.path);
            std::uint8_t maxv = 0;
            bool mixed = false;
            for (std::size_t i = 0; i < m.pixels.size(); i += static_cast<std::size_t>(m.channels))
                maxv = std::max(maxv, m.pixels[i]);
            std::vector<std::uint8_t> bin(static_cast<std::size_t>(m.width) * m.height, 0);
            if (maxv > 0) {
                const double thr = 0.5 * maxv;
                for (int y = 0; y < m.height; ++y)
                    for (int x = 0; x < m.width; ++x) {
                        const std::uint8_t v = m.at(y, x, 0);
                        if (v != 0 && v != maxv) mixed = true;
                        bin[static_cast<std::size_t>(y) * m.width + x] = v > thr ? 1 : 0;
                    }
            }
            if (mixed && warnings)
                warnings->push_back("non-binary mask binarized at half peak: " + *mi.mask_path);
            rec.mask = std::move(bin);
        }

        const bool fg = rec.mask_has_foreground();
        if (rec.is_positive && !fg)
            throw std::runtime_error("load_group: positive record without foreground mask: " +
                                     mi.path);
        if (!rec.is_positive && fg)
            throw std::runtime_error("load_group: negative record with nonzero mask: " + mi.path);
        sample.images.push_back(std::move(rec));
    }
    return sample;
}

struct GroupStats {
    std::string group_id;
    int size = 0;
    int positives = 0;
    int negatives = 0;
};

struct ValidationReport {
    std::vector<std::string> violations;
    std::vector<GroupStats> stats;

    bool ok() const { return violations.empty(); }
};

// Structural checks over a manifest; violations are report entries, never
// exceptions. Exit-code contract of the CLI: 0 iff the report is clean.
inline ValidationReport validate_manifest(const DatasetManifest& manifest,
                                          const std::string& root_dir, bool deep = true) {
    namespace fs = std::filesystem;
    ValidationReport report;

    for (const ManifestGroup& g : manifest.groups) {
        GroupStats st;
        st.group_id = g.group_id;
        st.size = static_cast<int>(g.images.size());

        if (st.size != manifest.n)
            report.violations.push_back("group size mismatch: " + g.group_id + " has " +
                                        std::to_string(st.size) + ", manifest N = " +
                                        std::to_string(manifest.n));
        std::unordered_set<std::string> paths;
        for (const ManifestImage& im : g.images) {
            if (!paths.insert(im.path).second)
                report.violations.push_back("duplicate image in group " + g.group_id + ": " +
                                            im.path);
            if (im.is_positive)
                ++st.positives;
            else
                ++st.negatives;
            if (!fs::exists(fs::path(root_dir) / im.path))
                report.violations.push_back("missing file: " + im.path);
            if (im.is_positive && !im.mask_path)
                report.violations.push_back("positive without mask: " + im.path);
            if (im.mask_path) {
                const fs::path mp = fs::path(root_dir) / *im.mask_path;
                if (!fs::exists(mp)) {
                    report.violations.push_back("missing file: " + *im.mask_path);
                } else if (deep) {
                    try {
                        const PngImage m = read_png(mp.string());
                        std::uint8_t maxv = 0;
                        for (std::size_t i = 0; i < m.pixels.size();
                             i += static_cast<std::size_t>(m.channels))
                            maxv = std::max(maxv, m.pixels[i]);
                        bool binary = true;
                        bool any_fg = false;
                        for (std::size_t i = 0; i < m.pixels.size();
                             i += static_cast<std::size_t>(m.channels)) {
                            if (m.pixels[i] != 0 && m.pixels[i] != maxv) binary = false;
                            if (m.pixels[i] > maxv / 2) any_fg = true;
                        }
                        if (!binary)
                            report.violations.push_back("non-binary mask: " + *im.mask_path);
                        if (im.is_positive && !any_fg)
                            report.violations.push_back("positive with empty mask: " + im.path);
                    } catch (const std::exception& e) {
                        report.violations.push_back(std::string("unreadable mask: ") + e.what());
                    }
                }
            }
        }
        // Padding may add extra negatives; excess positives break the 1:1 rule.
        if (manifest.split == "train" && st.positives > st.negatives + 1)
            report.violations.push_back("ratio violation in train group " + g.group_id + ": " +
                                        std::to_string(st.positives) + " positives vs " +
                                        std::to_string(st.negatives) + " negatives");
        report.stats.push_back(st);
    }
    return report;
}

// ---------------------------------------------------------------------------
// Tensor conversion
// ---------------------------------------------------------------------------

inline Tensor pixels_to_tensor(const ImageRecord& rec) {
    Tensor t({3, rec.height, rec.width});
    const double inv = 1.0 / 255.0;
    for (int y = 0; y < rec.height; ++y)
        for (int x = 0; x < rec.width; ++x)
            for (int c = 0; c < 3; ++c)
                t.at(c, y, x) =
                    rec.rgb[(static_cast<std::size_t>(y) * rec.width + x) * 3 + c] * inv;
    return t;
}

// Ground-truth mask as a {0,1} map; negatives get the zero mask.
inline Tensor mask_to_tensor(const ImageRecord& rec) {
    Tensor t({rec.height, rec.width});
    if (rec.mask)
        for (std::size_t i = 0; i < rec.mask->size(); ++i) t.data[i] = (*rec.mask)[i] ? 1.0 : 0.0;
    return t;
}

} // namespace gres
