// Copyright 2026 The rseg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// rseg command-line tool.
//
// Exit codes: 0 success, 1 unexpected failure (I/O, malformed JSON),
// 2 library error (incompatible checkpoints, configuration, data),
// 3 a model has a non-positive PVSM, other values are usage errors.

#include <CLI11.hpp>

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "rseg/rseg.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitLibraryError = 2;
constexpr int kExitNonPositivePvsm = 3;

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes, std::uint64_t h = 0xCBF29CE484222325ull) {
    for (std::uint8_t b : bytes) {
        h ^= b;
        h *= 0x100000001B3ull;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    static const char *digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xF];
    return s;
}

/// Hash of the flags and the contents (not paths) of every input file.
class ConfigHasher {
public:
    explicit ConfigHasher(std::string command) { doc_["command"] = std::move(command); }

    void flag(const std::string &name, json value) { doc_["flags"][name] = std::move(value); }

    void input(const std::string &role, const fs::path &path) {
        doc_["inputs"][role].push_back(hex64(fnv1a(rseg::io::read_file(path))));
    }

    std::string digest() const {
        const std::string canon = doc_.dump();
        return hex64(fnv1a({reinterpret_cast<const std::uint8_t *>(canon.data()), canon.size()}));
    }

    json flags() const { return doc_.value("flags", json::object()); }

private:
    json doc_ = json::object();
};

void write_text(const fs::path &path, const std::string &text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    out << text;
    if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

void emit_json(const json &j, const std::string &out) {
    const std::string text = j.dump(2) + "\n";
    if (out.empty()) {
        std::cout << text;
    } else {
        write_text(out, text);
    }
}

json read_json(const fs::path &path) {
    const auto bytes = rseg::io::read_file(path);
    return json::parse(bytes.begin(), bytes.end());
}

std::size_t default_threads() {
    if (const char *env = std::getenv("RESEG_THREADS")) {
        try {
            const long v = std::stol(env);
            if (v > 0) return static_cast<std::size_t>(v);
        } catch (const std::exception &) {
        }
        std::cerr << "warning: ignoring invalid RESEG_THREADS='" << env << "'\n";
    }
    return 1;
}

std::size_t feature_dim(const rseg::Checkpoint &ck, const rseg::EncoderConfig &cfg) {
    return ck.contains(rseg::param::kProj) ? ck.get(rseg::param::kProj).dim(1) : cfg.dim;
}

// ---------------------------------------------------------------------------
// Shared option groups

struct TextOptions {
    std::string embeddings;
    std::string model;
    std::string grammar;
    std::optional<std::uint64_t> toy_seed;

    void add(CLI::App *cmd) {
        cmd->add_option("--text-embeddings", embeddings, "Embedding container (.ckpt1)")->check(CLI::ExistingFile);
        cmd->add_option("--text-model", model, "Model id inside the container (default: first)");
        cmd->add_option("--grammar", grammar, "Prompt grammar JSON")->check(CLI::ExistingFile);
        cmd->add_option("--toy-encoder", toy_seed, "Encode the grammar with the toy encoder of this seed");
    }

    /// C×D class embeddings: the normalized mean of each class's variants.
    rseg::Tensor load(std::size_t dim, ConfigHasher &hash) const {
        if (!embeddings.empty() == !grammar.empty()) {
            throw rseg::ConfigError("give exactly one of --text-embeddings or --grammar");
        }
        if (!embeddings.empty()) {
            hash.input("text_embeddings", embeddings);
            hash.flag("text_model", model);
            const rseg::Checkpoint container = rseg::io::load_checkpoint(embeddings);
            const auto models = rseg::embedding_models(container);
            if (models.empty()) throw rseg::FormatError("'" + embeddings + "' holds no text embeddings");
            const std::string id = model.empty() ? models.front() : model;
            rseg::Tensor t = rseg::class_embeddings(rseg::load_embedding_sets(container, id));
            if (t.dim(1) != dim) {
                throw rseg::DimensionError("text embeddings have dimension " + std::to_string(t.dim(1)) +
                                           " but the image features have " + std::to_string(dim));
            }
            return t;
        }
        if (!toy_seed) throw rseg::ConfigError("--grammar needs --toy-encoder SEED");
        hash.input("grammar", grammar);
        hash.flag("toy_encoder", *toy_seed);
        const rseg::ToyTextEncoder enc(dim, *toy_seed);
        return rseg::class_embeddings(rseg::encode_grammar(rseg::PromptGrammar::load(grammar), enc, "toy"));
    }
};

struct WindowOptions {
    std::size_t tile = 224;
    std::size_t stride = 50;
    std::size_t threads = default_threads();
    std::string average = "similarity";
    float logit_scale = 100.0f;

    void add(CLI::App *cmd) {
        cmd->add_option("--tile", tile, "Square tile side in pixels")->capture_default_str();
        cmd->add_option("--stride", stride, "Tile stride in pixels")->capture_default_str();
        cmd->add_option("--threads", threads, "Worker threads (default: RESEG_THREADS or 1)")
            ->check(CLI::PositiveNumber);
        cmd->add_option("--average", average, "Overlap averaging: similarity or probability")
            ->check(CLI::IsMember({"similarity", "probability"}))
            ->capture_default_str();
        cmd->add_option("--logit-scale", logit_scale, "Softmax scale for probability averaging")
            ->capture_default_str();
    }

    rseg::SlidingWindowConfig config(ConfigHasher &hash) const {
        rseg::SlidingWindowConfig swc;
        swc.tile = tile;
        swc.stride = stride;
        swc.threads = threads;
        swc.averaging =
            average == "probability" ? rseg::ScoreAveraging::Probability : rseg::ScoreAveraging::Similarity;
        swc.logit_scale = logit_scale;
        swc.validate();
        // --threads is not hashed.
        hash.flag("tile", tile);
        hash.flag("stride", stride);
        hash.flag("average", average);
        if (swc.averaging == rseg::ScoreAveraging::Probability) hash.flag("logit_scale", logit_scale);
        return swc;
    }
};

std::vector<rseg::RegionLabelImage> load_rasters(const std::vector<std::string> &paths, ConfigHasher &hash) {
    std::vector<rseg::RegionLabelImage> levels;
    for (const auto &p : paths) {
        hash.input("masks", p);
        levels.push_back(rseg::io::load_labels(p));
    }
    return levels;
}

struct LoadedModel {
    rseg::Checkpoint ckpt;
    rseg::EncoderConfig cfg;
    rseg::Preprocess pre;
};

LoadedModel load_model(const std::string &path, ConfigHasher &hash) {
    hash.input("checkpoint", path);
    LoadedModel m;
    m.ckpt = rseg::io::load_checkpoint(path);
    m.cfg = rseg::EncoderConfig::from_meta(m.ckpt.meta);
    rseg::validate_checkpoint(m.ckpt, m.cfg);
    m.pre = rseg::Preprocess::from_meta(m.ckpt.meta);
    return m;
}

rseg::RegionLabelImage to_label_image(const rseg::LabelMap &labels) {
    rseg::RegionLabelImage img(labels.height, labels.width);
    img.labels = labels.labels;
    return img;
}

// ---------------------------------------------------------------------------
// merge

struct MergeArgs {
    std::vector<std::string> checkpoints;
    std::vector<double> weights;
    std::string report;
    std::string out;
};

int run_merge(const MergeArgs &a) {
    ConfigHasher hash("merge");
    if (a.weights.empty() == a.report.empty()) {
        throw rseg::ConfigError("give exactly one of --weights or --pvsm-report");
    }
    std::vector<double> weights = a.weights;
    json pvsm = nullptr;
    if (!a.report.empty()) {
        hash.input("pvsm_report", a.report);
        const json r = read_json(a.report);
        if (!r.value("valid", true)) {
            std::cerr << "error: PVSM report '" << a.report << "' flags a non-positive PVSM\n";
            return kExitNonPositivePvsm;
        }
        pvsm = json::array();
        for (const auto &m : r.at("models")) {
            weights.push_back(m.at("weight").get<double>());
            pvsm.push_back({{"model_id", m.at("model_id")}, {"pvsm", m.at("pvsm")}});
        }
    }
    hash.flag("weights", weights);

    std::vector<rseg::Checkpoint> ckpts;
    for (const auto &p : a.checkpoints) {
        hash.input("checkpoints", p);
        ckpts.push_back(rseg::io::load_checkpoint(p));
    }
    rseg::Checkpoint fused = rseg::merge_checkpoints(ckpts, weights);
    if (!pvsm.is_null()) fused.meta["pvsm"] = std::move(pvsm);
    fused.meta["config_hash"] = hash.digest();
    rseg::io::save_checkpoint(fused, a.out);

    for (std::size_t o = 0; o < weights.size(); ++o) {
        std::cout << "w[" << o << "] = " << json(weights[o]).dump() << "  " << a.checkpoints[o] << "\n";
    }
    std::cout << "wrote " << a.out << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// pvsm-report

struct PvsmArgs {
    std::string grammar;
    std::vector<std::uint64_t> toy_seeds;
    std::size_t toy_dim = 64;
    std::vector<std::string> embeddings;
    std::string out;
};

int run_pvsm_report(const PvsmArgs &a) {
    std::vector<std::vector<rseg::TextEmbeddingSet>> models;
    std::vector<std::string> ids;
    if (!a.toy_seeds.empty()) {
        if (a.grammar.empty()) throw rseg::ConfigError("--toy-model needs --grammar");
        const rseg::PromptGrammar g = rseg::PromptGrammar::load(a.grammar);
        for (std::uint64_t seed : a.toy_seeds) {
            ids.push_back("toy-" + std::to_string(seed));
            models.push_back(rseg::encode_grammar(g, rseg::ToyTextEncoder(a.toy_dim, seed), ids.back()));
        }
    }
    for (const auto &path : a.embeddings) {
        const rseg::Checkpoint container = rseg::io::load_checkpoint(path);
        const auto found = rseg::embedding_models(container);
        if (found.empty()) throw rseg::FormatError("'" + path + "' holds no text embeddings");
        for (const auto &id : found) {
            ids.push_back(id);
            models.push_back(rseg::load_embedding_sets(container, id));
        }
    }
    if (models.empty()) throw rseg::ConfigError("no models: give --toy-model or --embeddings");

    rseg::PVSMReport report;
    bool valid = true;
    for (std::size_t o = 0; o < models.size(); ++o) {
        report.models.push_back(rseg::score_model(models[o], ids[o]));
        valid = valid && report.models.back().pvsm > 0.0;
    }
    if (valid) rseg::assign_weights(report);

    json j = report.to_json();
    j["valid"] = valid;
    for (auto &m : j["models"]) {
        m["positive"] = m["pvsm"].get<double>() > 0.0;
        if (!valid) m["weight"] = nullptr;
    }
    emit_json(j, a.out);
    if (!valid) {
        for (const auto &m : report.models) {
            if (m.pvsm <= 0.0) {
                std::cerr << "error: model '" << m.model_id << "' has non-positive PVSM " << m.pvsm << "\n";
            }
        }
        return kExitNonPositivePvsm;
    }
    return 0;
}

// ---------------------------------------------------------------------------
// segment

struct SegmentArgs {
    std::string checkpoint;
    std::string image;
    std::vector<std::string> masks;
    TextOptions text;
    WindowOptions window;
    std::size_t theta = 6;
    std::string out_labels;
    std::string out_scores;
};

int run_segment(const SegmentArgs &a) {
    ConfigHasher hash("segment");
    LoadedModel m = load_model(a.checkpoint, hash);
    if (a.theta > m.cfg.layers) {
        throw rseg::ConfigError("--theta " + std::to_string(a.theta) + " exceeds the encoder depth L=" +
                                std::to_string(m.cfg.layers));
    }
    if (a.theta > 0 && a.masks.size() != a.theta) {
        throw rseg::ConfigError("--theta " + std::to_string(a.theta) + " needs " + std::to_string(a.theta) +
                                " mask rasters, got " + std::to_string(a.masks.size()));
    }
    if (a.theta == 0 && !a.masks.empty()) {
        std::cerr << "warning: --theta 0 ignores the " << a.masks.size() << " mask rasters\n";
    }
    m.cfg.masked_layers = a.theta;
    hash.flag("theta", a.theta);
    hash.input("image", a.image);
    const rseg::Tensor image = m.pre.apply(rseg::io::load_image(a.image));
    const rseg::SlidingWindowConfig swc = a.window.config(hash);
    const rseg::Tensor text = a.text.load(feature_dim(m.ckpt, m.cfg), hash);

    const rseg::Segmentation seg =
        a.theta == 0 ? rseg::sliding_window_segment(image, m.ckpt, m.cfg, swc, text, rseg::NoMasks())
                     : rseg::sliding_window_segment(image, m.ckpt, m.cfg, swc, text,
                                                    rseg::RasterMaskSource(load_rasters(a.masks, hash)));
    const std::string digest = hash.digest();

    rseg::io::save_label_png(to_label_image(seg.labels), a.out_labels);
    if (!a.out_scores.empty()) {
        rseg::Checkpoint scores;
        scores.tensors.emplace("scores", seg.scores.scores);
        scores.meta = {{"config_hash", digest}, {"layout", "HxWxC"}};
        rseg::io::save_checkpoint(scores, a.out_scores);
    }
    json sidecar;
    sidecar["command"] = "segment";
    sidecar["config_hash"] = digest;
    sidecar["flags"] = hash.flags();
    sidecar["height"] = seg.labels.height;
    sidecar["width"] = seg.labels.width;
    sidecar["classes"] = text.dim(0);
    sidecar["model_id"] = m.ckpt.meta.value("model_id", std::string());
    write_text(a.out_labels + ".json", sidecar.dump(2) + "\n");
    std::cout << "wrote " << a.out_labels << " (" << seg.labels.height << "x" << seg.labels.width << ", "
              << text.dim(0) << " classes, theta=" << a.theta << ")\n";
    return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
    std::vector<std::string> gt;
    std::vector<std::string> pred;
    std::size_t classes = 0;
    std::optional<std::uint32_t> ignore;
    std::string out;
};

int run_eval(const EvalArgs &a) {
    if (a.gt.size() != a.pred.size()) {
        throw rseg::ConfigError(std::to_string(a.gt.size()) + " --gt files but " + std::to_string(a.pred.size()) +
                                " --pred files");
    }
    ConfigHasher hash("eval");
    hash.flag("classes", a.classes);
    hash.flag("ignore_label", a.ignore ? json(*a.ignore) : json(nullptr));
    rseg::ConfusionMatrix cm(a.classes, a.ignore);
    for (std::size_t i = 0; i < a.gt.size(); ++i) {
        hash.input("gt", a.gt[i]);
        hash.input("pred", a.pred[i]);
        const auto g = rseg::io::load_labels(a.gt[i]);
        const auto p = rseg::io::load_labels(a.pred[i]);
        if (g.height != p.height || g.width != p.width) {
            throw rseg::DataError("'" + a.gt[i] + "' and '" + a.pred[i] + "' differ in size");
        }
        try {
            cm.accumulate(g.labels, p.labels);
        } catch (const rseg::DataError &e) {
            throw rseg::DataError("'" + a.gt[i] + "' / '" + a.pred[i] + "': " + e.what());
        }
    }
    json j = rseg::metrics_json(cm);
    j["images"] = a.gt.size();
    j["config_hash"] = hash.digest();
    emit_json(j, a.out);
    return 0;
}

// ---------------------------------------------------------------------------
// sweep-theta

struct SweepArgs {
    std::string checkpoint;
    std::string image;
    std::string gt;
    std::vector<std::string> masks;
    TextOptions text;
    WindowOptions window;
    std::vector<std::size_t> grid = rseg::default_theta_grid();
    std::optional<std::uint32_t> ignore;
    std::string out;
};

int run_sweep(const SweepArgs &a) {
    ConfigHasher hash("sweep-theta");
    LoadedModel m = load_model(a.checkpoint, hash);
    for (std::size_t theta : a.grid) {
        if (theta > m.cfg.layers) {
            throw rseg::ConfigError("grid entry " + std::to_string(theta) + " exceeds the encoder depth L=" +
                                    std::to_string(m.cfg.layers));
        }
        if (theta > 0 && a.masks.empty()) {
            throw rseg::ConfigError("grid entry " + std::to_string(theta) + " needs mask rasters");
        }
    }
    hash.flag("grid", a.grid);
    hash.flag("ignore_label", a.ignore ? json(*a.ignore) : json(nullptr));
    hash.input("image", a.image);
    hash.input("gt", a.gt);
    const rseg::Tensor image = m.pre.apply(rseg::io::load_image(a.image));
    const rseg::RegionLabelImage truth = rseg::io::load_labels(a.gt);
    const auto rasters = load_rasters(a.masks, hash);
    const rseg::SlidingWindowConfig swc = a.window.config(hash);
    const rseg::Tensor text = a.text.load(feature_dim(m.ckpt, m.cfg), hash);

    json results = json::array();
    for (std::size_t theta : a.grid) {
        const auto idx = rseg::select_levels(rasters.size(), theta);
        std::vector<rseg::RegionLabelImage> chosen;
        for (std::size_t i : idx) chosen.push_back(rasters[i]);
        m.cfg.masked_layers = theta;
        const rseg::Segmentation seg =
            rseg::sliding_window_segment(image, m.ckpt, m.cfg, swc, text, rseg::RasterMaskSource(std::move(chosen)));
        rseg::ConfusionMatrix cm(text.dim(0), a.ignore);
        cm.accumulate(truth.labels, seg.labels.labels);
        const json metrics = rseg::metrics_json(cm);
        results.push_back({{"theta", theta}, {"levels", idx}, {"miou", metrics["miou"]},
                           {"per_class", metrics["per_class"]}});
        std::cerr << "theta=" << theta << " mIoU=" << metrics["miou"].get<double>() << "\n";
    }
    json j;
    j["config_hash"] = hash.digest();
    j["grid"] = a.grid;
    j["results"] = std::move(results);
    emit_json(j, a.out);
    return 0;
}

// ---------------------------------------------------------------------------
// gen-masks, gen-toy, gen-scene

struct GenMasksArgs {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::size_t> points;
    std::size_t base = 0;
    double growth = 2.0;
    std::size_t levels = 0;
    std::uint64_t seed = 0;
    std::string out_dir = ".";
    std::string prefix = "level";
    std::string format = "rgl";
};

/// base·growth^r rounded, bumped where needed so counts strictly increase.
std::vector<std::size_t> geometric_counts(std::size_t base, double growth, std::size_t levels) {
    if (base == 0 || levels == 0) throw rseg::ConfigError("--base and --levels must be positive");
    if (!(growth >= 1.0)) throw rseg::ConfigError("--growth must be at least 1");
    std::vector<std::size_t> counts;
    for (std::size_t r = 0; r < levels; ++r) {
        auto c = static_cast<std::size_t>(std::llround(static_cast<double>(base) * std::pow(growth, r)));
        if (!counts.empty() && c <= counts.back()) c = counts.back() + 1;
        counts.push_back(c);
    }
    return counts;
}

int run_gen_masks(const GenMasksArgs &a) {
    const bool explicit_points = !a.points.empty();
    if (explicit_points == (a.base > 0)) throw rseg::ConfigError("give exactly one of --points or --base");
    const auto counts = explicit_points ? a.points : geometric_counts(a.base, a.growth, a.levels);
    const auto levels = rseg::synthetic::voronoi_hierarchy(a.height, a.width, counts, a.seed);
    fs::create_directories(a.out_dir);
    for (std::size_t r = 0; r < levels.size(); ++r) {
        const fs::path path = fs::path(a.out_dir) / (a.prefix + "_" + std::to_string(r) + "." + a.format);
        rseg::io::save_labels(levels[r], path);
        std::cout << path.string() << "\n";
    }
    return 0;
}

struct GenToyArgs {
    rseg::EncoderConfig cfg{.layers = 4, .dim = 16, .patch = 4, .heads = 2};
    std::size_t grid = 8;
    std::optional<std::size_t> proj_dim;
    std::uint64_t seed = 0;
    std::string model_id = "toy";
    std::string out;
};

int run_gen_toy(const GenToyArgs &a) {
    const rseg::Checkpoint ck = rseg::make_toy_checkpoint(a.cfg, a.grid, a.grid, a.seed, a.model_id, a.proj_dim);
    rseg::io::save_checkpoint(ck, a.out);
    std::cout << "wrote " << a.out << " (tile " << a.grid * a.cfg.patch << " px)\n";
    return 0;
}

struct GenSceneArgs {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t classes = 3;
    std::size_t cells = 12;
    std::uint64_t seed = 0;
    std::string image;
    std::string truth;
};

int run_gen_scene(const GenSceneArgs &a) {
    if (a.classes == 0 || a.cells == 0) throw rseg::ConfigError("--classes and --cells must be positive");
    const auto scene = rseg::synthetic::make_scene(a.height, a.width, a.classes, a.cells, a.seed);
    rseg::io::save_image(scene.image, a.image);
    rseg::io::save_labels(scene.truth, a.truth);
    std::cout << "wrote " << a.image << " and " << a.truth << "\n";
    return 0;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Training-free open-vocabulary segmentation with region-masked attention"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "rseg 1.0.0");

    MergeArgs merge;
    auto *m = app.add_subcommand("merge", "Weighted merge of architecturally identical checkpoints");
    m->add_option("--checkpoint", merge.checkpoints, "Input .ckpt1 (repeatable)")
        ->required()
        ->check(CLI::ExistingFile);
    m->add_option("--weights", merge.weights, "One weight per checkpoint")->delimiter(',');
    m->add_option("--pvsm-report", merge.report, "Take weights from a pvsm-report JSON")->check(CLI::ExistingFile);
    m->add_option("--out", merge.out, "Fused .ckpt1")->required();

    PvsmArgs pvsm;
    auto *p = app.add_subcommand("pvsm-report", "Score text encoders and derive merge weights");
    p->add_option("--grammar", pvsm.grammar, "Prompt grammar JSON")->check(CLI::ExistingFile);
    p->add_option("--toy-model", pvsm.toy_seeds, "Toy text encoder seed, one model each (repeatable)")
        ->delimiter(',');
    p->add_option("--toy-dim", pvsm.toy_dim, "Toy text encoder dimension")->capture_default_str();
    p->add_option("--embeddings", pvsm.embeddings, "Embedding container; every model inside is scored")
        ->check(CLI::ExistingFile);
    p->add_option("--out", pvsm.out, "Report path (default: stdout)");

    SegmentArgs seg;
    auto *s = app.add_subcommand("segment", "Segment one image");
    s->add_option("--checkpoint", seg.checkpoint, "Visual encoder .ckpt1")->required()->check(CLI::ExistingFile);
    s->add_option("--image", seg.image, "RGB image (.png or .ppm)")->required()->check(CLI::ExistingFile);
    s->add_option("--masks", seg.masks, "Region rasters, coarse to fine (.rgl or 16-bit .png)")
        ->check(CLI::ExistingFile);
    s->add_option("--theta", seg.theta, "Number of masked final layers")->capture_default_str();
    s->add_option("--out-labels", seg.out_labels, "Label map (16-bit PNG)")->required();
    s->add_option("--out-scores", seg.out_scores, "Per-pixel class scores (.ckpt1)");
    seg.text.add(s);
    seg.window.add(s);

    EvalArgs ev;
    auto *e = app.add_subcommand("eval", "Confusion matrix and IoU over label-map pairs");
    e->add_option("--gt", ev.gt, "Ground-truth rasters (repeatable)")->required()->check(CLI::ExistingFile);
    e->add_option("--pred", ev.pred, "Predicted rasters, same order as --gt")->required()->check(CLI::ExistingFile);
    e->add_option("--classes", ev.classes, "Number of classes")->required()->check(CLI::PositiveNumber);
    e->add_option("--ignore-label", ev.ignore, "Ground-truth label to skip");
    e->add_option("--out", ev.out, "Metrics JSON (default: stdout)");

    SweepArgs sweep;
    auto *w = app.add_subcommand("sweep-theta", "mIoU as a function of the number of masked layers");
    w->add_option("--checkpoint", sweep.checkpoint, "Visual encoder .ckpt1")->required()->check(CLI::ExistingFile);
    w->add_option("--image", sweep.image, "RGB image")->required()->check(CLI::ExistingFile);
    w->add_option("--gt", sweep.gt, "Ground-truth raster")->required()->check(CLI::ExistingFile);
    w->add_option("--masks", sweep.masks, "Region rasters, coarse to fine")->check(CLI::ExistingFile);
    w->add_option("--grid", sweep.grid, "Layer counts to evaluate")->delimiter(',');
    w->add_option("--ignore-label", sweep.ignore, "Ground-truth label to skip");
    w->add_option("--out", sweep.out, "Sweep JSON (default: stdout)");
    sweep.text.add(w);
    sweep.window.add(w);

    GenMasksArgs gm;
    auto *g = app.add_subcommand("gen-masks", "Seeded Voronoi region hierarchy");
    g->add_option("--height", gm.height)->required()->check(CLI::PositiveNumber);
    g->add_option("--width", gm.width)->required()->check(CLI::PositiveNumber);
    g->add_option("--points", gm.points, "Seed points per level, coarse to fine")->delimiter(',');
    g->add_option("--base", gm.base, "Points at level 0");
    g->add_option("--growth", gm.growth, "Point multiplier per level")->capture_default_str();
    g->add_option("--levels", gm.levels, "Number of levels with --base");
    g->add_option("--seed", gm.seed)->capture_default_str();
    g->add_option("--out-dir", gm.out_dir)->capture_default_str();
    g->add_option("--prefix", gm.prefix)->capture_default_str();
    g->add_option("--format", gm.format)->check(CLI::IsMember({"rgl", "png"}))->capture_default_str();

    GenToyArgs gt;
    auto *t = app.add_subcommand("gen-toy", "Seeded synthetic visual encoder checkpoint");
    t->add_option("--layers", gt.cfg.layers)->capture_default_str();
    t->add_option("--dim", gt.cfg.dim)->capture_default_str();
    t->add_option("--heads", gt.cfg.heads)->capture_default_str();
    t->add_option("--patch", gt.cfg.patch)->capture_default_str();
    t->add_option("--mlp-ratio", gt.cfg.mlp_ratio)->capture_default_str();
    t->add_option("--grid", gt.grid, "Patches per tile side")->capture_default_str();
    t->add_option("--proj-dim", gt.proj_dim, "Add an output projection of this width");
    t->add_option("--seed", gt.seed)->capture_default_str();
    t->add_option("--model-id", gt.model_id)->capture_default_str();
    t->add_option("--out", gt.out)->required();

    GenSceneArgs sc;
    auto *n = app.add_subcommand("gen-scene", "Synthetic image with ground truth");
    n->add_option("--height", sc.height)->required()->check(CLI::PositiveNumber);
    n->add_option("--width", sc.width)->required()->check(CLI::PositiveNumber);
    n->add_option("--classes", sc.classes)->capture_default_str();
    n->add_option("--cells", sc.cells)->capture_default_str();
    n->add_option("--seed", sc.seed)->capture_default_str();
    n->add_option("--image", sc.image)->required();
    n->add_option("--truth", sc.truth)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &err) {
        return app.exit(err);
    }

    try {
        if (m->parsed()) return run_merge(merge);
        if (p->parsed()) return run_pvsm_report(pvsm);
        if (s->parsed()) return run_segment(seg);
        if (e->parsed()) return run_eval(ev);
        if (w->parsed()) return run_sweep(sweep);
        if (g->parsed()) return run_gen_masks(gm);
        if (t->parsed()) return run_gen_toy(gt);
        if (n->parsed()) return run_gen_scene(sc);
    } catch (const rseg::Error &err) {
        std::cerr << "error: " << err.what() << "\n";
        return kExitLibraryError;
    } catch (const std::exception &err) {
        std::cerr << "error: " << err.what() << "\n";
        return 1;
    }
    return 1;
}
