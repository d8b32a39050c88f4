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

// Pre-norm ViT image encoder with region-constrained attention in the last
// `masked_layers` blocks.
//
// Canonical parameter names (D = width, H = MLP hidden, E = output dim):
//
//   visual.patch_embed.weight  [3·P·P, D]   rows ordered (py, px, channel)
//   visual.patch_embed.bias    [D]
//   visual.cls                 [D]
//   visual.pos                 [N+1, D]
//   visual.ln_pre.{gamma,beta} [D]          optional
//   visual.blocks.<l>.ln1.{gamma,beta}      [D]
//   visual.blocks.<l>.attn.qkv.weight       [D, 3D]  columns q | k | v
//   visual.blocks.<l>.attn.qkv.bias         [3D]
//   visual.blocks.<l>.attn.out.weight       [D, D]
//   visual.blocks.<l>.attn.out.bias         [D]
//   visual.blocks.<l>.ln2.{gamma,beta}      [D]
//   visual.blocks.<l>.mlp.fc1.{weight,bias} [D, H], [H]
//   visual.blocks.<l>.mlp.fc2.{weight,bias} [H, D], [D]
//   visual.ln_post.{gamma,beta}             [D]
//   visual.proj                [D, E]       optional
//
// Tensors outside the "visual." namespace (e.g. a text tower) are carried
// along untouched.

#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rseg/attention_mask.hpp"
#include "rseg/checkpoint.hpp"
#include "rseg/error.hpp"
#include "rseg/numerics.hpp"
#include "rseg/random.hpp"
#include "rseg/regions.hpp"
#include "rseg/tensor.hpp"

namespace rseg {

enum class Activation { Gelu, QuickGelu };

struct EncoderConfig {
    std::size_t layers = 24;
    std::size_t masked_layers = 0;
    std::size_t dim = 1024;
    std::size_t patch = 14;
    std::size_t heads = 16;
    std::size_t mlp_ratio = 4;
    Activation activation = Activation::Gelu;
    float ln_eps = 1e-5f;

    std::size_t unmasked_layers() const { return layers - masked_layers; }
    std::size_t head_dim() const { return dim / heads; }
    std::size_t hidden() const { return dim * mlp_ratio; }

    void validate() const {
        if (layers == 0 || dim == 0 || patch == 0 || heads == 0 || mlp_ratio == 0) {
            throw ConfigError("encoder config: L, D, P, heads and mlp_ratio must be positive");
        }
        if (dim % heads != 0) {
            throw ConfigError("encoder config: D=" + std::to_string(dim) +
                              " is not divisible by heads=" + std::to_string(heads));
        }
        if (masked_layers > layers) {
            throw ConfigError("encoder config: masked layers " + std::to_string(masked_layers) +
                              " exceeds L=" + std::to_string(layers));
        }
    }

    /// Architecture from checkpoint metadata; `masked_layers` stays 0.
    static EncoderConfig from_meta(const nlohmann::json &meta) {
        EncoderConfig cfg;
        try {
            cfg.dim = meta.at("D").get<std::size_t>();
            cfg.layers = meta.at("L").get<std::size_t>();
            cfg.patch = meta.at("P").get<std::size_t>();
            cfg.heads = meta.at("heads").get<std::size_t>();
            cfg.mlp_ratio = meta.value("mlp_ratio", std::size_t{4});
            cfg.activation = meta.value("activation", std::string("gelu")) == "quick_gelu"
                                 ? Activation::QuickGelu
                                 : Activation::Gelu;
        } catch (const nlohmann::json::exception &e) {
            throw ConfigError(std::string("checkpoint metadata lacks encoder fields: ") + e.what());
        }
        cfg.validate();
        return cfg;
    }

    void write_meta(nlohmann::json &meta) const {
        meta["D"] = dim;
        meta["L"] = layers;
        meta["P"] = patch;
        meta["heads"] = heads;
        meta["mlp_ratio"] = mlp_ratio;
        meta["activation"] = activation == Activation::QuickGelu ? "quick_gelu" : "gelu";
    }
};

/// Encoder output: N+1 token features, row 0 is CLS.
struct FeatureSet {
    Tensor tokens;
    std::size_t grid_rows = 0;
    std::size_t grid_cols = 0;

    std::size_t patches() const { return grid_rows * grid_cols; }
};

/// Optional per-layer attention capture (post-softmax, averaged over heads).
struct EncodeTrace {
    std::vector<Tensor> attention;
};

namespace param {

inline std::string block(std::size_t layer, const char *leaf) {
    return "visual.blocks." + std::to_string(layer) + "." + leaf;
}

inline constexpr const char *kPatchWeight = "visual.patch_embed.weight";
inline constexpr const char *kPatchBias = "visual.patch_embed.bias";
inline constexpr const char *kCls = "visual.cls";
inline constexpr const char *kPos = "visual.pos";
inline constexpr const char *kLnPreGamma = "visual.ln_pre.gamma";
inline constexpr const char *kLnPreBeta = "visual.ln_pre.beta";
inline constexpr const char *kLnPostGamma = "visual.ln_post.gamma";
inline constexpr const char *kLnPostBeta = "visual.ln_post.beta";
inline constexpr const char *kProj = "visual.proj";

inline constexpr std::array<const char *, 12> kBlockLeaves = {
    "ln1.gamma",        "ln1.beta",        "attn.qkv.weight", "attn.qkv.bias",
    "attn.out.weight",  "attn.out.bias",   "ln2.gamma",       "ln2.beta",
    "mlp.fc1.weight",   "mlp.fc1.bias",    "mlp.fc2.weight",  "mlp.fc2.bias",
};

} // namespace param

/// Expected shapes of every visual parameter for `cfg` with `tokens` = N+1.
/// Optional entries are flagged.
struct ParamSpec {
    std::string name;
    Shape shape;
    bool optional = false;
};

inline std::vector<ParamSpec> visual_param_specs(const EncoderConfig &cfg, std::size_t tokens,
                                                 std::optional<std::size_t> out_dim = std::nullopt) {
    const std::size_t d = cfg.dim, h = cfg.hidden();
    std::vector<ParamSpec> specs = {
        {param::kPatchWeight, {3 * cfg.patch * cfg.patch, d}},
        {param::kPatchBias, {d}},
        {param::kCls, {d}},
        {param::kPos, {tokens, d}},
        {param::kLnPreGamma, {d}, true},
        {param::kLnPreBeta, {d}, true},
        {param::kLnPostGamma, {d}},
        {param::kLnPostBeta, {d}},
    };
    if (out_dim) {
        specs.push_back({param::kProj, {d, *out_dim}, true});
    }
    const Shape leaf_shapes[] = {{d}, {d}, {d, 3 * d}, {3 * d}, {d, d}, {d},
                                 {d}, {d}, {d, h},     {h},     {h, d}, {d}};
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        for (std::size_t i = 0; i < param::kBlockLeaves.size(); ++i) {
            specs.push_back({param::block(l, param::kBlockLeaves[i]), leaf_shapes[i]});
        }
    }
    return specs;
}

/// Checks that every required visual tensor exists with the expected shape
/// and that no unknown "visual." tensor is present.
inline void validate_checkpoint(const Checkpoint &ckpt, const EncoderConfig &cfg) {
    cfg.validate();
    const std::size_t tokens = ckpt.get(param::kPos).dim(0);
    std::optional<std::size_t> out_dim;
    if (ckpt.contains(param::kProj)) {
        expect_rank(ckpt.get(param::kProj), 2, param::kProj);
        out_dim = ckpt.get(param::kProj).dim(1);
    }
    std::size_t seen = 0;
    for (const ParamSpec &spec : visual_param_specs(cfg, tokens, out_dim)) {
        auto it = ckpt.tensors.find(spec.name);
        if (it == ckpt.tensors.end()) {
            if (spec.optional) continue;
            throw ConfigError("checkpoint is missing tensor '" + spec.name + "'");
        }
        ++seen;
        if (it->second.shape() != spec.shape) {
            throw ConfigError("tensor '" + spec.name + "' has shape " + shape_str(it->second.shape()) +
                              ", expected " + shape_str(spec.shape));
        }
    }
    std::size_t visual = 0;
    for (const auto &[name, t] : ckpt.tensors) {
        visual += name.rfind("visual.", 0) == 0 ? 1 : 0;
    }
    if (visual != seen) {
        throw ConfigError("checkpoint has " + std::to_string(visual - seen) +
                          " unexpected visual tensors for L=" + std::to_string(cfg.layers));
    }
    if (ckpt.contains(param::kLnPreGamma) != ckpt.contains(param::kLnPreBeta)) {
        throw ConfigError("checkpoint has only one of ln_pre gamma/beta");
    }
}

/// Per-channel normalization constants stored in checkpoint metadata.
struct Preprocess {
    std::array<float, 3> mean{0.48145466f, 0.4578275f, 0.40821073f};
    std::array<float, 3> std{0.26862954f, 0.26130258f, 0.27577711f};

    static Preprocess from_meta(const nlohmann::json &meta) {
        Preprocess p;
        if (meta.contains("image_mean")) p.mean = meta["image_mean"].get<std::array<float, 3>>();
        if (meta.contains("image_std")) p.std = meta["image_std"].get<std::array<float, 3>>();
        return p;
    }

    Tensor apply(const Tensor &rgb) const {
        expect_rank(rgb, 3, "image");
        Tensor out(rgb.shape());
        for (std::size_t i = 0; i < rgb.size(); ++i) {
            out[i] = (rgb[i] - mean[i % 3]) / std[i % 3];
        }
        return out;
    }
};

/// Flattens P×P×3 patches, projects them, prepends CLS and adds positional
/// embeddings: Z = [CLS, z_1, ..., z_N] + pos.
inline Tensor patch_embed(const Tensor &image, const Checkpoint &ckpt, const EncoderConfig &cfg) {
    expect_rank(image, 3, "patch_embed image");
    const std::size_t h = image.dim(0), w = image.dim(1), p = cfg.patch, d = cfg.dim;
    if (image.dim(2) != 3) {
        throw DimensionError("patch_embed: image must have 3 channels");
    }
    if (h % p != 0 || w % p != 0) {
        throw DimensionError("patch_embed: image " + std::to_string(h) + "x" + std::to_string(w) +
                             " is not divisible by patch size " + std::to_string(p));
    }
    const std::size_t rows = h / p, cols = w / p, n = rows * cols;
    const Tensor &pos = ckpt.get(param::kPos);
    if (pos.dim(0) != n + 1) {
        throw DimensionError("patch_embed: image has " + std::to_string(n) +
                             " patches but positional embedding covers " + std::to_string(pos.dim(0) - 1));
    }
    Tensor flat({n, 3 * p * p});
    for (std::size_t pr = 0; pr < rows; ++pr) {
        for (std::size_t pc = 0; pc < cols; ++pc) {
            auto dst = flat.row(pr * cols + pc);
            std::size_t k = 0;
            for (std::size_t y = 0; y < p; ++y) {
                const float *src = image.data().data() + ((pr * p + y) * w + pc * p) * 3;
                for (std::size_t i = 0; i < 3 * p; ++i) {
                    dst[k++] = src[i];
                }
            }
        }
    }
    const Tensor proj = linear(flat, ckpt.get(param::kPatchWeight), ckpt.get(param::kPatchBias));
    const Tensor &cls = ckpt.get(param::kCls);
    Tensor z({n + 1, d});
    for (std::size_t j = 0; j < d; ++j) {
        z.at(0, j) = cls[j] + pos.at(0, j);
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            z.at(i + 1, j) = proj.at(i, j) + pos.at(i + 1, j);
        }
    }
    return z;
}

/// References to one transformer block's parameters inside a checkpoint.
struct LayerParams {
    const Tensor *ln1_gamma, *ln1_beta;
    const Tensor *qkv_weight, *qkv_bias;
    const Tensor *out_weight, *out_bias;
    const Tensor *ln2_gamma, *ln2_beta;
    const Tensor *fc1_weight, *fc1_bias;
    const Tensor *fc2_weight, *fc2_bias;

    static LayerParams from(const Checkpoint &ckpt, std::size_t layer) {
        auto get = [&](const char *leaf) { return &ckpt.get(param::block(layer, leaf)); };
        return {get("ln1.gamma"),       get("ln1.beta"),      get("attn.qkv.weight"),
                get("attn.qkv.bias"),   get("attn.out.weight"), get("attn.out.bias"),
                get("ln2.gamma"),       get("ln2.beta"),      get("mlp.fc1.weight"),
                get("mlp.fc1.bias"),    get("mlp.fc2.weight"), get("mlp.fc2.bias")};
    }
};

/// Multi-head self-attention up to (not including) the output projection.
/// Returns the concatenated per-head outputs, T×D. Disallowed (query, key)
/// pairs receive exactly zero weight. When `attn_avg` is given it receives
/// the post-softmax weights averaged over heads.
inline Tensor multi_head_attention(const Tensor &x, const Tensor &qkv_weight, const Tensor &qkv_bias,
                                   std::size_t heads, const AttentionMask *mask,
                                   Tensor *attn_avg = nullptr) {
    const std::size_t t = x.dim(0), d = x.dim(1), dh = d / heads;
    if (mask && mask->size() != t) {
        throw DimensionError("attention: mask size " + std::to_string(mask->size()) + " != tokens " +
                             std::to_string(t));
    }
    const Tensor qkv = linear(x, qkv_weight, qkv_bias);
    const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
    Tensor out({t, d});
    if (attn_avg) {
        *attn_avg = Tensor({t, t});
    }
    std::vector<float> logits(t), probs(t);
    for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t qo = h * dh, ko = d + h * dh, vo = 2 * d + h * dh;
        for (std::size_t a = 0; a < t; ++a) {
            const std::uint8_t *allowed = mask ? mask->row(a) : nullptr;
            const float *q = qkv.row(a).data() + qo;
            for (std::size_t b = 0; b < t; ++b) {
                if (allowed && !allowed[b]) {
                    logits[b] = 0.0f;
                    continue;
                }
                const float *k = qkv.row(b).data() + ko;
                float dot = 0.0f;
                for (std::size_t j = 0; j < dh; ++j) {
                    dot += q[j] * k[j];
                }
                logits[b] = dot * scale;
            }
            try {
                masked_softmax_row(logits, allowed, probs);
            } catch (const DegenerateRowError &) {
                throw Error("attention: token " + std::to_string(a) + " has no admissible key");
            }
            float *o = out.row(a).data() + h * dh;
            for (std::size_t b = 0; b < t; ++b) {
                if (allowed && !allowed[b]) continue;
                const float *v = qkv.row(b).data() + vo;
                for (std::size_t j = 0; j < dh; ++j) {
                    o[j] += probs[b] * v[j];
                }
            }
            if (attn_avg) {
                auto row = attn_avg->row(a);
                for (std::size_t b = 0; b < t; ++b) {
                    row[b] += probs[b];
                }
            }
        }
    }
    if (attn_avg && heads > 1) {
        const float inv = 1.0f / static_cast<float>(heads);
        for (float &v : attn_avg->data()) {
            v *= inv;
        }
    }
    return out;
}

inline Tensor apply_activation(Tensor x, Activation act) {
    for (float &v : x.data()) {
        v = act == Activation::QuickGelu ? quick_gelu(v) : gelu(v);
    }
    return x;
}

/// One pre-norm block: x + Attn(LN1(x)), then x + MLP(LN2(x)).
inline Tensor masked_attention_layer(const Tensor &tokens, const LayerParams &p, const EncoderConfig &cfg,
                                     const AttentionMask *mask, Tensor *attn_avg = nullptr) {
    Tensor h = layer_norm(tokens, p.ln1_gamma->data(), p.ln1_beta->data(), cfg.ln_eps);
    const Tensor heads_out = multi_head_attention(h, *p.qkv_weight, *p.qkv_bias, cfg.heads, mask, attn_avg);
    const Tensor attn = linear(heads_out, *p.out_weight, *p.out_bias);
    Tensor x = tokens;
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] += attn[i];
    }
    h = layer_norm(x, p.ln2_gamma->data(), p.ln2_beta->data(), cfg.ln_eps);
    const Tensor hidden = apply_activation(linear(h, *p.fc1_weight, *p.fc1_bias), cfg.activation);
    const Tensor mlp = linear(hidden, *p.fc2_weight, *p.fc2_bias);
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] += mlp[i];
    }
    return x;
}

/// Runs the transformer stack on already-embedded tokens. Blocks
/// 0..L_u-1 are unmasked; block L_u + r uses hierarchy mask r.
inline Tensor encode_tokens(Tensor z, const Checkpoint &ckpt, const EncoderConfig &cfg,
                            const MaskHierarchy *hierarchy, EncodeTrace *trace = nullptr) {
    cfg.validate();
    if (hierarchy) {
        if (hierarchy->size() != cfg.masked_layers) {
            throw ConfigError("encode: hierarchy has " + std::to_string(hierarchy->size()) +
                              " masks but " + std::to_string(cfg.masked_layers) + " masked layers are configured");
        }
        for (const AttentionMask &m : hierarchy->masks) {
            if (m.size() != z.dim(0)) {
                throw DimensionError("encode: mask size " + std::to_string(m.size()) + " != tokens " +
                                     std::to_string(z.dim(0)));
            }
        }
    } else if (cfg.masked_layers != 0) {
        throw ConfigError("encode: " + std::to_string(cfg.masked_layers) +
                          " masked layers configured but no mask hierarchy given");
    }
    if (trace) {
        trace->attention.assign(cfg.layers, Tensor());
    }
    if (ckpt.contains(param::kLnPreGamma)) {
        z = layer_norm(z, ckpt.get(param::kLnPreGamma).data(), ckpt.get(param::kLnPreBeta).data(), cfg.ln_eps);
    }
    const std::size_t first_masked = cfg.unmasked_layers();
    for (std::size_t l = 0; l < cfg.layers; ++l) {
        const AttentionMask *mask = (hierarchy && l >= first_masked) ? &hierarchy->masks[l - first_masked] : nullptr;
        z = masked_attention_layer(z, LayerParams::from(ckpt, l), cfg, mask,
                                   trace ? &trace->attention[l] : nullptr);
    }
    z = layer_norm(z, ckpt.get(param::kLnPostGamma).data(), ckpt.get(param::kLnPostBeta).data(), cfg.ln_eps);
    if (ckpt.contains(param::kProj)) {
        z = matmul(z, ckpt.get(param::kProj));
    }
    return z;
}

/// Dense features for a preprocessed H×W×3 image. No CLS pooling; every
/// token feature is returned.
inline FeatureSet encode(const Tensor &image, const Checkpoint &ckpt, const EncoderConfig &cfg,
                         const MaskHierarchy *hierarchy, EncodeTrace *trace = nullptr) {
    FeatureSet fs;
    fs.grid_rows = image.dim(0) / cfg.patch;
    fs.grid_cols = image.dim(1) / cfg.patch;
    fs.tokens = encode_tokens(patch_embed(image, ckpt, cfg), ckpt, cfg, hierarchy, trace);
    return fs;
}

/// Deterministic synthetic checkpoint for a grid of `grid_rows`×`grid_cols`
/// patches. Weights are uniform in ±1/sqrt(fan_in); layer-norm scales are
/// near 1. The seed is recorded in the metadata.
inline Checkpoint make_toy_checkpoint(const EncoderConfig &cfg, std::size_t grid_rows, std::size_t grid_cols,
                                      std::uint64_t seed, const std::string &model_id = "toy",
                                      std::optional<std::size_t> out_dim = std::nullopt) {
    cfg.validate();
    Checkpoint ckpt;
    SplitMix64 rng(seed);
    for (const ParamSpec &spec : visual_param_specs(cfg, grid_rows * grid_cols + 1, out_dim)) {
        if (spec.optional && spec.name != param::kProj) continue;
        Tensor t(spec.shape);
        const bool is_gamma = spec.name.ends_with(".gamma");
        const bool is_beta = spec.name.ends_with(".beta") || spec.name.ends_with(".bias");
        const float fan_in = spec.shape.size() == 2 ? static_cast<float>(spec.shape[0]) : 1.0f;
        const float bound = 1.0f / std::sqrt(fan_in);
        for (float &v : t.data()) {
            if (is_gamma) {
                v = 1.0f + rng.uniform(-0.1f, 0.1f);
            } else if (is_beta) {
                v = rng.uniform(-0.1f, 0.1f);
            } else {
                v = rng.uniform(-bound, bound);
            }
        }
        ckpt.tensors.emplace(spec.name, std::move(t));
    }
    ckpt.meta = nlohmann::json::object();
    ckpt.meta["model_id"] = model_id;
    cfg.write_meta(ckpt.meta);
    ckpt.meta["seed"] = seed;
    ckpt.meta["synthetic"] = true;
    Preprocess pre;
    ckpt.meta["image_mean"] = pre.mean;
    ckpt.meta["image_std"] = pre.std;
    return ckpt;
}

} // namespace rseg
