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

// Prompt-variant separation margins and weighted parameter averaging.
//
// For model o and class c with K unit-norm variant embeddings:
//   intra(c)  = mean of <t_m, t_n> over unordered pairs m < n
//   inter(c)  = mean of <t_{c,i}, t_{c',j}> over all c' != c, i, j
//   margin(c) = intra(c) - inter(c)
//   score_o   = mean over classes of margin(c)
// Weights are score_o / sum(scores) and the fused parameters are the
// weighted elementwise sum of the model parameters.

#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "rseg/checkpoint.hpp"
#include "rseg/error.hpp"
#include "rseg/text.hpp"

namespace rseg {

namespace detail {

inline double dot(const std::vector<float> &a, const std::vector<float> &b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += static_cast<double>(a[i]) * b[i];
    }
    return s;
}

} // namespace detail

inline double intra_class_similarity(const TextEmbeddingSet &set) {
    const std::size_t k = set.size();
    if (k < 2) {
        throw InsufficientDataError("intra-class similarity needs K >= 2 variants, class " +
                                    std::to_string(set.class_id) + " has " + std::to_string(k));
    }
    double sum = 0.0;
    for (std::size_t m = 0; m < k; ++m) {
        for (std::size_t n = m + 1; n < k; ++n) {
            sum += detail::dot(set.embeddings[m], set.embeddings[n]);
        }
    }
    return 2.0 * sum / (static_cast<double>(k) * static_cast<double>(k - 1));
}

/// `others` holds every class other than `set`'s.
inline double inter_class_similarity(const TextEmbeddingSet &set, std::span<const TextEmbeddingSet> others) {
    if (others.empty()) {
        throw InsufficientDataError("inter-class similarity needs at least 2 classes");
    }
    const std::size_t k = set.size();
    double sum = 0.0;
    for (const TextEmbeddingSet &o : others) {
        if (o.size() != k || o.dim() != set.dim()) {
            throw DimensionError("inter-class similarity: class " + std::to_string(o.class_id) +
                                 " has a different K or D than class " + std::to_string(set.class_id));
        }
        for (const auto &a : set.embeddings) {
            for (const auto &b : o.embeddings) {
                sum += detail::dot(a, b);
            }
        }
    }
    return sum / (static_cast<double>(k) * static_cast<double>(k) * static_cast<double>(others.size()));
}

struct ClassMargin {
    double intra = 0.0;
    double inter = 0.0;
    double margin = 0.0;
};

struct ModelScore {
    std::string model_id;
    std::vector<ClassMargin> classes;
    double pvsm = 0.0;
    double weight = 0.0;
};

struct PVSMReport {
    std::vector<ModelScore> models;

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["models"] = nlohmann::json::array();
        for (const auto &m : models) {
            nlohmann::json jm;
            jm["model_id"] = m.model_id;
            jm["pvsm"] = m.pvsm;
            jm["weight"] = m.weight;
            jm["classes"] = nlohmann::json::array();
            for (std::size_t c = 0; c < m.classes.size(); ++c) {
                jm["classes"].push_back({{"class", c},
                                         {"intra", m.classes[c].intra},
                                         {"inter", m.classes[c].inter},
                                         {"margin", m.classes[c].margin}});
            }
            j["models"].push_back(std::move(jm));
        }
        return j;
    }
};

/// Per-class margins and the mean margin for one model.
inline ModelScore score_model(const std::vector<TextEmbeddingSet> &sets, std::string model_id = {}) {
    ModelScore s;
    s.model_id = std::move(model_id);
    if (sets.size() < 2) {
        throw InsufficientDataError("separation margin needs at least 2 classes");
    }
    std::vector<TextEmbeddingSet> others;
    double total = 0.0;
    for (std::size_t c = 0; c < sets.size(); ++c) {
        others.clear();
        for (std::size_t o = 0; o < sets.size(); ++o) {
            if (o != c) others.push_back(sets[o]);
        }
        ClassMargin m;
        m.intra = intra_class_similarity(sets[c]);
        m.inter = inter_class_similarity(sets[c], others);
        m.margin = m.intra - m.inter;
        total += m.margin;
        s.classes.push_back(m);
    }
    s.pvsm = total / static_cast<double>(sets.size());
    return s;
}

inline double pvsm(const std::vector<TextEmbeddingSet> &sets) { return score_model(sets).pvsm; }

/// Normalizes positive scores to weights summing to 1.
inline std::vector<double> merge_weights(std::span<const double> scores) {
    if (scores.empty()) {
        throw WeightError("merge_weights: no scores");
    }
    double top = 0.0;
    for (std::size_t o = 0; o < scores.size(); ++o) {
        if (!(scores[o] > 0.0) || !std::isfinite(scores[o])) {
            throw NonPositiveMarginError("model " + std::to_string(o) + " has non-positive separation margin " +
                                         std::to_string(scores[o]));
        }
        top = std::max(top, scores[o]);
    }
    // Scaling by the largest score first makes equal scores exactly 1/O.
    std::vector<double> w(scores.size());
    double total = 0.0;
    for (std::size_t o = 0; o < scores.size(); ++o) {
        w[o] = scores[o] / top;
        total += w[o];
    }
    for (double &v : w) {
        v /= total;
    }
    return w;
}

/// Fills in weights for every model of a report; throws if any score is
/// non-positive.
inline void assign_weights(PVSMReport &report) {
    std::vector<double> scores;
    for (const auto &m : report.models) scores.push_back(m.pvsm);
    const auto w = merge_weights(scores);
    for (std::size_t o = 0; o < w.size(); ++o) report.models[o].weight = w[o];
}

inline constexpr double kWeightSumTolerance = 1e-6;

/// Elementwise weighted sum of architecturally identical checkpoints.
/// Each element is accumulated in double in model order and rounded once.
/// Zero weights contribute nothing.
inline Checkpoint merge_checkpoints(std::span<const Checkpoint> ckpts, std::span<const double> weights) {
    if (ckpts.empty()) {
        throw IncompatibleCheckpointError("merge: no checkpoints");
    }
    if (weights.size() != ckpts.size()) {
        throw WeightError("merge: " + std::to_string(weights.size()) + " weights for " +
                          std::to_string(ckpts.size()) + " checkpoints");
    }
    double wsum = 0.0;
    for (double w : weights) {
        if (!std::isfinite(w)) throw WeightError("merge: non-finite weight");
        wsum += w;
    }
    if (std::abs(wsum - 1.0) > kWeightSumTolerance) {
        throw WeightError("merge: weights sum to " + std::to_string(wsum) + ", expected 1");
    }
    const Checkpoint &ref = ckpts.front();
    for (std::size_t o = 1; o < ckpts.size(); ++o) {
        const Checkpoint &c = ckpts[o];
        for (const auto &[name, t] : ref.tensors) {
            auto it = c.tensors.find(name);
            if (it == c.tensors.end()) {
                throw IncompatibleCheckpointError("merge: checkpoint " + std::to_string(o) + " lacks tensor '" +
                                                  name + "'");
            }
            if (it->second.shape() != t.shape()) {
                throw IncompatibleCheckpointError("merge: tensor '" + name + "' has shape " +
                                                  shape_str(it->second.shape()) + " in checkpoint " +
                                                  std::to_string(o) + " but " + shape_str(t.shape()) +
                                                  " in checkpoint 0");
            }
        }
        for (const auto &[name, t] : c.tensors) {
            if (!ref.contains(name)) {
                throw IncompatibleCheckpointError("merge: checkpoint " + std::to_string(o) + " has extra tensor '" +
                                                  name + "'");
            }
        }
    }

    Checkpoint out;
    for (const auto &[name, t] : ref.tensors) {
        std::vector<double> acc(t.size(), 0.0);
        for (std::size_t o = 0; o < ckpts.size(); ++o) {
            if (weights[o] == 0.0) continue;
            const double w = weights[o];
            const auto src = ckpts[o].tensors.at(name).data();
            for (std::size_t i = 0; i < acc.size(); ++i) {
                acc[i] += w * static_cast<double>(src[i]);
            }
        }
        Tensor fused(t.shape());
        for (std::size_t i = 0; i < acc.size(); ++i) {
            fused[i] = static_cast<float>(acc[i]);
        }
        out.tensors.emplace(name, std::move(fused));
    }

    out.meta = ref.meta.is_object() ? ref.meta : nlohmann::json::object();
    nlohmann::json sources = nlohmann::json::array();
    for (std::size_t o = 0; o < ckpts.size(); ++o) {
        const auto &m = ckpts[o].meta;
        sources.push_back({{"model_id", m.is_object() ? m.value("model_id", std::string("model") + std::to_string(o))
                                                      : std::string("model") + std::to_string(o)},
                           {"weight", weights[o]}});
    }
    out.meta["merged_from"] = std::move(sources);
    out.meta["model_id"] = "merged";
    return out;
}

} // namespace rseg
