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

// Prompt variants and text embeddings.
//
// A variant is `prefix + " of " + synonym + " " + suffix`, each component
// drawn independently and uniformly from its list by a SplitMix64 stream
// seeded from (grammar seed, class id).

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rseg/checkpoint.hpp"
#include "rseg/error.hpp"
#include "rseg/numerics.hpp"
#include "rseg/random.hpp"
#include "rseg/tensor.hpp"

namespace rseg {

struct PromptGrammar {
    std::vector<std::string> base_prompts;
    std::vector<std::vector<std::string>> synonyms;
    std::vector<std::string> prefixes;
    std::vector<std::string> suffixes;
    std::size_t variants_per_class = 2;
    std::uint64_t seed = 0;

    std::size_t classes() const { return base_prompts.size(); }

    void validate() const {
        if (base_prompts.empty()) {
            throw GrammarError("grammar: no classes (base_prompts is empty)");
        }
        if (synonyms.size() != base_prompts.size()) {
            throw GrammarError("grammar: " + std::to_string(synonyms.size()) + " synonym lists for " +
                               std::to_string(base_prompts.size()) + " classes");
        }
        for (std::size_t c = 0; c < synonyms.size(); ++c) {
            if (synonyms[c].empty()) {
                throw GrammarError("grammar: class " + std::to_string(c) + " has no synonyms");
            }
        }
        if (prefixes.empty()) throw GrammarError("grammar: prefix list is empty");
        if (suffixes.empty()) throw GrammarError("grammar: suffix list is empty");
        if (variants_per_class < 1) throw GrammarError("grammar: K must be positive");
    }

    static PromptGrammar from_json(const nlohmann::json &j) {
        PromptGrammar g;
        try {
            g.base_prompts = j.at("base_prompts").get<std::vector<std::string>>();
            g.synonyms = j.at("synonyms").get<std::vector<std::vector<std::string>>>();
            g.prefixes = j.at("prefixes").get<std::vector<std::string>>();
            g.suffixes = j.at("suffixes").get<std::vector<std::string>>();
            g.variants_per_class = j.at("K").get<std::size_t>();
            g.seed = j.value("seed", std::uint64_t{0});
        } catch (const nlohmann::json::exception &e) {
            throw GrammarError(std::string("grammar JSON: ") + e.what());
        }
        g.validate();
        return g;
    }

    static PromptGrammar load(const std::filesystem::path &path) {
        const auto bytes = io::read_file(path);
        try {
            return from_json(nlohmann::json::parse(bytes.begin(), bytes.end()));
        } catch (const nlohmann::json::parse_error &e) {
            throw GrammarError(path.string() + ": " + e.what());
        }
    }
};

struct PromptVariantSet {
    std::size_t class_id = 0;
    std::vector<std::string> variants;
};

/// K unit-norm embeddings of one class's variants under one model.
struct TextEmbeddingSet {
    std::size_t class_id = 0;
    std::string model_id;
    std::vector<std::vector<float>> embeddings;

    std::size_t size() const { return embeddings.size(); }
    std::size_t dim() const { return embeddings.empty() ? 0 : embeddings.front().size(); }
};

inline std::string compose_variant(std::string_view prefix, std::string_view synonym, std::string_view suffix) {
    std::string v;
    v.reserve(prefix.size() + synonym.size() + suffix.size() + 5);
    v.append(prefix).append(" of ").append(synonym).append(" ").append(suffix);
    return v;
}

inline PromptVariantSet generate_variants(const PromptGrammar &grammar, std::size_t class_id) {
    grammar.validate();
    if (class_id >= grammar.classes()) {
        throw GrammarError("grammar: class " + std::to_string(class_id) + " out of range");
    }
    SplitMix64 rng(derive_seed(grammar.seed, class_id));
    const auto &syn = grammar.synonyms[class_id];
    PromptVariantSet out;
    out.class_id = class_id;
    out.variants.reserve(grammar.variants_per_class);
    for (std::size_t z = 0; z < grammar.variants_per_class; ++z) {
        const auto &pi = grammar.prefixes[rng.below(grammar.prefixes.size())];
        const auto &s = syn[rng.below(syn.size())];
        const auto &sigma = grammar.suffixes[rng.below(grammar.suffixes.size())];
        out.variants.push_back(compose_variant(pi, s, sigma));
    }
    return out;
}

/// Maps a string to a D-dimensional (not necessarily normalized) vector.
class TextEncoder {
public:
    virtual ~TextEncoder() = default;
    virtual std::size_t dim() const = 0;
    virtual std::vector<float> embed(std::string_view text) const = 0;
};

/// Seeded feature hashing of character 1..3-grams (with boundary markers)
/// into D signed buckets. Deterministic and thread-safe.
class ToyTextEncoder final : public TextEncoder {
public:
    ToyTextEncoder(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
        if (dim == 0) throw ConfigError("toy text encoder: dimension must be positive");
    }

    std::size_t dim() const override { return dim_; }

    std::vector<float> embed(std::string_view text) const override {
        std::string s = "^" + std::string(text) + "$";
        std::vector<float> v(dim_, 0.0f);
        for (std::size_t n = 1; n <= 3; ++n) {
            for (std::size_t i = 0; i + n <= s.size(); ++i) {
                const std::uint64_t h = hash(std::string_view(s).substr(i, n));
                const std::size_t bucket = static_cast<std::size_t>(h % dim_);
                v[bucket] += (h >> 63) ? -1.0f : 1.0f;
            }
        }
        return v;
    }

private:
    std::uint64_t hash(std::string_view gram) const {
        std::uint64_t h = 0xCBF29CE484222325ull ^ seed_;
        for (unsigned char c : gram) {
            h ^= c;
            h *= 0x100000001B3ull;
        }
        return SplitMix64(h).next();
    }

    std::size_t dim_;
    std::uint64_t seed_;
};

inline std::vector<float> l2_normalized(std::vector<float> v) {
    const float n = l2_norm(v);
    if (n == 0.0f) {
        throw NormalizationError("text embedding has zero norm");
    }
    for (float &x : v) {
        x /= n;
    }
    return v;
}

inline TextEmbeddingSet encode_prompts(const PromptVariantSet &variants, const TextEncoder &enc,
                                       const std::string &model_id = {}) {
    TextEmbeddingSet out;
    out.class_id = variants.class_id;
    out.model_id = model_id;
    out.embeddings.reserve(variants.variants.size());
    for (const auto &v : variants.variants) {
        auto e = enc.embed(v);
        if (e.size() != enc.dim()) {
            throw DimensionError("text encoder returned " + std::to_string(e.size()) + " dims, expected " +
                                 std::to_string(enc.dim()));
        }
        out.embeddings.push_back(l2_normalized(std::move(e)));
    }
    return out;
}

/// Variant embeddings for every class of a grammar under one encoder.
inline std::vector<TextEmbeddingSet> encode_grammar(const PromptGrammar &grammar, const TextEncoder &enc,
                                                    const std::string &model_id = {}) {
    std::vector<TextEmbeddingSet> sets;
    for (std::size_t c = 0; c < grammar.classes(); ++c) {
        sets.push_back(encode_prompts(generate_variants(grammar, c), enc, model_id));
    }
    return sets;
}

/// C×D matrix of unit-norm base-prompt embeddings used for segmentation.
inline Tensor class_embeddings(const PromptGrammar &grammar, const TextEncoder &enc) {
    grammar.validate();
    Tensor t({grammar.classes(), enc.dim()});
    for (std::size_t c = 0; c < grammar.classes(); ++c) {
        const auto e = l2_normalized(enc.embed(grammar.base_prompts[c]));
        std::copy(e.begin(), e.end(), t.row(c).begin());
    }
    return t;
}

// Precomputed embedding container: a .ckpt1 file whose tensors are named
// "text/<model>/<class>" with <class> the decimal class index, each K×D.

inline std::string text_tensor_name(const std::string &model, std::size_t class_id) {
    return "text/" + model + "/" + std::to_string(class_id);
}

/// Model ids present in an embedding container, in name order.
inline std::vector<std::string> embedding_models(const Checkpoint &container) {
    std::vector<std::string> models;
    for (const auto &[name, t] : container.tensors) {
        if (name.rfind("text/", 0) != 0) continue;
        const auto slash = name.rfind('/');
        if (slash <= 5) continue;
        std::string model = name.substr(5, slash - 5);
        if (models.empty() || models.back() != model) {
            models.push_back(std::move(model));
        }
    }
    return models;
}

/// Reads every class of `model` from an embedding container, renormalizing
/// rows. Classes must be numbered 0..C-1 without gaps.
inline std::vector<TextEmbeddingSet> load_embedding_sets(const Checkpoint &container, const std::string &model) {
    std::vector<TextEmbeddingSet> sets;
    for (std::size_t c = 0;; ++c) {
        auto it = container.tensors.find(text_tensor_name(model, c));
        if (it == container.tensors.end()) break;
        const Tensor &t = it->second;
        expect_rank(t, 2, "text embedding tensor");
        TextEmbeddingSet s;
        s.class_id = c;
        s.model_id = model;
        for (std::size_t r = 0; r < t.dim(0); ++r) {
            s.embeddings.push_back(l2_normalized(std::vector<float>(t.row(r).begin(), t.row(r).end())));
        }
        sets.push_back(std::move(s));
    }
    if (sets.empty()) {
        throw FormatError("embedding container has no tensors for model '" + model + "'");
    }
    return sets;
}

/// C×D class matrix from variant sets: each class's rows are averaged and
/// renormalized (with K = 1 this is the single stored embedding).
inline Tensor class_embeddings(const std::vector<TextEmbeddingSet> &sets) {
    if (sets.empty()) throw DimensionError("class_embeddings: no classes");
    const std::size_t d = sets.front().dim();
    Tensor t({sets.size(), d});
    for (std::size_t c = 0; c < sets.size(); ++c) {
        if (sets[c].dim() != d) throw DimensionError("class_embeddings: inconsistent dimensions");
        std::vector<float> mean(d, 0.0f);
        for (const auto &e : sets[c].embeddings) {
            for (std::size_t j = 0; j < d; ++j) mean[j] += e[j];
        }
        mean = l2_normalized(std::move(mean));
        std::copy(mean.begin(), mean.end(), t.row(c).begin());
    }
    return t;
}

inline void add_embedding_sets(Checkpoint &container, const std::vector<TextEmbeddingSet> &sets) {
    for (const auto &s : sets) {
        std::vector<float> flat;
        for (const auto &e : s.embeddings) flat.insert(flat.end(), e.begin(), e.end());
        container.tensors.insert_or_assign(text_tensor_name(s.model_id, s.class_id),
                                           Tensor({s.size(), s.dim()}, std::move(flat)));
    }
}

} // namespace rseg
