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

#include <gtest/gtest.h>

#include <set>

#include "rseg/text.hpp"

namespace rseg {
namespace {

PromptGrammar singleton_grammar(std::size_t k) {
    PromptGrammar g;
    g.base_prompts = {"building"};
    g.synonyms = {{"building"}};
    g.prefixes = {"an aerial image"};
    g.suffixes = {"in the city"};
    g.variants_per_class = k;
    return g;
}

PromptGrammar product_grammar() {
    PromptGrammar g;
    g.base_prompts = {"road", "tree"};
    g.synonyms = {{"road", "street"}, {"tree", "forest"}};
    g.prefixes = {"an aerial image", "a satellite photo"};
    g.suffixes = {"in the city", "from above"};
    g.variants_per_class = 8;
    g.seed = 42;
    return g;
}

/// Constant-output encoder for hand-checked normalization.
class FixedEncoder final : public TextEncoder {
public:
    explicit FixedEncoder(std::vector<float> v) : v_(std::move(v)) {}
    std::size_t dim() const override { return v_.size(); }
    std::vector<float> embed(std::string_view) const override { return v_; }

private:
    std::vector<float> v_;
};

TEST(GenerateVariantsTest, TemplateString) {
    const auto set = generate_variants(singleton_grammar(1), 0);
    ASSERT_EQ(set.variants.size(), 1u);
    EXPECT_EQ(set.variants[0], "an aerial image of building in the city");
}

TEST(GenerateVariantsTest, SingletonListsGiveIdenticalVariants) {
    const auto set = generate_variants(singleton_grammar(3), 0);
    ASSERT_EQ(set.variants.size(), 3u);
    EXPECT_EQ(set.variants[0], set.variants[1]);
    EXPECT_EQ(set.variants[1], set.variants[2]);
}

TEST(GenerateVariantsTest, MembersOfTheProductSet) {
    const PromptGrammar g = product_grammar();
    for (std::size_t c = 0; c < 2; ++c) {
        std::set<std::string> product;
        for (const auto &p : g.prefixes)
            for (const auto &s : g.synonyms[c])
                for (const auto &x : g.suffixes) product.insert(compose_variant(p, s, x));
        ASSERT_EQ(product.size(), 8u);
        const auto set = generate_variants(g, c);
        ASSERT_EQ(set.variants.size(), 8u);
        for (const auto &v : set.variants) EXPECT_TRUE(product.count(v)) << v;
    }
}

TEST(GenerateVariantsTest, ParsesBackIntoGrammarComponents) {
    PromptGrammar g = product_grammar();
    g.variants_per_class = 50;
    for (std::size_t c = 0; c < 2; ++c) {
        for (const auto &v : generate_variants(g, c).variants) {
            const auto of = v.find(" of ");
            ASSERT_NE(of, std::string::npos);
            const std::string prefix = v.substr(0, of);
            EXPECT_NE(std::find(g.prefixes.begin(), g.prefixes.end(), prefix), g.prefixes.end());
            const std::string rest = v.substr(of + 4);
            bool matched = false;
            for (const auto &s : g.synonyms[c])
                for (const auto &x : g.suffixes) matched |= rest == s + " " + x;
            EXPECT_TRUE(matched) << v;
        }
    }
}

TEST(GenerateVariantsTest, DeterministicPerSeedAndFrozen) {
    const PromptGrammar g = product_grammar();
    EXPECT_EQ(generate_variants(g, 0).variants, generate_variants(g, 0).variants);
    PromptGrammar other = g;
    other.seed = 43;
    other.variants_per_class = 32;
    PromptGrammar same = g;
    same.variants_per_class = 32;
    EXPECT_NE(generate_variants(same, 1).variants, generate_variants(other, 1).variants);
    // Frozen output; guards cross-platform stability of the stream.
    const std::vector<std::string> frozen{
        "a satellite photo of street in the city", "an aerial image of street from above",
        "a satellite photo of street from above",  "an aerial image of road from above",
        "a satellite photo of street from above",  "a satellite photo of road in the city",
        "an aerial image of street in the city",   "a satellite photo of street in the city"};
    EXPECT_EQ(generate_variants(g, 0).variants, frozen);
}

TEST(SplitMix64Test, MatchesReferenceStream) {
    SplitMix64 rng(0);
    EXPECT_EQ(rng.next(), 0xE220A8397B1DCDAFull);
    EXPECT_EQ(rng.next(), 7960286522194355700ull);
    SplitMix64 a(5), b(5);
    for (int i = 0; i < 100; ++i) {
        const auto x = a.below(7);
        EXPECT_LT(x, 7u);
        EXPECT_EQ(x, b.below(7));
        const float u = a.uniform();
        EXPECT_GE(u, 0.0f);
        EXPECT_LT(u, 1.0f);
        b.uniform();
    }
}

TEST(GenerateVariantsTest, EmptySynonymsIsGrammarError) {
    PromptGrammar g = product_grammar();
    g.synonyms[1].clear();
    EXPECT_THROW(generate_variants(g, 0), GrammarError);
    g = product_grammar();
    g.prefixes.clear();
    EXPECT_THROW(g.validate(), GrammarError);
    EXPECT_THROW(generate_variants(product_grammar(), 2), GrammarError);
}

TEST(GrammarJsonTest, ParsesAllKeys) {
    const auto j = nlohmann::json::parse(R"({
        "base_prompts": ["water", "land"],
        "synonyms": [["water", "lake"], ["land"]],
        "prefixes": ["a photo"],
        "suffixes": ["seen from orbit"],
        "K": 4,
        "seed": 7
    })");
    const PromptGrammar g = PromptGrammar::from_json(j);
    EXPECT_EQ(g.classes(), 2u);
    EXPECT_EQ(g.variants_per_class, 4u);
    EXPECT_EQ(g.seed, 7u);
    EXPECT_THROW(PromptGrammar::from_json(nlohmann::json::parse(R"({"base_prompts": []})")), GrammarError);
}

TEST(EncodePromptsTest, HandNormalization) {
    const FixedEncoder enc({3.0f, 4.0f});
    const auto set = encode_prompts(PromptVariantSet{0, {"x"}}, enc);
    EXPECT_FLOAT_EQ(set.embeddings[0][0], 0.6f);
    EXPECT_FLOAT_EQ(set.embeddings[0][1], 0.8f);
}

TEST(EncodePromptsTest, ZeroVectorIsNormalizationError) {
    const FixedEncoder enc({0.0f, 0.0f});
    EXPECT_THROW(encode_prompts(PromptVariantSet{0, {"x"}}, enc), NormalizationError);
}

TEST(EncodePromptsTest, ToyEncoderIsDeterministicAndUnitNorm) {
    const ToyTextEncoder enc(64, 3);
    const auto sets = encode_grammar(product_grammar(), enc, "toy");
    for (const auto &s : sets) {
        ASSERT_EQ(s.size(), 8u);
        for (const auto &e : s.embeddings) EXPECT_NEAR(l2_norm(e), 1.0f, 1e-5);
    }
    EXPECT_EQ(enc.embed("a satellite photo"), enc.embed("a satellite photo"));
    EXPECT_NE(enc.embed("a satellite photo"), enc.embed("a satellite phot"));
    EXPECT_NE(ToyTextEncoder(64, 4).embed("x"), enc.embed("x"));
}

TEST(EncodePromptsTest, UnitNormForRandomStrings) {
    SplitMix64 rng(5);
    for (std::size_t dim : {2u, 7u, 128u}) {
        const ToyTextEncoder enc(dim, dim);
        for (int i = 0; i < 50; ++i) {
            std::string s(1 + rng.below(30), ' ');
            for (char &ch : s) ch = static_cast<char>('a' + rng.below(26));
            const auto set = encode_prompts(PromptVariantSet{0, {s}}, enc);
            EXPECT_NEAR(l2_norm(set.embeddings[0]), 1.0f, 1e-5);
        }
    }
}

TEST(EmbeddingContainerTest, RoundTripThroughCheckpoint) {
    const ToyTextEncoder enc(16, 1);
    const auto sets = encode_grammar(product_grammar(), enc, "toyA");
    Checkpoint container;
    add_embedding_sets(container, sets);
    add_embedding_sets(container, encode_grammar(product_grammar(), ToyTextEncoder(16, 2), "toyB"));
    EXPECT_EQ(embedding_models(container), (std::vector<std::string>{"toyA", "toyB"}));
    EXPECT_TRUE(container.contains("text/toyA/1"));
    const auto back = load_embedding_sets(container, "toyA");
    ASSERT_EQ(back.size(), 2u);
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t k = 0; k < 8; ++k)
            for (std::size_t j = 0; j < 16; ++j) EXPECT_NEAR(back[c].embeddings[k][j], sets[c].embeddings[k][j], 1e-7);
    EXPECT_THROW(load_embedding_sets(container, "missing"), FormatError);

    const Tensor cls = class_embeddings(back);
    ASSERT_EQ(cls.shape(), (Shape{2, 16}));
    for (std::size_t c = 0; c < 2; ++c) EXPECT_NEAR(l2_norm(cls.row(c)), 1.0f, 1e-5);
}

TEST(ClassEmbeddingsTest, BasePromptsAreNormalizedRows) {
    const ToyTextEncoder enc(32, 9);
    const PromptGrammar g = product_grammar();
    const Tensor t = class_embeddings(g, enc);
    ASSERT_EQ(t.shape(), (Shape{2, 32}));
    const auto want = l2_normalized(enc.embed("tree"));
    for (std::size_t j = 0; j < 32; ++j) EXPECT_EQ(t.at(1, j), want[j]);
}

} // namespace
} // namespace rseg
