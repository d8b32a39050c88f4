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

#include <cmath>

#include "oracles.hpp"
#include "rseg/merge.hpp"

namespace rseg {
namespace {

using Vec = std::vector<float>;

TextEmbeddingSet set_of(std::size_t c, std::vector<Vec> rows) {
    return TextEmbeddingSet{c, "m", std::move(rows)};
}

Vec unit(std::size_t d, std::size_t i) {
    Vec v(d, 0.0f);
    v[i] = 1.0f;
    return v;
}

TEST(IntraClassTest, IdenticalEmbeddings) {
    EXPECT_DOUBLE_EQ(intra_class_similarity(set_of(0, {unit(3, 1), unit(3, 1), unit(3, 1)})), 1.0);
}

TEST(IntraClassTest, OrthogonalPair) {
    EXPECT_DOUBLE_EQ(intra_class_similarity(set_of(0, {unit(2, 0), unit(2, 1)})), 0.0);
}

TEST(IntraClassTest, ThreeVectorsByHand) {
    const float r = static_cast<float>(1.0 / std::sqrt(2.0));
    const double got = intra_class_similarity(set_of(0, {unit(2, 0), unit(2, 1), {r, r}}));
    EXPECT_NEAR(got, 2.0 / std::sqrt(2.0) / 3.0, 1e-7);
    EXPECT_NEAR(got, 0.4714, 1e-4);
}

TEST(IntraClassTest, SingleVariantIsInsufficient) {
    EXPECT_THROW(intra_class_similarity(set_of(0, {unit(2, 0)})), InsufficientDataError);
}

TEST(InterClassTest, IdenticalAndOrthogonal) {
    const auto a = set_of(0, {unit(2, 0), unit(2, 0)});
    const std::vector<TextEmbeddingSet> same{set_of(1, {unit(2, 0), unit(2, 0)})};
    const std::vector<TextEmbeddingSet> orth{set_of(1, {unit(2, 1), unit(2, 1)})};
    EXPECT_DOUBLE_EQ(inter_class_similarity(a, same), 1.0);
    EXPECT_DOUBLE_EQ(inter_class_similarity(a, orth), 0.0);
}

TEST(InterClassTest, ThreeClassesByHand) {
    const std::vector<TextEmbeddingSet> others{set_of(1, {unit(2, 0)}), set_of(2, {unit(2, 1)})};
    EXPECT_DOUBLE_EQ(inter_class_similarity(set_of(0, {unit(2, 0)}), others), 0.5);
}

TEST(InterClassTest, NoOtherClassesIsInsufficient) {
    EXPECT_THROW(inter_class_similarity(set_of(0, {unit(2, 0)}), {}), InsufficientDataError);
}

TEST(PvsmTest, OrthonormalClasses) {
    const std::vector<TextEmbeddingSet> sets{set_of(0, {unit(2, 0), unit(2, 0)}), set_of(1, {unit(2, 1), unit(2, 1)})};
    const ModelScore s = score_model(sets);
    EXPECT_DOUBLE_EQ(s.classes[0].intra, 1.0);
    EXPECT_DOUBLE_EQ(s.classes[0].inter, 0.0);
    EXPECT_DOUBLE_EQ(s.pvsm, 1.0);
}

TEST(PvsmTest, SharedEmbeddingGivesZero) {
    const std::vector<TextEmbeddingSet> sets{set_of(0, {unit(3, 2), unit(3, 2)}), set_of(1, {unit(3, 2), unit(3, 2)}),
                                             set_of(2, {unit(3, 2), unit(3, 2)})};
    EXPECT_DOUBLE_EQ(pvsm(sets), 0.0);
}

TEST(PvsmTest, CrossAssignedVectorsGiveMinusOne) {
    // antipodal variants within each class, shared across classes
    const std::vector<TextEmbeddingSet> sets{set_of(0, {unit(2, 0), {-1.0f, 0.0f}}),
                                             set_of(1, {unit(2, 0), {-1.0f, 0.0f}})};
    // intra = -1, inter = (1 - 1 - 1 + 1) / 4 = 0
    EXPECT_DOUBLE_EQ(pvsm(sets), -1.0);
}

TEST(PvsmTest, MarginIsStoredAsDifference) {
    const ToyTextEncoder enc(32, 1);
    PromptGrammar g;
    g.base_prompts = {"a", "b", "c"};
    g.synonyms = {{"water", "lake", "sea"}, {"field", "meadow"}, {"house", "roof"}};
    g.prefixes = {"a photo", "an aerial image"};
    g.suffixes = {"today", "in the city"};
    g.variants_per_class = 4;
    const ModelScore s = score_model(encode_grammar(g, enc), "toy");
    double total = 0.0;
    for (const auto &m : s.classes) {
        EXPECT_EQ(m.margin, m.intra - m.inter);
        total += m.margin;
    }
    EXPECT_NEAR(s.pvsm, total / 3.0, 1e-15);
}

std::vector<TextEmbeddingSet> random_sets(SplitMix64 &rng, std::size_t c, std::size_t k, std::size_t d) {
    std::vector<TextEmbeddingSet> sets;
    for (std::size_t i = 0; i < c; ++i) {
        TextEmbeddingSet s{i, "m", {}};
        for (std::size_t z = 0; z < k; ++z) {
            Vec v(d);
            for (float &x : v) x = rng.uniform(-1, 1);
            s.embeddings.push_back(l2_normalized(v));
        }
        sets.push_back(std::move(s));
    }
    return sets;
}

TEST(PvsmTest, InvariantUnderVariantAndClassPermutation) {
    SplitMix64 rng(201);
    for (int trial = 0; trial < 20; ++trial) {
        auto sets = random_sets(rng, 2 + rng.below(4), 2 + rng.below(4), 8);
        const double base = pvsm(sets);
        for (auto &s : sets) std::reverse(s.embeddings.begin(), s.embeddings.end());
        std::rotate(sets.begin(), sets.begin() + 1, sets.end());
        EXPECT_NEAR(pvsm(sets), base, 1e-12);
    }
}

TEST(PvsmTest, InvariantUnderOrthogonalRotation) {
    SplitMix64 rng(202);
    const std::size_t d = 6;
    for (int trial = 0; trial < 10; ++trial) {
        // Random orthogonal matrix from Gram-Schmidt in double.
        std::vector<std::vector<double>> q(d, std::vector<double>(d));
        for (std::size_t i = 0; i < d; ++i) {
            for (double &x : q[i]) x = rng.uniform(-1, 1);
            for (std::size_t j = 0; j < i; ++j) {
                double dp = 0;
                for (std::size_t t = 0; t < d; ++t) dp += q[i][t] * q[j][t];
                for (std::size_t t = 0; t < d; ++t) q[i][t] -= dp * q[j][t];
            }
            double n = 0;
            for (double x : q[i]) n += x * x;
            for (double &x : q[i]) x /= std::sqrt(n);
        }
        auto sets = random_sets(rng, 3, 4, d);
        const double base = pvsm(sets);
        for (auto &s : sets)
            for (auto &e : s.embeddings) {
                Vec r(d, 0.0f);
                for (std::size_t i = 0; i < d; ++i) {
                    double acc = 0;
                    for (std::size_t t = 0; t < d; ++t) acc += q[i][t] * e[t];
                    r[i] = static_cast<float>(acc);
                }
                e = r;
            }
        EXPECT_NEAR(pvsm(sets), base, 1e-5);
    }
}

TEST(MergeWeightsTest, Examples) {
    const std::vector<double> equal{1.0, 1.0};
    EXPECT_EQ(merge_weights(equal), (std::vector<double>{0.5, 0.5}));
    const std::vector<double> normalized{0.2, 0.3, 0.5};
    const auto w = merge_weights(normalized);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(w[i], normalized[i], 1e-15);
    const std::vector<double> example{0.37, 0.63};
    const auto pw = merge_weights(example);
    EXPECT_NEAR(pw[0], 0.37, 1e-15);
    EXPECT_NEAR(pw[1], 0.63, 1e-15);
}

TEST(MergeWeightsTest, NonPositiveScoreIsAnError) {
    const std::vector<double> zero{0.5, 0.0};
    const std::vector<double> negative{0.5, -0.1};
    EXPECT_THROW(merge_weights(zero), NonPositiveMarginError);
    EXPECT_THROW(merge_weights(negative), NonPositiveMarginError);
}

TEST(MergeWeightsTest, IdenticalModelsGetExactlyOneOverO) {
    SplitMix64 rng(203);
    const auto sets = random_sets(rng, 2, 3, 4);
    std::vector<TextEmbeddingSet> separated = sets;
    // ensure a positive margin
    separated[0].embeddings = {unit(4, 0), unit(4, 0), unit(4, 0)};
    separated[1].embeddings = {unit(4, 1), unit(4, 1), unit(4, 1)};
    for (std::size_t o = 1; o <= 7; ++o) {
        PVSMReport report;
        for (std::size_t i = 0; i < o; ++i) report.models.push_back(score_model(separated, "m" + std::to_string(i)));
        assign_weights(report);
        double sum = 0.0;
        for (const auto &m : report.models) {
            EXPECT_EQ(m.weight, 1.0 / static_cast<double>(o));
            sum += m.weight;
        }
        EXPECT_NEAR(sum, 1.0, 1e-12);
    }
}

TEST(MergeWeightsTest, RandomScoresSumToOne) {
    SplitMix64 rng(204);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> s(1 + rng.below(6));
        for (double &x : s) x = 1e-4 + rng.uniform(0.0f, 2.0f);
        const auto w = merge_weights(s);
        double sum = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) {
            sum += w[i];
            EXPECT_GT(w[i], 0.0);
        }
        EXPECT_NEAR(sum, 1.0, 1e-6);
    }
}

TEST(ReportJsonTest, RecordsEveryField) {
    const std::vector<TextEmbeddingSet> sets{set_of(0, {unit(2, 0), unit(2, 0)}), set_of(1, {unit(2, 1), unit(2, 1)})};
    PVSMReport report;
    report.models.push_back(score_model(sets, "a"));
    report.models.push_back(score_model(sets, "b"));
    assign_weights(report);
    const auto j = report.to_json();
    ASSERT_EQ(j["models"].size(), 2u);
    EXPECT_EQ(j["models"][1]["model_id"], "b");
    EXPECT_EQ(j["models"][0]["weight"], 0.5);
    EXPECT_EQ(j["models"][0]["classes"][1]["margin"], 1.0);
}

Checkpoint random_ckpt(SplitMix64 &rng, const std::string &id) {
    Checkpoint c;
    c.tensors.emplace("a", oracle::random_tensor({3, 4}, rng));
    c.tensors.emplace("b", oracle::random_tensor({5}, rng));
    c.meta = {{"model_id", id}};
    return c;
}

TEST(MergeCheckpointsTest, DegenerateWeightsReproduceFirstCheckpoint) {
    SplitMix64 rng(301);
    const std::vector<Checkpoint> c{random_ckpt(rng, "x"), random_ckpt(rng, "y")};
    const std::vector<double> w{1.0, 0.0};
    EXPECT_EQ(merge_checkpoints(c, w).tensors, c[0].tensors);
}

TEST(MergeCheckpointsTest, Linearity) {
    SplitMix64 rng(302);
    Checkpoint a = random_ckpt(rng, "x");
    Checkpoint b = a;
    for (auto &[name, t] : b.tensors)
        for (float &v : t.data()) v *= 3.0f;
    const std::vector<Checkpoint> c{a, b};
    const std::vector<double> w{0.5, 0.5};
    const Checkpoint m = merge_checkpoints(c, w);
    for (const auto &[name, t] : a.tensors)
        for (std::size_t i = 0; i < t.size(); ++i) EXPECT_EQ(m.get(name)[i], 2.0f * t[i]);
}

TEST(MergeCheckpointsTest, MatchesScalarLoopOracleExactly) {
    SplitMix64 rng(303);
    const std::vector<Checkpoint> c{random_ckpt(rng, "x"), random_ckpt(rng, "y"), random_ckpt(rng, "z")};
    const std::vector<double> w{0.2, 0.3, 0.5};
    const Checkpoint m = merge_checkpoints(c, w);
    for (const auto &[name, t] : c[0].tensors) {
        for (std::size_t i = 0; i < t.size(); ++i) {
            double acc = 0.0;
            for (std::size_t o = 0; o < 3; ++o) acc += w[o] * static_cast<double>(c[o].get(name)[i]);
            EXPECT_EQ(m.get(name)[i], static_cast<float>(acc));
        }
    }
    ASSERT_EQ(m.meta["merged_from"].size(), 3u);
    EXPECT_EQ(m.meta["merged_from"][2]["model_id"], "z");
    EXPECT_EQ(m.meta["merged_from"][1]["weight"], 0.3);
}

TEST(MergeCheckpointsTest, NestedMergeEqualsFlatMerge) {
    SplitMix64 rng(304);
    for (int trial = 0; trial < 20; ++trial) {
        const Checkpoint a = random_ckpt(rng, "a"), b = random_ckpt(rng, "b"), c = random_ckpt(rng, "c");
        const double w = rng.uniform(0.0f, 1.0f), v = rng.uniform(0.0f, 1.0f);
        const std::vector<Checkpoint> ab{a, b};
        const std::vector<double> w_ab{w, 1.0 - w};
        const std::vector<Checkpoint> abc{merge_checkpoints(ab, w_ab), c};
        const std::vector<double> w_abc{v, 1.0 - v};
        const Checkpoint nested = merge_checkpoints(abc, w_abc);
        const std::vector<Checkpoint> flat_in{a, b, c};
        const std::vector<double> flat_w{v * w, v * (1.0 - w), 1.0 - v};
        const Checkpoint flat = merge_checkpoints(flat_in, flat_w);
        for (const auto &[name, t] : flat.tensors)
            for (std::size_t i = 0; i < t.size(); ++i) EXPECT_NEAR(nested.get(name)[i], t[i], 1e-6);
    }
}

TEST(MergeCheckpointsTest, ConvexityBound) {
    SplitMix64 rng(305);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t o = 2 + rng.below(3);
        std::vector<Checkpoint> c;
        std::vector<double> scores;
        for (std::size_t i = 0; i < o; ++i) {
            c.push_back(random_ckpt(rng, "m"));
            scores.push_back(0.01 + rng.uniform(0.0f, 1.0f));
        }
        const auto w = merge_weights(scores);
        const Checkpoint m = merge_checkpoints(c, w);
        for (const auto &[name, t] : m.tensors)
            for (std::size_t i = 0; i < t.size(); ++i) {
                float lo = c[0].get(name)[i], hi = lo;
                for (const auto &ck : c) {
                    lo = std::min(lo, ck.get(name)[i]);
                    hi = std::max(hi, ck.get(name)[i]);
                }
                EXPECT_GE(t[i], lo);
                EXPECT_LE(t[i], hi);
            }
    }
}

TEST(MergeCheckpointsTest, IncompatibleCheckpointsNameTheTensor) {
    SplitMix64 rng(306);
    Checkpoint a = random_ckpt(rng, "a");
    Checkpoint b = random_ckpt(rng, "b");
    b.tensors.erase("b");
    b.tensors.emplace("b", Tensor({6}));
    const std::vector<Checkpoint> c{a, b};
    const std::vector<double> w{0.5, 0.5};
    try {
        merge_checkpoints(c, w);
        FAIL() << "expected IncompatibleCheckpointError";
    } catch (const IncompatibleCheckpointError &e) {
        EXPECT_NE(std::string(e.what()).find("'b'"), std::string::npos);
    }
    Checkpoint extra = a;
    extra.tensors.emplace("c", Tensor({1}));
    const std::vector<Checkpoint> c2{a, extra};
    EXPECT_THROW(merge_checkpoints(c2, w), IncompatibleCheckpointError);
}

TEST(MergeCheckpointsTest, WeightSumViolation) {
    SplitMix64 rng(307);
    const std::vector<Checkpoint> c{random_ckpt(rng, "a"), random_ckpt(rng, "b")};
    const std::vector<double> bad{0.5, 0.6};
    const std::vector<double> close{0.5, 0.5 + 5e-7};
    const std::vector<double> wrong_count{1.0};
    EXPECT_THROW(merge_checkpoints(c, bad), WeightError);
    EXPECT_NO_THROW(merge_checkpoints(c, close));
    EXPECT_THROW(merge_checkpoints(c, wrong_count), WeightError);
}

} // namespace
} // namespace rseg
