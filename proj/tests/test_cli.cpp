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
#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rseg/checkpoint.hpp"
#include "rseg/raster_io.hpp"
#include "rseg/text.hpp"

namespace rseg {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct RunResult {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("rseg_cli_" + std::to_string(::getpid()) + "_" +
                ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string path(const std::string &name) const { return (dir_ / name).string(); }

    RunResult run(const std::string &args, const std::string &env = "") const {
        const std::string out = path("stdout.txt"), err = path("stderr.txt");
        const std::string cmd = env + " \"" RSEG_CLI_PATH "\" " + args + " >\"" + out + "\" 2>\"" + err + "\"";
        const int status = std::system(cmd.c_str());
        RunResult r;
        r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        r.out = slurp(out);
        r.err = slurp(err);
        return r;
    }

    void ok(const std::string &args, const std::string &env = "") const {
        const RunResult r = run(args, env);
        ASSERT_EQ(r.code, 0) << args << "\n" << r.err;
    }

    void write(const std::string &name, const std::string &text) const {
        std::ofstream(path(name), std::ios::binary) << text;
    }

    void toy(const std::string &name, std::uint64_t seed, std::size_t layers = 6, std::size_t dim = 16) const {
        ok("gen-toy --layers " + std::to_string(layers) + " --dim " + std::to_string(dim) +
           " --heads 2 --patch 4 --grid 4 --seed " + std::to_string(seed) + " --out " + path(name));
    }

    void grammar() const {
        write("g.json", R"({"base_prompts": ["water", "building", "tree"],
            "synonyms": [["water", "lake"], ["building", "house"], ["tree", "forest"]],
            "prefixes": ["an aerial image", "a satellite photo"],
            "suffixes": ["in the city", "from above"], "K": 4, "seed": 3})");
    }

    /// Scene, masks, model and grammar for the segmentation commands.
    void scene(std::size_t layers = 6) const {
        toy("m.ckpt1", 11, layers);
        grammar();
        ok("gen-scene --height 24 --width 30 --classes 3 --cells 8 --seed 4 --image " + path("img.png") +
           " --truth " + path("gt.png"));
        ok("gen-masks --height 24 --width 30 --base 2 --growth 2 --levels 6 --seed 9 --out-dir " + path("masks"));
    }

    std::string masks(std::size_t n) const {
        std::string s;
        for (std::size_t r = 0; r < n; ++r) s += " " + path("masks/level_" + std::to_string(r) + ".rgl");
        return s;
    }

    std::string segment_args(std::size_t theta, const std::string &out) const {
        return "segment --checkpoint " + path("m.ckpt1") + " --image " + path("img.png") +
               (theta ? " --masks" + masks(theta) : std::string()) + " --theta " + std::to_string(theta) +
               " --grammar " + path("g.json") + " --toy-encoder 5 --tile 16 --stride 6 --out-labels " +
               path(out + ".png") + " --out-scores " + path(out + ".ckpt1");
    }

    fs::path dir_;
};

void save_container(const std::string &path, const std::string &model, const std::vector<std::vector<float>> &rows) {
    Checkpoint c;
    std::vector<TextEmbeddingSet> sets;
    for (std::size_t k = 0; k < rows.size(); ++k) sets.push_back({k, model, {rows[k], rows[k]}});
    add_embedding_sets(c, sets);
    io::save_checkpoint(c, path);
}

TEST_F(CliTest, MergeExplicitWeightsIsReproducibleAndRecorded) {
    toy("a.ckpt1", 1);
    toy("b.ckpt1", 2);
    const std::string args = "merge --checkpoint " + path("a.ckpt1") + " --checkpoint " + path("b.ckpt1") +
                             " --weights 0.37,0.63 --out ";
    const RunResult r = run(args + path("m1.ckpt1"));
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("0.37"), std::string::npos);
    EXPECT_NE(r.out.find("0.63"), std::string::npos);
    ok(args + path("m2.ckpt1"));
    EXPECT_EQ(io::read_file(path("m1.ckpt1")), io::read_file(path("m2.ckpt1")));
    const Checkpoint m = io::load_checkpoint(path("m1.ckpt1"));
    EXPECT_EQ(m.meta["merged_from"][0]["weight"], 0.37);
    EXPECT_EQ(m.meta["merged_from"][1]["weight"], 0.63);
    EXPECT_TRUE(m.meta.contains("config_hash"));
}

TEST_F(CliTest, MergeSingleCheckpointWithUnitWeightKeepsTensors) {
    toy("a.ckpt1", 3);
    ok("merge --checkpoint " + path("a.ckpt1") + " --weights 1.0 --out " + path("m.ckpt1"));
    EXPECT_EQ(io::load_checkpoint(path("m.ckpt1")).tensors, io::load_checkpoint(path("a.ckpt1")).tensors);
}

TEST_F(CliTest, MergeMismatchedShapesExitsTwoNamingTheTensor) {
    toy("a.ckpt1", 1);
    toy("c.ckpt1", 1, 6, 8);
    const RunResult r =
        run("merge --checkpoint " + path("a.ckpt1") + " --checkpoint " + path("c.ckpt1") + " --weights 0.5,0.5 --out " +
            path("x.ckpt1"));
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("tensor 'visual."), std::string::npos) << r.err;
    EXPECT_FALSE(fs::exists(path("x.ckpt1")));
}

TEST_F(CliTest, MergeRejectsBadWeights) {
    toy("a.ckpt1", 1);
    toy("b.ckpt1", 2);
    const std::string base = "merge --checkpoint " + path("a.ckpt1") + " --checkpoint " + path("b.ckpt1");
    EXPECT_EQ(run(base + " --weights 0.5,0.6 --out " + path("x.ckpt1")).code, 2);
    EXPECT_EQ(run(base + " --weights 1.0 --out " + path("x.ckpt1")).code, 2);
    EXPECT_NE(run(base + " --out " + path("x.ckpt1")).code, 0);
    EXPECT_NE(run("merge --checkpoint " + path("missing.ckpt1") + " --weights 1 --out " + path("x.ckpt1")).code, 0);
}

TEST_F(CliTest, PvsmIdenticalToyModelsSplitEvenlyAndFeedMerge) {
    grammar();
    ok("pvsm-report --grammar " + path("g.json") + " --toy-model 5 --toy-model 5 --toy-dim 32 --out " +
       path("r.json"));
    const json r = json::parse(slurp(path("r.json")));
    ASSERT_EQ(r["models"].size(), 2u);
    EXPECT_EQ(r["models"][0]["weight"], 0.5);
    EXPECT_EQ(r["models"][1]["weight"], 0.5);
    EXPECT_EQ(r["models"][0]["classes"].size(), 3u);
    toy("a.ckpt1", 1);
    toy("b.ckpt1", 2);
    ok("merge --checkpoint " + path("a.ckpt1") + " --checkpoint " + path("b.ckpt1") + " --pvsm-report " +
       path("r.json") + " --out " + path("m.ckpt1"));
    const Checkpoint m = io::load_checkpoint(path("m.ckpt1"));
    EXPECT_EQ(m.meta["merged_from"][0]["weight"], 0.5);
    EXPECT_EQ(m.meta["pvsm"].size(), 2u);
}

TEST_F(CliTest, PvsmSingleModelGetsUnitWeight) {
    grammar();
    const RunResult r = run("pvsm-report --grammar " + path("g.json") + " --toy-model 9 --toy-dim 32");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(json::parse(r.out)["models"][0]["weight"], 1.0);
}

TEST_F(CliTest, PvsmFromEmbeddingFilesNormalizesByHand) {
    // cos(class0, class1) = +0.5 gives PVSM 0.5, cos = -0.5 gives 1.5.
    const float h = std::sqrt(3.0f) / 2.0f;
    save_container(path("a.ckpt1"), "close", {{1.0f, 0.0f}, {0.5f, h}});
    save_container(path("b.ckpt1"), "apart", {{1.0f, 0.0f}, {-0.5f, h}});
    const RunResult r = run("pvsm-report --embeddings " + path("a.ckpt1") + " --embeddings " + path("b.ckpt1"));
    ASSERT_EQ(r.code, 0) << r.err;
    const json j = json::parse(r.out);
    EXPECT_NEAR(j["models"][0]["pvsm"].get<double>(), 0.5, 1e-6);
    EXPECT_NEAR(j["models"][1]["pvsm"].get<double>(), 1.5, 1e-6);
    EXPECT_NEAR(j["models"][0]["weight"].get<double>(), 0.25, 1e-6);
    EXPECT_NEAR(j["models"][1]["weight"].get<double>(), 0.75, 1e-6);
}

TEST_F(CliTest, NonPositivePvsmIsFlaggedAndBlocksMerge) {
    save_container(path("same.ckpt1"), "flat", {{1.0f, 0.0f}, {1.0f, 0.0f}});
    save_container(path("good.ckpt1"), "good", {{1.0f, 0.0f}, {0.0f, 1.0f}});
    const RunResult r = run("pvsm-report --embeddings " + path("good.ckpt1") + " --embeddings " + path("same.ckpt1") +
                            " --out " + path("r.json"));
    EXPECT_EQ(r.code, 3);
    EXPECT_NE(r.err.find("flat"), std::string::npos);
    const json j = json::parse(slurp(path("r.json")));
    EXPECT_FALSE(j["valid"].get<bool>());
    EXPECT_TRUE(j["models"][0]["positive"].get<bool>());
    EXPECT_FALSE(j["models"][1]["positive"].get<bool>());
    EXPECT_TRUE(j["models"][1]["weight"].is_null());
    toy("a.ckpt1", 1);
    toy("b.ckpt1", 2);
    EXPECT_EQ(run("merge --checkpoint " + path("a.ckpt1") + " --checkpoint " + path("b.ckpt1") + " --pvsm-report " +
                  path("r.json") + " --out " + path("m.ckpt1"))
                  .code,
              3);
}

TEST_F(CliTest, PvsmGrammarErrorFails) {
    write("bad.json", R"({"base_prompts": ["a"], "synonyms": [[]], "prefixes": ["p"], "suffixes": ["s"], "K": 2})");
    EXPECT_EQ(run("pvsm-report --grammar " + path("bad.json") + " --toy-model 1").code, 2);
}

TEST_F(CliTest, SegmentPlainAndHierarchyPaths) {
    scene();
    ok(segment_args(0, "plain"));
    ok(segment_args(6, "masked"));
    const RegionLabelImage plain = io::load_labels(path("plain.png"));
    EXPECT_EQ(plain.height, 24u);
    EXPECT_EQ(plain.width, 30u);
    for (std::uint32_t l : plain.labels) EXPECT_LT(l, 3u);
    const Checkpoint a = io::load_checkpoint(path("plain.ckpt1"));
    const Checkpoint b = io::load_checkpoint(path("masked.ckpt1"));
    EXPECT_EQ(a.get("scores").shape(), (Shape{24, 30, 3}));
    EXPECT_NE(a.get("scores"), b.get("scores"));
    const json side = json::parse(slurp(path("masked.png.json")));
    EXPECT_EQ(side["flags"]["theta"], 6);
    EXPECT_EQ(side["config_hash"], b.meta["config_hash"]);
    EXPECT_NE(side["config_hash"], json::parse(slurp(path("plain.png.json")))["config_hash"]);
}

TEST_F(CliTest, SegmentMissingHierarchyLevelIsConfigError) {
    scene();
    const std::string args = segment_args(6, "x");
    const std::string five = args.substr(0, args.find(path("masks/level_5.rgl"))) +
                             args.substr(args.find(path("masks/level_5.rgl")) + path("masks/level_5.rgl").size());
    const RunResult r = run(five);
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("mask rasters"), std::string::npos) << r.err;
    std::string deep = segment_args(6, "y");
    deep.replace(deep.find("--theta 6"), 9, "--theta 7");
    const RunResult over = run(deep);
    EXPECT_EQ(over.code, 2);
    EXPECT_NE(over.err.find("exceeds the encoder depth"), std::string::npos) << over.err;
}

TEST_F(CliTest, SegmentIsByteIdenticalAcrossRunsAndThreads) {
    scene();
    ok(segment_args(3, "one") + " --threads 1");
    ok(segment_args(3, "four") + " --threads 4");
    ok(segment_args(3, "env"), "RESEG_THREADS=3");
    for (const char *ext : {".png", ".ckpt1", ".png.json"}) {
        EXPECT_EQ(io::read_file(path(std::string("one") + ext)), io::read_file(path(std::string("four") + ext))) << ext;
        EXPECT_EQ(io::read_file(path(std::string("one") + ext)), io::read_file(path(std::string("env") + ext))) << ext;
    }
}

TEST_F(CliTest, EvalProducesMetricsJson) {
    RegionLabelImage gt(1, 3), pred(1, 3);
    gt.labels = {0, 0, 1};
    pred.labels = {0, 1, 1};
    io::save_labels(gt, path("gt.png"));
    io::save_labels(pred, path("pred.rgl"));
    const RunResult r = run("eval --gt " + path("gt.png") + " --pred " + path("pred.rgl") + " --classes 2");
    ASSERT_EQ(r.code, 0) << r.err;
    const json j = json::parse(r.out);
    EXPECT_EQ(j["miou"], 0.5);
    EXPECT_EQ(j["confusion"], json::parse("[[1,1],[0,1]]"));
    pred.labels = {0, 5, 1};
    io::save_labels(pred, path("bad.rgl"));
    const RunResult bad = run("eval --gt " + path("gt.png") + " --pred " + path("bad.rgl") + " --classes 2");
    EXPECT_EQ(bad.code, 2);
    EXPECT_NE(bad.err.find("bad.rgl"), std::string::npos);
}

TEST_F(CliTest, SweepThetaEmitsTheGrid) {
    scene(18);
    const std::string rest = " --image " + path("img.png") + " --gt " + path("gt.png") + " --masks" + masks(6) + " --grammar " + path("g.json") +
                             " --toy-encoder 5 --tile 16 --stride 8";
    ok("sweep-theta --checkpoint " + path("m.ckpt1") + rest + " --out " + path("s.json"));
    const json j = json::parse(slurp(path("s.json")));
    EXPECT_EQ(j["grid"], json::parse("[0,1,3,6,12,18]"));
    ASSERT_EQ(j["results"].size(), 6u);
    for (std::size_t i = 0; i < 6; ++i) {
        EXPECT_EQ(j["results"][i]["theta"], j["grid"][i]);
        EXPECT_TRUE(j["results"][i]["miou"].is_number());
    }
    toy("shallow.ckpt1", 1, 6);
    const RunResult r = run("sweep-theta --checkpoint " + path("shallow.ckpt1") + rest);
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("exceeds the encoder depth"), std::string::npos) << r.err;
}

TEST_F(CliTest, GenMasksIsSeededAndNested) {
    ok("gen-masks --height 20 --width 20 --points 1,4,9 --seed 3 --out-dir " + path("a"));
    ok("gen-masks --height 20 --width 20 --points 1,4,9 --seed 3 --out-dir " + path("b"));
    for (int r = 0; r < 3; ++r) {
        const std::string f = "/level_" + std::to_string(r) + ".rgl";
        EXPECT_EQ(io::read_file(path("a") + f), io::read_file(path("b") + f));
    }
    const RegionLabelImage one = io::load_labels(path("a/level_0.rgl"));
    for (std::uint32_t l : one.labels) EXPECT_EQ(l, one.labels.front());
    EXPECT_EQ(run("gen-masks --height 20 --width 20 --points 4,4 --out-dir " + path("c")).code, 2);
}

} // namespace
} // namespace rseg
