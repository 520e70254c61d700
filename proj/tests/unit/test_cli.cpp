// Copyright 2026 The ocsd Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "fixtures.hpp"
#include "json.hpp"
#include "ocsd/checkpoint.hpp"
#include "ocsd/image_io.hpp"
#include "ocsd/speckle.hpp"

namespace ocsd {
namespace {

namespace fs = std::filesystem;
using testing::TempDir;
using testing::write_scenes;

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Result r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

nlohmann::json logged_config(const std::string& err, const std::string& command) {
  const std::string prefix = "ocsd " + command + " config ";
  std::istringstream lines(err);
  for (std::string line; std::getline(lines, line);) {
    if (line.rfind(prefix, 0) == 0) return nlohmann::json::parse(line.substr(prefix.size()));
  }
  ADD_FAILURE() << "no config line in: " << err;
  return {};
}

std::size_t count_files(const fs::path& dir) {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir)) n += e.is_regular_file() ? 1 : 0;
  return n;
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
  EXPECT_EQ(run({"simulate", "--in", "x"}).code, 2);
  EXPECT_EQ(run({"train", "--data", "d", "--out", "o", "--epochs", "many"}).code, 2);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST(Cli, ExpandConfig) {
  TempDir dir("cfg");
  std::ofstream(dir / "c.json")
      << R"({"epochs": 3, "lr": 0.001, "under-channels": [1, 2, 3, 4, 5], "flag": true,
            "off": false, "none": null, "preset": "tiny"})";
  const auto args =
      cli::expand_config({"train", "--data", "d", "--config", (dir / "c.json").string(),
                          "--epochs", "9"});
  ASSERT_GE(args.size(), 3u);
  EXPECT_EQ(args[0], "train");
  const std::vector<std::string> expected_prefix = {"--epochs", "3", "--lr", "0.001",
                                                    "--under-channels", "1,2,3,4,5", "--flag",
                                                    "--preset", "tiny"};
  std::string joined;
  for (const auto& a : args) joined += a + " ";
  for (const auto& e : expected_prefix) EXPECT_NE(joined.find(e), std::string::npos) << e;
  EXPECT_EQ(joined.find("--off"), std::string::npos);
  EXPECT_EQ(joined.find("--none"), std::string::npos);
  EXPECT_EQ(args.back(), "9");
}

TEST(Simulate, DeterministicAndByteIdentical) {
  TempDir dir("sim");
  write_scenes(dir / "clean", 3, 40, 1);
  const Result a = run({"simulate", "--in", (dir / "clean").string(), "--out",
                        (dir / "a").string(), "--looks", "1", "--seed", "7"});
  ASSERT_EQ(a.code, 0) << a.err;
  const Result b = run({"simulate", "--in", (dir / "clean").string(), "--out",
                        (dir / "b").string(), "--looks", "1", "--seed", "7"});
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_EQ(count_files(dir / "a"), 4u);  // three images plus the manifest
  for (const char* name : {"scene_00.png", "scene_01.png", "scene_02.png"}) {
    EXPECT_EQ(slurp(dir / "a" / name), slurp(dir / "b" / name)) << name;
    EXPECT_NE(slurp(dir / "a" / name), slurp(dir / "clean" / name)) << name;
  }
  const auto manifest = nlohmann::json::parse(slurp(dir / "a" / "manifest.json"));
  EXPECT_EQ(manifest["looks"], 1);
  ASSERT_EQ(manifest["outputs"].size(), 3u);
  EXPECT_EQ(manifest["outputs"][1]["looks"], 1);
  EXPECT_TRUE(manifest["outputs"][1].contains("seed"));
  EXPECT_TRUE(manifest["outputs"][1].contains("input"));
  EXPECT_EQ(logged_config(a.err, "simulate")["looks"], 1);

  const Result c = run({"simulate", "--in", (dir / "clean").string(), "--out",
                        (dir / "c").string(), "--looks", "1", "--seed", "8"});
  ASSERT_EQ(c.code, 0);
  EXPECT_NE(slurp(dir / "a" / "scene_00.png"), slurp(dir / "c" / "scene_00.png"));
}

TEST(Simulate, Errors) {
  TempDir dir("sim");
  write_scenes(dir / "clean", 1, 32, 1);
  EXPECT_EQ(run({"simulate", "--in", (dir / "missing").string(), "--out",
                 (dir / "o").string()}).code, 1);
  EXPECT_EQ(run({"simulate", "--in", (dir / "clean").string(), "--out",
                 (dir / "o").string(), "--looks", "0"}).code, 1);
  EXPECT_EQ(run({"simulate", "--in", (dir / "clean").string(), "--out",
                 (dir / "clean").string()}).code, 1);
  EXPECT_FALSE(fs::exists(dir / "o"));
}

class TrainedModel : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("train");
    write_scenes(dir() / "data", 5, 40, 3);
    const Result r = run({"train", "--data", (dir() / "data").string(), "--out",
                          (dir() / "model.ocsd").string(), "--epochs", "2", "--crop", "32",
                          "--over-channels", "4", "--seed", "5"});
    code_ = r.code;
    err_ = r.err;
  }
  static void TearDownTestSuite() { delete dir_; }
  static const fs::path& dir() { return dir_->path(); }

  static TempDir* dir_;
  static int code_;
  static std::string err_;
};
TempDir* TrainedModel::dir_ = nullptr;
int TrainedModel::code_ = -1;
std::string TrainedModel::err_;

TEST_F(TrainedModel, TrainWritesCheckpointAndCurve) {
  ASSERT_EQ(code_, 0) << err_;
  const Checkpoint c = load_checkpoint(dir() / "model.ocsd");
  EXPECT_EQ(c.network().over_channels, 4);
  EXPECT_EQ(c.progress.history.size(), 2u);
  const std::string csv = slurp(dir() / "model.csv");
  EXPECT_EQ(csv.rfind("epoch,train_loss,val_psnr\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}

TEST_F(TrainedModel, ResolvedDefaultsAreLogged) {
  const auto cfg = logged_config(err_, "train");
  EXPECT_EQ(cfg["training"]["learning_rate"], 2e-4);
  EXPECT_EQ(cfg["training"]["tv_weight"], 5e-5);
  EXPECT_EQ(cfg["training"]["looks"], 1);
  EXPECT_EQ(cfg["training"]["crop_size"], 32);
  EXPECT_EQ(cfg["training"]["epochs"], 2);
  EXPECT_EQ(cfg["network"]["under_channels"], nlohmann::json::array({32, 64, 128, 256, 512}));
  EXPECT_EQ(cfg["train_images"], 4);
  EXPECT_EQ(cfg["val_images"], 1);
}

TEST_F(TrainedModel, DespeckleKeepsSizeAndIsDeterministic) {
  ASSERT_EQ(code_, 0) << err_;
  save_gray(dir() / "odd.png", testing::synthetic_scene(100, 100, 9));
  for (const char* name : {"d1.png", "d2.png"}) {
    const Result r = run({"despeckle", "--checkpoint", (dir() / "model.ocsd").string(), "--in",
                          (dir() / "odd.png").string(), "--out", (dir() / name).string()});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  const ImageGray out = load_gray(dir() / "d1.png");
  EXPECT_EQ(out.height(), 100);
  EXPECT_EQ(out.width(), 100);
  EXPECT_EQ(slurp(dir() / "d1.png"), slurp(dir() / "d2.png"));

  const Result d = run({"despeckle", "--checkpoint", (dir() / "model.ocsd").string(), "--in",
                        (dir() / "data").string(), "--out", (dir() / "dout").string()});
  ASSERT_EQ(d.code, 0) << d.err;
  EXPECT_EQ(count_files(dir() / "dout"), 5u);
}

TEST_F(TrainedModel, DespecklePartialOutputsRemoved) {
  ASSERT_EQ(code_, 0) << err_;
  fs::create_directory(dir() / "mixed");
  save_gray(dir() / "mixed" / "a.png", testing::synthetic_scene(32, 32, 1));
  std::ofstream(dir() / "mixed" / "b.png") << "broken";
  const Result r = run({"despeckle", "--checkpoint", (dir() / "model.ocsd").string(), "--in",
                        (dir() / "mixed").string(), "--out", (dir() / "mixed_out").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_FALSE(fs::exists(dir() / "mixed_out"));
}

TEST_F(TrainedModel, DespeckleRejectsBadCheckpoint) {
  std::ofstream(dir() / "bad.ocsd") << "OCSDjunk";
  const Result r = run({"despeckle", "--checkpoint", (dir() / "bad.ocsd").string(), "--in",
                        (dir() / "data").string(), "--out", (dir() / "never").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_FALSE(fs::exists(dir() / "never"));
}

TEST(Train, ResumeReproducesCurve) {
  TempDir dir("resume");
  write_scenes(dir / "data", 5, 40, 4);
  const std::vector<std::string> common = {"--data", (dir / "data").string(), "--epochs", "3",
                                           "--crop", "32", "--preset", "tiny", "--batch", "2",
                                           "--seed", "11"};
  auto with = [&](std::vector<std::string> extra) {
    std::vector<std::string> args = {"train"};
    args.insert(args.end(), common.begin(), common.end());
    args.insert(args.end(), extra.begin(), extra.end());
    return run(args);
  };
  ASSERT_EQ(with({"--out", (dir / "full.ocsd").string()}).code, 0);
  const Result first = with({"--out", (dir / "part.ocsd").string(), "--max-steps", "3"});
  ASSERT_EQ(first.code, 0) << first.err;
  EXPECT_NE(first.err.find("--resume"), std::string::npos);
  const Result second = with({"--out", (dir / "part.ocsd").string(), "--resume",
                              (dir / "part.ocsd").string()});
  ASSERT_EQ(second.code, 0) << second.err;
  EXPECT_EQ(slurp(dir / "full.csv"), slurp(dir / "part.csv"));
  const Checkpoint a = load_checkpoint(dir / "full.ocsd");
  const Checkpoint b = load_checkpoint(dir / "part.ocsd");
  for (std::size_t i = 0; i < a.params.size(); ++i) {
    ASSERT_EQ(a.params.tensor(i), b.params.tensor(i)) << a.params.name(i);
  }
  EXPECT_EQ(a.progress, b.progress);
}

TEST(Train, InvalidConfigFailsBeforeTraining) {
  TempDir dir("badtrain");
  write_scenes(dir / "data", 3, 32, 4);
  const Result r = run({"train", "--data", (dir / "data").string(), "--out",
                        (dir / "m.ocsd").string(), "--crop", "40"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("crop_size"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(dir / "m.ocsd"));
  EXPECT_EQ(run({"train", "--data", (dir / "data").string(), "--out",
                 (dir / "m.ocsd").string(), "--under-channels", "1,2,3"}).code, 1);
  EXPECT_EQ(run({"train", "--data", (dir / "empty").string(), "--out",
                 (dir / "m.ocsd").string()}).code, 1);
}

TEST(Train, ConfigFileOverriddenByFlags) {
  TempDir dir("cfgtrain");
  write_scenes(dir / "data", 3, 32, 4);
  std::ofstream(dir / "c.json") << R"({"epochs": 7, "lr": 0.001, "preset": "tiny", "crop": 32})";
  const Result r = run({"train", "--config", (dir / "c.json").string(), "--data",
                        (dir / "data").string(), "--out", (dir / "m.ocsd").string(),
                        "--epochs", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto cfg = logged_config(r.err, "train");
  EXPECT_EQ(cfg["training"]["epochs"], 1);
  EXPECT_EQ(cfg["training"]["learning_rate"], 0.001);
  EXPECT_EQ(cfg["network"]["over_channels"], 4);
}

TEST(Eval, IdenticalImages) {
  TempDir dir("eval");
  save_gray(dir / "a.png", testing::synthetic_scene(48, 48, 2));
  const Result r = run({"eval", "--test", (dir / "a.png").string(), "--reference",
                        (dir / "a.png").string(), "--out", (dir / "r.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(slurp(dir / "r.json"));
  EXPECT_EQ(j["psnr"], "inf");
  EXPECT_NEAR(j["ssim"].get<double>(), 1.0, 1e-12);
  EXPECT_NE(r.out.find("PSNR"), std::string::npos);
}

TEST(Eval, ConstantRegion) {
  TempDir dir("eval");
  save_gray(dir / "c.png", ImageGray(64, 64, 0.5f));
  const Result r = run({"eval", "--test", (dir / "c.png").string(), "--region", "0,0,64,64",
                        "--region", "8,8,16,16"});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string js = r.out.substr(r.out.find('{'));
  const auto j = nlohmann::json::parse(js);
  ASSERT_EQ(j["regions"].size(), 2u);
  EXPECT_TRUE(j["regions"][0]["enl"].is_null());
  EXPECT_EQ(j["regions"][0]["cx"].get<double>(), 0.0);
}

TEST(Eval, FourLookSpeckleRegion) {
  TempDir dir("eval");
  save_gray(dir / "s.png", clamp01(apply_speckle(ImageGray(64, 64, 0.2f), 4, 3)));
  const Result r = run({"eval", "--test", (dir / "s.png").string(), "--region", "0,0,64,64",
                        "--out", (dir / "r.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(slurp(dir / "r.json"));
  EXPECT_NEAR(j["regions"][0]["enl"].get<double>(), 4.0, 0.6);
}

TEST(Eval, Errors) {
  TempDir dir("eval");
  save_gray(dir / "a.png", ImageGray(32, 32, 0.5f));
  const Result none = run({"eval", "--test", (dir / "a.png").string()});
  EXPECT_NE(none.code, 0);
  EXPECT_NE(none.err.find("nothing to compute"), std::string::npos) << none.err;
  EXPECT_EQ(run({"eval", "--test", (dir / "a.png").string(), "--region", "0,0,99,99"}).code, 1);
  EXPECT_EQ(run({"eval", "--test", (dir / "a.png").string(), "--region", "oops"}).code, 1);
  EXPECT_EQ(run({"eval", "--test", (dir / "a.png").string(), "--region", "0,0,4,4", "--out",
                 "/nonexistent/dir/r.json"}).code, 1);
}

TEST(Gradcheck, PristinePasses) {
  TempDir dir("gc");
  const Result r = run({"gradcheck", "--seeds", "2", "--out", (dir / "g.json").string()});
  ASSERT_EQ(r.code, 0) << r.err << r.out;
  const auto j = nlohmann::json::parse(slurp(dir / "g.json"));
  EXPECT_FALSE(j.empty());
}

TEST(Gradcheck, PlantedBugNamesOp) {
  const Result r = run({"gradcheck", "--seeds", "1", "--plant-bug", "maxpool2x2"});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE((r.out + r.err).find("maxpool2x2"), std::string::npos) << r.out << r.err;
  EXPECT_EQ(run({"gradcheck", "--seeds", "0"}).code, 1);
  EXPECT_EQ(run({"gradcheck", "--plant-bug", "nosuchop"}).code, 1);
}

}  // namespace
}  // namespace ocsd
