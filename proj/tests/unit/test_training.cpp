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

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <numeric>
#include <string>

#include "fixtures.hpp"
#include "json.hpp"
#include "ocsd/checkpoint.hpp"
#include "ocsd/rng.hpp"
#include "ocsd/speckle.hpp"
#include "ocsd/training.hpp"

namespace ocsd {
namespace {

namespace fs = std::filesystem;
using testing::synthetic_scene;
using testing::TempDir;

Tensor<double> random_tensor(Shape shape, std::uint64_t seed) {
  Tensor<double> t(shape);
  Rng rng(seed);
  for (auto& v : t.data()) v = rng.uniform();
  return t;
}

double eval_l2(const Tensor<double>& a, const Tensor<double>& b) {
  Tape<double> tape;
  return l2_loss(tape, tape.constant(a), tape.constant(b)).value().item();
}

double eval_tv(const Tensor<double>& a) {
  Tape<double> tape;
  return tv_loss(tape, tape.constant(a)).value().item();
}

double eval_total(const Tensor<double>& a, const Tensor<double>& b, double lambda) {
  Tape<double> tape;
  return total_loss(tape, tape.constant(a), tape.constant(b), lambda).value().item();
}

TEST(Losses, L2Examples) {
  const Tensor<double> x = random_tensor({2, 1, 5, 7}, 1);
  EXPECT_EQ(eval_l2(x, x), 0.0);
  Tensor<double> shifted = x;
  for (auto& v : shifted.data()) v += 1.0;
  EXPECT_NEAR(eval_l2(shifted, x), 1.0, 1e-12);
  Tape<double> tape;
  EXPECT_THROW(l2_loss(tape, tape.constant(x), tape.constant(random_tensor({2, 1, 5, 6}, 1))),
               std::invalid_argument);
}

TEST(Losses, L2GradientIsScaledResidual) {
  const Tensor<double> p = random_tensor({1, 1, 4, 6}, 2);
  const Tensor<double> t = random_tensor({1, 1, 4, 6}, 3);
  Tape<double> tape;
  const Var<double> pv = tape.leaf(p, true);
  tape.backward(l2_loss(tape, pv, tape.constant(t)));
  const Tensor<double> g = pv.grad();
  for (std::int64_t i = 0; i < p.numel(); ++i) {
    EXPECT_NEAR(g[i], 2.0 * (p[i] - t[i]) / 24.0, 1e-15);
  }
}

TEST(Losses, TvExamples) {
  EXPECT_EQ(eval_tv(Tensor<double>(Shape{1, 1, 6, 6}, 0.4)), 0.0);
  const Tensor<double> pattern(Shape{1, 1, 2, 2}, std::vector<double>{0, 1, 0, 1});
  // Horizontal differences 1 and 1, vertical 0 and 0; mean over 4 elements.
  EXPECT_EQ(eval_tv(pattern) * 4.0, 2.0);
  Tape<double> tape;
  EXPECT_THROW(tv_loss(tape, tape.constant(Tensor<double>(Shape{1, 1, 1, 5}))),
               std::invalid_argument);
}

TEST(Losses, TotalLossAlgebra) {
  const Tensor<double> p = random_tensor({1, 1, 8, 8}, 4);
  const Tensor<double> t = random_tensor({1, 1, 8, 8}, 5);
  EXPECT_EQ(eval_total(p, t, 0.0), eval_l2(p, t));
  const double l0 = eval_total(p, t, 0.0);
  const double l1 = eval_total(p, t, 0.3);
  const double l2 = eval_total(p, t, 0.6);
  EXPECT_NEAR(l2 - l0, 2.0 * (l1 - l0), 1e-12);
  EXPECT_EQ(eval_total(t, t, 5e-5), 5e-5 * eval_tv(t));
  EXPECT_GE(eval_total(p, t, 5e-5), 0.0);
  Tape<double> tape;
  EXPECT_THROW(total_loss(tape, tape.constant(p), tape.constant(t), -1.0),
               std::invalid_argument);
}

std::vector<Tensor<double>> one_param(double p) {
  return {Tensor<double>(Shape{1, 1, 1, 1}, p)};
}

TEST(Adam, ZeroGradientLeavesParameters) {
  std::vector<Tensor<double>> params = {random_tensor({1, 3, 2, 2}, 6)};
  const auto before = params;
  AdamState<double> s = AdamState<double>::zeros_like(params);
  const std::vector<Tensor<double>> grads = {Tensor<double>(Shape{1, 3, 2, 2})};
  adam_step<double>(params, grads, s, {});
  EXPECT_EQ(params, before);
  EXPECT_EQ(s.step, 1);
}

TEST(Adam, FirstStepIsSignedLearningRate) {
  for (double g : {3.7, -0.02, 150.0}) {
    auto params = one_param(1.0);
    AdamState<double> s = AdamState<double>::zeros_like(params);
    adam_step<double>(params, one_param(g), s, {});
    EXPECT_NEAR(params[0][0] - 1.0, -2e-4 * g / (std::abs(g) + 1e-8), 1e-15);
    EXPECT_NEAR(params[0][0] - 1.0, -2e-4 * (g > 0 ? 1 : -1), 1e-9);
  }
}

TEST(Adam, QuadraticTraceMatchesReference) {
  // f(p) = (p - 3)^2, lr 0.1, default betas.
  const double expected[] = {0.09999999983333335, 0.19989729258521102, 0.29961847654925267,
                             0.3990864689442145,  0.4982205437727129,  0.5969363926185332,
                             0.6951462106969352,  0.7927588106102016,  0.8896797663766276,
                             0.9858115903830454};
  AdamConfig cfg;
  cfg.learning_rate = 0.1;
  auto params = one_param(0.0);
  AdamState<double> s = AdamState<double>::zeros_like(params);
  double m = 0.0, v = 0.0, ref = 0.0;
  for (int t = 1; t <= 10; ++t) {
    adam_step<double>(params, one_param(2.0 * (params[0][0] - 3.0)), s, cfg);
    const double g = 2.0 * (ref - 3.0);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    ref -= 0.1 * (m / (1.0 - std::pow(0.9, t))) / (std::sqrt(v / (1.0 - std::pow(0.999, t))) + 1e-8);
    EXPECT_NEAR(params[0][0], ref, 1e-10) << t;
    EXPECT_NEAR(params[0][0], expected[t - 1], 1e-10) << t;
    EXPECT_EQ(s.step, t);
    EXPECT_GE(s.v[0][0], 0.0);
  }
}

TEST(Adam, RejectsNonFiniteGradient) {
  std::vector<Tensor<double>> params = {random_tensor({1, 1, 2, 2}, 7), one_param(2.0)[0]};
  const auto before = params;
  AdamState<double> s = AdamState<double>::zeros_like(params);
  std::vector<Tensor<double>> grads = {random_tensor({1, 1, 2, 2}, 8), one_param(1.0)[0]};
  grads[1][0] = std::numeric_limits<double>::quiet_NaN();
  try {
    adam_step<double>(params, grads, s, {});
    FAIL() << "expected rejection";
  } catch (const std::domain_error& e) {
    EXPECT_NE(std::string(e.what()).find("non-finite"), std::string::npos);
  }
  EXPECT_EQ(params, before);
  EXPECT_EQ(s.step, 0);
  for (double v : s.m[0].data()) EXPECT_EQ(v, 0.0);
}

TEST(Adam, PermutationInvariant) {
  std::vector<Tensor<double>> params, grads;
  for (std::uint64_t i = 0; i < 4; ++i) {
    params.push_back(random_tensor({1, 1, 3, static_cast<std::int64_t>(i + 1)}, i));
    grads.push_back(random_tensor({1, 1, 3, static_cast<std::int64_t>(i + 1)}, 10 + i));
  }
  const std::size_t perm[] = {2, 0, 3, 1};
  std::vector<Tensor<double>> pp, pg;
  for (std::size_t k : perm) {
    pp.push_back(params[k]);
    pg.push_back(grads[k]);
  }
  AdamState<double> a = AdamState<double>::zeros_like(params);
  AdamState<double> b = AdamState<double>::zeros_like(pp);
  for (int step = 0; step < 3; ++step) {
    adam_step<double>(params, grads, a, {});
    adam_step<double>(pp, pg, b, {});
  }
  for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(pp[k], params[perm[k]]);
}

TEST(Adam, RejectsMismatchedState) {
  std::vector<Tensor<double>> params = {random_tensor({1, 1, 2, 2}, 1)};
  AdamState<double> s = AdamState<double>::zeros_like(params);
  const std::vector<Tensor<double>> grads = {random_tensor({1, 1, 2, 3}, 1)};
  EXPECT_THROW(adam_step<double>(params, grads, s, {}), std::invalid_argument);
}

TEST(TrainConfigTest, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  auto rejects = [](auto mutate) {
    TrainConfig t;
    mutate(t);
    EXPECT_THROW(t.validate(), std::invalid_argument);
  };
  rejects([](TrainConfig& t) { t.learning_rate = 0.0; });
  rejects([](TrainConfig& t) { t.tv_weight = -1e-5; });
  rejects([](TrainConfig& t) { t.crop_size = 48; });
  rejects([](TrainConfig& t) { t.batch_size = 0; });
  rejects([](TrainConfig& t) { t.looks = 0; });
  rejects([](TrainConfig& t) { t.train_fraction = 1.0; });
  rejects([](TrainConfig& t) { t.beta2 = 1.0; });
  EXPECT_EQ(c.learning_rate, 2e-4);
  EXPECT_EQ(c.epochs, 400);
  EXPECT_EQ(c.tv_weight, 5e-5);
  EXPECT_EQ(c.crop_size, 128);
  EXPECT_EQ(c.looks, 1);
}

TEST(Overfit, SinglePairLossDropsAndTrendsDown) {
  const ImageGray clean = synthetic_scene(32, 32, 1);
  const ImageGray noisy = apply_speckle(clean, 1, 101);
  NetworkConfig n = NetworkConfig::tiny();
  n.seed = 1;
  NetworkParams<float> p = init_params<float>(n);
  AdamState<float> adam = AdamState<float>::zeros_like(p.tensors());
  const Tensor<float> x = to_tensor<float>(noisy);
  const Tensor<float> y = to_tensor<float>(clean);
  auto l2 = [&] {
    Tape<float> t;
    return static_cast<double>(
        l2_loss(t, t.constant(predict(p, x)), t.constant(y)).value().item());
  };
  const double initial = l2();
  std::vector<double> losses;
  for (int i = 0; i < 500; ++i) losses.push_back(train_step(p, adam, x, y, 5e-5, {}));
  EXPECT_LT(l2(), 0.05 * initial);
  for (double l : losses) EXPECT_GE(l, 0.0);
  double previous = std::numeric_limits<double>::infinity();
  for (std::size_t w = 0; w < losses.size(); w += 20) {
    const double mean =
        std::accumulate(losses.begin() + static_cast<std::ptrdiff_t>(w),
                        losses.begin() + static_cast<std::ptrdiff_t>(w + 20), 0.0) / 20.0;
    EXPECT_LE(mean, previous) << "window at step " << w;
    previous = mean;
  }
}

struct TinyRun {
  TrainConfig config;
  NetworkConfig network;
  std::vector<ImageGray> train;
  std::vector<ImageGray> val;
};

TinyRun tiny_run() {
  TinyRun r;
  r.config.epochs = 2;
  r.config.crop_size = 32;
  r.config.batch_size = 2;
  r.config.crops_per_image = 2;
  r.config.seed = 42;
  r.network = NetworkConfig::tiny();
  r.network.seed = 42;
  for (std::uint64_t i = 0; i < 3; ++i) r.train.push_back(synthetic_scene(40, 36, i));
  r.val.push_back(synthetic_scene(32, 32, 9));
  return r;
}

Trainer make_trainer(const TinyRun& r) {
  return Trainer(r.config, init_params<float>(r.network), r.train, r.val);
}

TEST(TrainerTest, StepCounts) {
  const Trainer t = make_trainer(tiny_run());
  EXPECT_EQ(t.steps_per_epoch(), 3);
  EXPECT_EQ(t.total_steps(), 6);
  EXPECT_FALSE(t.finished());
}

TEST(TrainerTest, RejectsEmptyDataset) {
  TinyRun r = tiny_run();
  r.train.clear();
  EXPECT_THROW(make_trainer(r), std::invalid_argument);
}

TEST(TrainerTest, HistoryPerEpoch) {
  Trainer t = make_trainer(tiny_run());
  t.run();
  EXPECT_TRUE(t.finished());
  ASSERT_EQ(t.progress().history.size(), 2u);
  EXPECT_EQ(t.progress().history[0].epoch, 1);
  EXPECT_EQ(t.progress().global_step, 6);
  for (const auto& rec : t.progress().history) {
    ASSERT_TRUE(rec.val_psnr.has_value());
    EXPECT_TRUE(std::isfinite(*rec.val_psnr));
  }
  EXPECT_NEAR(t.progress().history[1].train_loss,
              (t.step_losses()[3] + t.step_losses()[4] + t.step_losses()[5]) / 3.0, 1e-12);
  EXPECT_THROW(t.step(), std::logic_error);
}

TEST(TrainerTest, NoValidationSetGivesNoPsnr) {
  TinyRun r = tiny_run();
  r.val.clear();
  r.config.epochs = 1;
  Trainer t = make_trainer(r);
  t.run();
  ASSERT_EQ(t.progress().history.size(), 1u);
  EXPECT_FALSE(t.progress().history[0].val_psnr.has_value());
}

TEST(TrainerTest, SameSeedSameParameters) {
  Trainer a = make_trainer(tiny_run());
  Trainer b = make_trainer(tiny_run());
  a.run();
  b.run();
  ASSERT_EQ(a.params().size(), b.params().size());
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    const auto x = a.params().tensor(i).data();
    const auto y = b.params().tensor(i).data();
    ASSERT_EQ(std::memcmp(x.data(), y.data(), x.size_bytes()), 0) << a.params().name(i);
  }
  EXPECT_EQ(a.step_losses(), b.step_losses());
  EXPECT_EQ(a.progress(), b.progress());
}

TEST(TrainerTest, DifferentSeedDiffers) {
  TinyRun r = tiny_run();
  Trainer a = make_trainer(r);
  r.config.seed = 43;
  Trainer b = make_trainer(r);
  a.run(2);
  b.run(2);
  EXPECT_NE(a.step_losses(), b.step_losses());
}

TEST(TrainerTest, SmallCropSourcesArePadded) {
  TinyRun r = tiny_run();
  r.train = {synthetic_scene(20, 50, 1)};
  r.config.epochs = 1;
  r.config.crops_per_image = 1;
  Trainer t = make_trainer(r);
  EXPECT_NO_THROW(t.run());
}

TEST(CheckpointTest, RoundTripIsBitExact) {
  TempDir dir("ckpt");
  Trainer t = make_trainer(tiny_run());
  t.run(4);
  const Checkpoint c = make_checkpoint(t);
  save_checkpoint(dir / "a.ocsd", c);
  const Checkpoint back = load_checkpoint(dir / "a.ocsd");
  EXPECT_EQ(back.network(), c.network());
  ASSERT_TRUE(back.training.has_value());
  EXPECT_EQ(*back.training, t.config());
  EXPECT_EQ(back.progress, t.progress());
  ASSERT_EQ(back.params.size(), c.params.size());
  for (std::size_t i = 0; i < c.params.size(); ++i) {
    EXPECT_EQ(back.params.name(i), c.params.name(i));
    const auto x = back.params.tensor(i).data();
    const auto y = c.params.tensor(i).data();
    ASSERT_EQ(std::memcmp(x.data(), y.data(), x.size_bytes()), 0);
  }
  ASSERT_TRUE(back.adam.has_value());
  EXPECT_EQ(back.adam->step, c.adam->step);
  EXPECT_EQ(back.adam->m, c.adam->m);
  EXPECT_EQ(back.adam->v, c.adam->v);
  const Tensor<float> x = to_tensor<float>(synthetic_scene(64, 64, 3));
  EXPECT_EQ(predict(back.params, x), predict(c.params, x));
}

TEST(CheckpointTest, ParametersOnly) {
  TempDir dir("ckpt");
  Checkpoint c{init_params<float>(NetworkConfig::tiny()), std::nullopt, std::nullopt, {}};
  save_checkpoint(dir / "p.ocsd", c);
  const Checkpoint back = load_checkpoint(dir / "p.ocsd");
  EXPECT_FALSE(back.adam.has_value());
  EXPECT_FALSE(back.training.has_value());
  for (std::size_t i = 0; i < c.params.size(); ++i) EXPECT_EQ(back.params.tensor(i), c.params.tensor(i));
}

TEST(CheckpointTest, ResumeMatchesUninterrupted) {
  TempDir dir("resume");
  Trainer full = make_trainer(tiny_run());
  full.run();
  for (std::int64_t cut : {1, 3, 4}) {
    const TinyRun r = tiny_run();
    Trainer first = make_trainer(r);
    first.run(cut);
    save_checkpoint(dir / "r.ocsd", make_checkpoint(first));
    Checkpoint c = load_checkpoint(dir / "r.ocsd");
    Trainer second(*c.training, c.params, *c.adam, c.progress, r.train, r.val);
    second.run();
    std::vector<double> losses = first.step_losses();
    losses.insert(losses.end(), second.step_losses().begin(), second.step_losses().end());
    EXPECT_EQ(losses, full.step_losses()) << "cut " << cut;
    EXPECT_EQ(second.progress(), full.progress()) << "cut " << cut;
    for (std::size_t i = 0; i < full.params().size(); ++i) {
      ASSERT_EQ(second.params().tensor(i), full.params().tensor(i)) << "cut " << cut;
    }
  }
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& p, const std::string& bytes) {
  std::ofstream(p, std::ios::binary) << bytes;
}

void expect_load_error(const fs::path& p, const std::string& fragment) {
  try {
    load_checkpoint(p);
    FAIL() << "expected a checkpoint error mentioning " << fragment;
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
  }
}

class CorruptCheckpoint : public ::testing::Test {
 protected:
  void SetUp() override {
    Trainer t = make_trainer(tiny_run());
    t.run(1);
    save_checkpoint(dir_ / "good.ocsd", make_checkpoint(t));
    bytes_ = read_bytes(dir_ / "good.ocsd");
  }
  fs::path write(const std::string& bytes) {
    const fs::path p = dir_ / "bad.ocsd";
    write_bytes(p, bytes);
    return p;
  }
  static std::uint64_t header_length(const std::string& b) {
    std::uint64_t n = 0;
    for (int i = 7; i >= 0; --i) n = (n << 8) | static_cast<unsigned char>(b[8 + i]);
    return n;
  }
  std::string with_header(const nlohmann::json& header) const {
    const std::string text = header.dump();
    std::string out = bytes_.substr(0, 8);
    std::uint64_t n = text.size();
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((n >> (8 * i)) & 0xff));
    out += text;
    out += bytes_.substr(16 + header_length(bytes_));
    return out;
  }
  nlohmann::json header() const {
    return nlohmann::json::parse(bytes_.substr(16, header_length(bytes_)));
  }

  TempDir dir_{"corrupt"};
  std::string bytes_;
};

TEST_F(CorruptCheckpoint, Magic) {
  std::string b = bytes_;
  b[0] = 'X';
  expect_load_error(write(b), "bad magic");
}

TEST_F(CorruptCheckpoint, Version) {
  std::string b = bytes_;
  b[4] = 2;
  expect_load_error(write(b), "version");
}

TEST_F(CorruptCheckpoint, Truncation) {
  expect_load_error(write(bytes_.substr(0, 10)), "truncated");
  expect_load_error(write(bytes_.substr(0, 40)), "truncated");
  expect_load_error(write(bytes_.substr(0, bytes_.size() - 3)), "truncated");
}

TEST_F(CorruptCheckpoint, TrailingBytes) { expect_load_error(write(bytes_ + "xy"), "trailing"); }

TEST_F(CorruptCheckpoint, MalformedHeader) {
  std::string b = bytes_;
  b[16] = '#';
  expect_load_error(write(b), "malformed header");
}

TEST_F(CorruptCheckpoint, ShapeMismatch) {
  nlohmann::json h = header();
  h["tensors"][2]["shape"] = {4, 4, 1, 9};
  expect_load_error(write(with_header(h)), "manifest entry 2");
}

TEST_F(CorruptCheckpoint, HeaderRewriteIsLoadable) {
  EXPECT_NO_THROW(load_checkpoint(write(with_header(header()))));
}

TEST(CheckpointTest, MissingFile) {
  EXPECT_THROW(load_checkpoint("/nonexistent/dir/x.ocsd"), CheckpointError);
}

}  // namespace
}  // namespace ocsd
