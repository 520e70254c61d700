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

#include <benchmark/benchmark.h>

#include "ocsd/kernels.hpp"
#include "ocsd/metrics.hpp"
#include "ocsd/network.hpp"
#include "ocsd/rng.hpp"
#include "ocsd/speckle.hpp"
#include "ocsd/training.hpp"

namespace {

using namespace ocsd;

Tensor<float> random_tensor(Shape shape, std::uint64_t seed) {
  Tensor<float> t(shape);
  Rng rng(seed);
  for (auto& v : t.data()) v = static_cast<float>(rng.uniform() - 0.5);
  return t;
}

ImageGray random_image(std::int64_t size, std::uint64_t seed) {
  ImageGray img(size, size);
  Rng rng(seed);
  for (float& v : img.pixels()) v = static_cast<float>(rng.uniform());
  return img;
}

void BM_Conv3x3Forward(benchmark::State& state) {
  const auto c = state.range(0);
  const auto s = state.range(1);
  const Tensor<float> x = random_tensor({1, c, s, s}, 1);
  const Tensor<float> w = random_tensor({c, c, 3, 3}, 2);
  const Tensor<float> b = random_tensor({1, c, 1, 1}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(kernels::conv3x3_forward(x, w, b));
  state.SetItemsProcessed(state.iterations() * c * c * 9 * s * s);
}
BENCHMARK(BM_Conv3x3Forward)->Args({8, 64})->Args({32, 64})->Args({64, 32});

void BM_NetworkForward(benchmark::State& state) {
  NetworkConfig cfg = NetworkConfig::small();
  const NetworkParams<float> p = init_params<float>(cfg);
  const Tensor<float> x = random_tensor({1, 1, state.range(0), state.range(0)}, 4);
  for (auto _ : state) benchmark::DoNotOptimize(predict(p, x));
}
BENCHMARK(BM_NetworkForward)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  NetworkParams<float> p = init_params<float>(NetworkConfig::small());
  AdamState<float> adam = AdamState<float>::zeros_like(p.tensors());
  const Tensor<float> x = random_tensor({1, 1, 64, 64}, 5);
  const Tensor<float> y = random_tensor({1, 1, 64, 64}, 6);
  for (auto _ : state) benchmark::DoNotOptimize(train_step(p, adam, x, y, 5e-5, {}));
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

void BM_GammaSpeckle(benchmark::State& state) {
  const int looks = static_cast<int>(state.range(0));
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(sample_gamma_speckle(256, 256, looks, seed++));
  state.SetItemsProcessed(state.iterations() * 256 * 256);
}
BENCHMARK(BM_GammaSpeckle)->Arg(1)->Arg(4);

void BM_Ssim(benchmark::State& state) {
  const ImageGray a = random_image(state.range(0), 7);
  const ImageGray b = random_image(state.range(0), 8);
  for (auto _ : state) benchmark::DoNotOptimize(ssim(a, b));
}
BENCHMARK(BM_Ssim)->Arg(128)->Arg(256);

}  // namespace

BENCHMARK_MAIN();
