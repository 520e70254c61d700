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

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "ocsd/image.hpp"
#include "ocsd/network.hpp"
#include "ocsd/tape.hpp"

namespace ocsd {

// Losses. Both terms use mean reduction over every element of `pred`.

template <typename T>
Var<T> l2_loss(Tape<T>& tape, const Var<T>& pred, const Var<T>& target) {
  return tape.mse(pred, target);
}

template <typename T>
Var<T> tv_loss(Tape<T>& tape, const Var<T>& pred) {
  return tape.total_variation(pred);
}

/// l2_loss + tv_weight * tv_loss.
template <typename T>
Var<T> total_loss(Tape<T>& tape, const Var<T>& pred, const Var<T>& target,
                  T tv_weight) {
  if (tv_weight < T(0)) throw std::invalid_argument("tv_weight must be >= 0");
  return tape.add(l2_loss(tape, pred, target),
                  tape.scale(tv_loss(tape, pred), tv_weight));
}

// ADAM.

struct AdamConfig {
  double learning_rate = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
  std::int64_t step = 0;
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;

  /// Zeroed moments shaped like `params`.
  static AdamState zeros_like(std::span<const Tensor<T>> params);
};

/// One bias-corrected ADAM update applied elementwise:
///   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2,
///   p <- p - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps).
/// Throws std::domain_error, leaving everything untouched, when any gradient
/// is non-finite.
template <typename T>
void adam_step(std::span<Tensor<T>> params, std::span<const Tensor<T>> grads,
               AdamState<T>& state, const AdamConfig& config);

// Training loop.

struct TrainConfig {
  double learning_rate = 2e-4;
  int epochs = 400;
  double tv_weight = 5e-5;
  int crop_size = 128;
  int batch_size = 8;
  int looks = 1;
  int crops_per_image = 1;
  double train_fraction = 0.9;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
  AdamConfig adam() const { return {learning_rate, beta1, beta2, epsilon}; }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  std::optional<double> val_psnr;  // absent without a validation set

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

/// Position of a training run. Every random draw is a pure function of
/// (seed, epoch, image, crop), so this plus the seed is the full RNG state.
struct TrainProgress {
  std::int64_t global_step = 0;
  int epoch = 0;
  std::int64_t step_in_epoch = 0;
  double epoch_loss_sum = 0.0;
  std::int64_t epoch_batches = 0;
  std::vector<EpochRecord> history;

  friend bool operator==(const TrainProgress&, const TrainProgress&) = default;
};

/// One forward/backward/ADAM step on a fixed batch. Returns the batch loss
/// before the update.
double train_step(NetworkParams<float>& params, AdamState<float>& adam,
                  const Tensor<float>& noisy, const Tensor<float>& clean,
                  double tv_weight, const AdamConfig& config);

/// Mean PSNR of clamped predictions over validation images; nullopt for an
/// empty set. Each image is
/// centre-cropped (reflect-padded if needed) to crop_size and speckled with a
/// fixed per-image seed.
std::optional<double> validation_psnr(const NetworkParams<float>& params,
                                      std::span<const ImageGray> images,
                                      int crop_size, int looks,
                                      std::uint64_t seed);

class Trainer {
 public:
  Trainer(TrainConfig config, NetworkParams<float> params,
          std::vector<ImageGray> train_images, std::vector<ImageGray> val_images);

  /// Continues from saved parameters, optimiser state and progress.
  Trainer(TrainConfig config, NetworkParams<float> params, AdamState<float> adam,
          TrainProgress progress, std::vector<ImageGray> train_images,
          std::vector<ImageGray> val_images);

  std::int64_t steps_per_epoch() const;
  std::int64_t total_steps() const;
  bool finished() const;

  /// Runs one optimisation step; closes the epoch (validation + history)
  /// when it was the last step of an epoch. Returns the batch loss.
  double step();

  /// Steps until training finishes or `max_steps` more steps have run.
  void run(std::optional<std::int64_t> max_steps = std::nullopt);

  const TrainConfig& config() const { return config_; }
  const NetworkParams<float>& params() const { return params_; }
  const AdamState<float>& adam() const { return adam_; }
  const TrainProgress& progress() const { return progress_; }
  const std::vector<double>& step_losses() const { return step_losses_; }

 private:
  struct Sample {
    std::size_t image;
    int crop;
  };
  std::vector<Sample> epoch_order(int epoch) const;

  TrainConfig config_;
  NetworkParams<float> params_;
  AdamState<float> adam_;
  TrainProgress progress_;
  std::vector<ImageGray> train_;
  std::vector<ImageGray> val_;
  std::vector<double> step_losses_;
};

extern template struct AdamState<float>;
extern template struct AdamState<double>;

}  // namespace ocsd
