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

#include "ocsd/training.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "ocsd/metrics.hpp"
#include "ocsd/rng.hpp"
#include "ocsd/speckle.hpp"

namespace ocsd {

template <typename T>
AdamState<T> AdamState<T>::zeros_like(std::span<const Tensor<T>> params) {
  AdamState<T> s;
  for (const auto& p : params) {
    s.m.emplace_back(p.shape());
    s.v.emplace_back(p.shape());
  }
  return s;
}

template <typename T>
void adam_step(std::span<Tensor<T>> params, std::span<const Tensor<T>> grads,
               AdamState<T>& state, const AdamConfig& config) {
  if (grads.size() != params.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw std::invalid_argument("adam_step: parameter, gradient and moment counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    require_same_shape(params[i].shape(), grads[i].shape(), "adam_step gradient");
    require_same_shape(params[i].shape(), state.m[i].shape(), "adam_step moment");
    if (!grads[i].all_finite()) {
      throw std::domain_error("adam_step: non-finite gradient in parameter tensor " +
                              std::to_string(i) + "; step rejected");
    }
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const T b1 = static_cast<T>(config.beta1);
  const T b2 = static_cast<T>(config.beta2);
  const T one_b1 = static_cast<T>(1.0 - config.beta1);
  const T one_b2 = static_cast<T>(1.0 - config.beta2);
  const T bc1 = static_cast<T>(1.0 - std::pow(config.beta1, t));
  const T bc2 = static_cast<T>(1.0 - std::pow(config.beta2, t));
  const T lr = static_cast<T>(config.learning_rate);
  const T eps = static_cast<T>(config.epsilon);
  for (std::size_t i = 0; i < params.size(); ++i) {
    T* p = params[i].raw();
    T* m = state.m[i].raw();
    T* v = state.v[i].raw();
    const T* g = grads[i].raw();
    for (std::int64_t k = 0; k < params[i].numel(); ++k) {
      m[k] = b1 * m[k] + one_b1 * g[k];
      v[k] = b2 * v[k] + one_b2 * (g[k] * g[k]);
      p[k] -= lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + eps);
    }
  }
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument(msg); };
  if (!(learning_rate > 0.0)) fail("learning_rate must be > 0");
  if (epochs < 0) fail("epochs must be >= 0");
  if (!(tv_weight >= 0.0)) fail("tv_weight must be >= 0");
  if (crop_size < 1 || crop_size % kSizeMultiple != 0) {
    fail("crop_size must be a positive multiple of " + std::to_string(kSizeMultiple) +
         ", got " + std::to_string(crop_size));
  }
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (looks < 1) fail("looks must be >= 1");
  if (crops_per_image < 1) fail("crops_per_image must be >= 1");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    fail("train_fraction must lie in (0, 1)");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    fail("adam betas must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) fail("adam epsilon must be > 0");
}

double train_step(NetworkParams<float>& params, AdamState<float>& adam,
                  const Tensor<float>& noisy, const Tensor<float>& clean,
                  double tv_weight, const AdamConfig& config) {
  Tape<float> tape;
  Network<float> net(tape, params, true);
  const Var<float> pred = net.forward(tape.constant(noisy));
  const Var<float> loss =
      total_loss(tape, pred, tape.constant(clean), static_cast<float>(tv_weight));
  tape.backward(loss);
  std::vector<Tensor<float>> grads;
  grads.reserve(params.size());
  for (const auto& v : net.parameters()) grads.push_back(v.grad());
  adam_step(params.tensors(), std::span<const Tensor<float>>(grads), adam, config);
  return loss.value().item();
}

namespace {

ImageGray fit_crop_source(const ImageGray& image, std::int64_t crop) {
  if (image.height() >= crop && image.width() >= crop) return image;
  return reflect_pad(image, std::max(image.height(), crop),
                     std::max(image.width(), crop));
}

ImageGray centre_crop(const ImageGray& image, std::int64_t crop) {
  const ImageGray src = fit_crop_source(image, crop);
  return extract(src, (src.height() - crop) / 2, (src.width() - crop) / 2, crop, crop);
}

}  // namespace

std::optional<double> validation_psnr(const NetworkParams<float>& params,
                                      std::span<const ImageGray> images,
                                      int crop_size, int looks,
                                      std::uint64_t seed) {
  if (images.empty()) return std::nullopt;
  double total = 0.0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const ImageGray clean = centre_crop(images[i], crop_size);
    const ImageGray noisy =
        apply_speckle(clean, looks, derive_seed(seed, {streams::kValidation, i}));
    const Tensor<float> out = predict(params, to_tensor<float>(noisy));
    const double p = psnr(clean, clamp01(from_tensor(out)));
    // Cap a perfect reconstruction so the mean stays finite.
    total += std::isinf(p) ? 100.0 : p;
  }
  return total / static_cast<double>(images.size());
}

Trainer::Trainer(TrainConfig config, NetworkParams<float> params,
                 std::vector<ImageGray> train_images, std::vector<ImageGray> val_images)
    : Trainer(config, params, AdamState<float>::zeros_like(params.tensors()),
              TrainProgress{}, std::move(train_images), std::move(val_images)) {}

Trainer::Trainer(TrainConfig config, NetworkParams<float> params, AdamState<float> adam,
                 TrainProgress progress, std::vector<ImageGray> train_images,
                 std::vector<ImageGray> val_images)
    : config_(config),
      params_(std::move(params)),
      adam_(std::move(adam)),
      progress_(std::move(progress)),
      train_(std::move(train_images)),
      val_(std::move(val_images)) {
  config_.validate();
  if (train_.empty()) throw std::invalid_argument("training set is empty");
  if (adam_.m.size() != params_.size()) {
    throw std::invalid_argument("optimiser state does not match the parameter set");
  }
  if (progress_.step_in_epoch >= steps_per_epoch() && progress_.step_in_epoch != 0) {
    throw std::invalid_argument("training progress is inconsistent with the dataset");
  }
}

std::int64_t Trainer::steps_per_epoch() const {
  const auto samples = static_cast<std::int64_t>(train_.size()) * config_.crops_per_image;
  return (samples + config_.batch_size - 1) / config_.batch_size;
}

std::int64_t Trainer::total_steps() const {
  return steps_per_epoch() * config_.epochs;
}

bool Trainer::finished() const { return progress_.epoch >= config_.epochs; }

std::vector<Trainer::Sample> Trainer::epoch_order(int epoch) const {
  std::vector<Sample> order;
  order.reserve(train_.size() * static_cast<std::size_t>(config_.crops_per_image));
  for (std::size_t i = 0; i < train_.size(); ++i) {
    for (int j = 0; j < config_.crops_per_image; ++j) order.push_back({i, j});
  }
  Rng rng(derive_seed(config_.seed,
                      {streams::kShuffle, static_cast<std::uint64_t>(epoch)}));
  for (std::size_t k = order.size(); k > 1; --k) {
    std::swap(order[k - 1], order[rng.below(k)]);
  }
  return order;
}

double Trainer::step() {
  if (finished()) throw std::logic_error("training already finished");
  const int epoch = progress_.epoch;
  const std::vector<Sample> order = epoch_order(epoch);
  const std::int64_t crop = config_.crop_size;
  const auto begin = static_cast<std::size_t>(progress_.step_in_epoch * config_.batch_size);
  const std::size_t end =
      std::min(order.size(), begin + static_cast<std::size_t>(config_.batch_size));
  std::vector<ImageGray> clean;
  std::vector<ImageGray> noisy;
  for (std::size_t k = begin; k < end; ++k) {
    const Sample& s = order[k];
    const auto e = static_cast<std::uint64_t>(epoch);
    const auto j = static_cast<std::uint64_t>(s.crop);
    ImageGray patch = random_crop(fit_crop_source(train_[s.image], crop), crop,
                                  derive_seed(config_.seed, {streams::kCrop, e, s.image, j}));
    noisy.push_back(apply_speckle(
        patch, config_.looks, derive_seed(config_.seed, {streams::kSpeckle, e, s.image, j})));
    clean.push_back(std::move(patch));
  }
  const double loss =
      train_step(params_, adam_, to_tensor<float>(noisy), to_tensor<float>(clean),
                 config_.tv_weight, config_.adam());
  step_losses_.push_back(loss);
  progress_.global_step += 1;
  progress_.step_in_epoch += 1;
  progress_.epoch_loss_sum += loss;
  progress_.epoch_batches += 1;
  if (progress_.step_in_epoch == steps_per_epoch()) {
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.train_loss = progress_.epoch_loss_sum / static_cast<double>(progress_.epoch_batches);
    rec.val_psnr = validation_psnr(params_, val_, config_.crop_size, config_.looks,
                                   config_.seed);
    progress_.history.push_back(rec);
    progress_.epoch += 1;
    progress_.step_in_epoch = 0;
    progress_.epoch_loss_sum = 0.0;
    progress_.epoch_batches = 0;
  }
  return loss;
}

void Trainer::run(std::optional<std::int64_t> max_steps) {
  std::int64_t done = 0;
  while (!finished() && (!max_steps || done < *max_steps)) {
    step();
    ++done;
  }
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step<float>(std::span<Tensor<float>>, std::span<const Tensor<float>>,
                               AdamState<float>&, const AdamConfig&);
template void adam_step<double>(std::span<Tensor<double>>, std::span<const Tensor<double>>,
                                AdamState<double>&, const AdamConfig&);

}  // namespace ocsd
