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

#include "ocsd/network.hpp"

#include <cmath>
#include <stdexcept>

#include "ocsd/rng.hpp"

namespace ocsd {

namespace {

// Tensor indices into parameter_layout(); weight at the index, bias after.
constexpr std::size_t kOverEnc = 0;
constexpr std::size_t kOverDec = 6;
constexpr std::size_t kUnderEnc = 12;
constexpr std::size_t kUnderDec = 22;
constexpr std::size_t kMsffEnc = 32;
constexpr std::size_t kMsffDec = 38;
constexpr std::size_t kFinal = 44;
constexpr std::size_t kParamCount = 46;

constexpr std::array<std::int64_t, 3> kMsffEncFactors = {4, 8, 16};
constexpr std::array<std::int64_t, 3> kMsffDecFactors = {8, 4, 2};

void add_conv(std::vector<ParamSpec>& out, const std::string& prefix,
              std::int64_t cout, std::int64_t cin, std::int64_t k) {
  const std::int64_t fan_in = cin * k * k;
  out.push_back({prefix + ".weight", Shape{cout, cin, k, k}, fan_in});
  out.push_back({prefix + ".bias", Shape{1, cout, 1, 1}, fan_in});
}

void require_divisible(const Shape& s, std::int64_t m, const char* what) {
  if (s.h % m != 0 || s.w % m != 0 || s.h == 0 || s.w == 0) {
    throw std::invalid_argument(std::string(what) + ": spatial size " +
                                std::to_string(s.h) + "x" + std::to_string(s.w) +
                                " must be a positive multiple of " +
                                std::to_string(m));
  }
}

}  // namespace

NetworkConfig NetworkConfig::tiny() {
  NetworkConfig c;
  c.over_channels = 4;
  c.under_channels = {4, 8, 16, 32, 64};
  return c;
}

NetworkConfig NetworkConfig::small() {
  NetworkConfig c;
  c.over_channels = 8;
  c.under_channels = {8, 16, 32, 64, 128};
  return c;
}

void NetworkConfig::validate() const {
  if (over_channels < 1) {
    throw std::invalid_argument("over_channels must be >= 1");
  }
  for (int u : under_channels) {
    if (u < 1) throw std::invalid_argument("under_channels must all be >= 1");
  }
  if (input_channels != 1 || output_channels != 1) {
    throw std::invalid_argument("only single-channel input/output is supported");
  }
}

std::vector<ParamSpec> parameter_layout(const NetworkConfig& config) {
  config.validate();
  const std::int64_t c = config.over_channels;
  const auto& u = config.under_channels;
  std::vector<ParamSpec> out;
  out.reserve(kParamCount);
  for (int k = 0; k < kOverDepth; ++k) {
    add_conv(out, "over.enc." + std::to_string(k), c, k == 0 ? config.input_channels : c, 3);
  }
  for (int k = 0; k < kOverDepth; ++k) {
    add_conv(out, "over.dec." + std::to_string(k), c, c, 3);
  }
  for (int k = 0; k < kUnderDepth; ++k) {
    add_conv(out, "under.enc." + std::to_string(k), u[k],
             k == 0 ? config.input_channels : u[k - 1], 3);
  }
  for (int k = 0; k < kUnderDepth; ++k) {
    const std::int64_t cin = u[kUnderDepth - 1 - k];
    const std::int64_t cout = k + 1 < kUnderDepth ? u[kUnderDepth - 2 - k] : c;
    add_conv(out, "under.dec." + std::to_string(k), cout, cin, 3);
  }
  for (int k = 0; k < 3; ++k) add_conv(out, "msff.enc." + std::to_string(k), u[0], c, 1);
  for (int k = 0; k < 3; ++k) add_conv(out, "msff.dec." + std::to_string(k), u[0], c, 1);
  add_conv(out, "final", config.output_channels, c, 1);
  return out;
}

template <typename T>
NetworkParams<T>::NetworkParams(NetworkConfig config, std::vector<Tensor<T>> tensors)
    : config_(config), tensors_(std::move(tensors)) {
  const auto layout = parameter_layout(config_);
  if (tensors_.size() != layout.size()) {
    throw std::invalid_argument("expected " + std::to_string(layout.size()) +
                                " parameter tensors, got " +
                                std::to_string(tensors_.size()));
  }
  names_.reserve(layout.size());
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (!(tensors_[i].shape() == layout[i].shape)) {
      throw std::invalid_argument("parameter " + layout[i].name + " has shape " +
                                  to_string(tensors_[i].shape()) + ", expected " +
                                  to_string(layout[i].shape));
    }
    names_.push_back(layout[i].name);
  }
}

template <typename T>
std::size_t NetworkParams<T>::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return i;
  }
  throw std::out_of_range("no parameter named " + std::string(name));
}

template <typename T>
std::int64_t NetworkParams<T>::scalar_count() const {
  std::int64_t n = 0;
  for (const auto& t : tensors_) n += t.numel();
  return n;
}

template <typename T>
NetworkParams<T> init_params(const NetworkConfig& config) {
  const auto layout = parameter_layout(config);
  std::vector<Tensor<T>> tensors;
  tensors.reserve(layout.size());
  for (std::size_t i = 0; i < layout.size(); ++i) {
    Tensor<T> t(layout[i].shape);
    if (layout[i].name.ends_with(".weight")) {
      Rng rng(derive_seed(config.seed, {streams::kInit, i}));
      const double std = std::sqrt(2.0 / static_cast<double>(layout[i].fan_in));
      for (T& v : t.data()) v = static_cast<T>(std * rng.normal());
    }
    tensors.push_back(std::move(t));
  }
  return NetworkParams<T>(config, std::move(tensors));
}

template <typename T>
Network<T>::Network(Tape<T>& tape, const NetworkParams<T>& params,
                    bool requires_grad)
    : tape_(tape), params_(params) {
  vars_.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    vars_.push_back(tape_.leaf(params.tensor(i), requires_grad));
  }
}

template <typename T>
const Var<T>& Network<T>::parameter(std::string_view name) const {
  return vars_[params_.index_of(name)];
}

template <typename T>
Var<T> Network<T>::conv_block_up(std::size_t weight, const Var<T>& x) {
  return tape_.relu(tape_.upsample2x(tape_.conv3x3(x, p(weight), p(weight + 1))));
}

template <typename T>
Var<T> Network<T>::conv_block_down(std::size_t weight, const Var<T>& x) {
  return tape_.relu(tape_.maxpool2x2(tape_.conv3x3(x, p(weight), p(weight + 1))));
}

template <typename T>
OvercompleteOutputs<T> Network<T>::forward_overcomplete(const Var<T>& input) {
  require_divisible(input.shape(), 8, "overcomplete branch");
  OvercompleteOutputs<T> o;
  o.enc[0] = conv_block_up(kOverEnc, input);
  o.enc[1] = conv_block_up(kOverEnc + 2, o.enc[0]);
  o.enc[2] = conv_block_up(kOverEnc + 4, o.enc[1]);
  o.dec[0] = conv_block_down(kOverDec, o.enc[2]);
  o.dec[1] = conv_block_down(kOverDec + 2, tape_.add(o.dec[0], o.enc[1]));
  o.dec[2] = conv_block_down(kOverDec + 4, tape_.add(o.dec[1], o.enc[0]));
  o.out = o.dec[2];
  return o;
}

template <typename T>
UndercompleteOutputs<T> Network<T>::forward_undercomplete(
    const Var<T>& input, const std::optional<Var<T>>& msff_enc,
    const std::optional<Var<T>>& msff_dec) {
  require_divisible(input.shape(), 32, "undercomplete branch");
  UndercompleteOutputs<T> o;
  o.enc[0] = conv_block_down(kUnderEnc, input);
  if (msff_enc) o.enc[0] = tape_.add(o.enc[0], *msff_enc);
  for (std::size_t k = 1; k < kUnderDepth; ++k) {
    o.enc[k] = conv_block_down(kUnderEnc + 2 * k, o.enc[k - 1]);
  }
  Var<T> x = o.enc[kUnderDepth - 1];
  for (std::size_t k = 0; k < kUnderDepth; ++k) {
    if (k + 1 == kUnderDepth && msff_dec) x = tape_.add(x, *msff_dec);
    o.dec[k] = conv_block_up(kUnderDec + 2 * k, x);
    x = k + 1 < kUnderDepth ? tape_.add(o.dec[k], o.enc[kUnderDepth - 2 - k])
                            : o.dec[k];
  }
  o.out = x;
  return o;
}

template <typename T>
Var<T> Network<T>::msff(MsffSide side, std::span<const Var<T>, 3> features,
                        std::int64_t target_h, std::int64_t target_w) {
  const bool enc = side == MsffSide::kEncoder;
  const auto& factors = enc ? kMsffEncFactors : kMsffDecFactors;
  const std::size_t base = enc ? kMsffEnc : kMsffDec;
  Var<T> total;
  for (std::size_t k = 0; k < 3; ++k) {
    const Shape& s = features[k].shape();
    if (s.h != target_h * factors[k] || s.w != target_w * factors[k]) {
      throw std::invalid_argument(
          std::string("msff: input ") + std::to_string(k) + " has spatial size " +
          std::to_string(s.h) + "x" + std::to_string(s.w) + ", expected " +
          std::to_string(factors[k]) + "x the target " + std::to_string(target_h) +
          "x" + std::to_string(target_w));
    }
    Var<T> y = tape_.conv1x1(tape_.resize_bilinear(features[k], target_h, target_w),
                             p(base + 2 * k), p(base + 2 * k + 1));
    total = k == 0 ? y : tape_.add(total, y);
  }
  return total;
}

template <typename T>
Var<T> Network<T>::forward(const Var<T>& noisy) {
  const Shape& s = noisy.shape();
  if (s.c != params_.config().input_channels) {
    throw std::invalid_argument("network input must have " +
                                std::to_string(params_.config().input_channels) +
                                " channel(s), got " + to_string(s));
  }
  require_divisible(s, kSizeMultiple, "network input");
  OvercompleteOutputs<T> over = forward_overcomplete(noisy);
  const Var<T> me = msff(MsffSide::kEncoder, std::span<const Var<T>, 3>(over.enc),
                         s.h / 2, s.w / 2);
  const Var<T> md = msff(MsffSide::kDecoder, std::span<const Var<T>, 3>(over.dec),
                         s.h / 2, s.w / 2);
  UndercompleteOutputs<T> under = forward_undercomplete(noisy, me, md);
  return tape_.conv1x1(tape_.add(over.out, under.out), p(kFinal), p(kFinal + 1));
}

template <typename T>
Tensor<T> predict(const NetworkParams<T>& params, const Tensor<T>& noisy) {
  Tape<T> tape;
  Network<T> net(tape, params, false);
  return net.forward(tape.constant(noisy)).value();
}

std::pair<ImageGray, CropRecord> pad_to_multiple(const ImageGray& image,
                                                 std::int64_t multiple) {
  if (image.empty()) throw std::invalid_argument("pad_to_multiple: empty image");
  auto round_up = [multiple](std::int64_t v) {
    return (v + multiple - 1) / multiple * multiple;
  };
  CropRecord record{image.height(), image.width()};
  const std::int64_t h = round_up(image.height());
  const std::int64_t w = round_up(image.width());
  if (h == image.height() && w == image.width()) return {image, record};
  return {reflect_pad(image, h, w), record};
}

ImageGray crop_to(const ImageGray& padded, const CropRecord& record) {
  if (record.is_identity(padded)) return padded;
  return extract(padded, 0, 0, record.height, record.width);
}

ImageGray despeckle(const NetworkParams<float>& params, const ImageGray& noisy) {
  auto [padded, record] = pad_to_multiple(noisy);
  const Tensor<float> out = predict(params, to_tensor<float>(padded));
  return clamp01(crop_to(from_tensor(out), record));
}

template class NetworkParams<float>;
template class NetworkParams<double>;
template class Network<float>;
template class Network<double>;
template NetworkParams<float> init_params<float>(const NetworkConfig&);
template NetworkParams<double> init_params<double>(const NetworkConfig&);
template Tensor<float> predict<float>(const NetworkParams<float>&, const Tensor<float>&);
template Tensor<double> predict<double>(const NetworkParams<double>&,
                                        const Tensor<double>&);

}  // namespace ocsd
