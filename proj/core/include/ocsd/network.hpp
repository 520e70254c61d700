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

// Dual-branch despeckling network.
//
// Overcomplete branch (width C), input x at h x w:
//   enc k : conv3x3 -> bilinear x2 -> relu            (2h, 4h, 8h)
//   dec k : conv3x3 -> maxpool 2x2 -> relu            (4h, 2h, h)
//   the encoder feature at the same scale is added after dec 0 and dec 1.
// Undercomplete branch (widths U0..U4):
//   enc k : conv3x3 -> maxpool 2x2 -> relu            (h/2 ... h/32)
//   dec k : conv3x3 -> bilinear x2 -> relu            (h/16 ... h)
//   the encoder feature at the same scale is added after dec 0..3.
// MSFF (encoder side) resamples the three overcomplete encoder features to
// h/2, maps each to U0 channels with its own 1x1 conv and adds the sum to
// the output of under enc 0. MSFF (decoder side) does the same with the
// three overcomplete decoder features and adds into the input of under dec 4.
// Prediction: conv1x1(over + under), no output activation.

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ocsd/image.hpp"
#include "ocsd/tape.hpp"
#include "ocsd/tensor.hpp"

namespace ocsd {

inline constexpr int kOverDepth = 3;
inline constexpr int kUnderDepth = 5;
/// Spatial sizes fed to the full network must be multiples of this.
inline constexpr std::int64_t kSizeMultiple = 32;

struct NetworkConfig {
  int over_channels = 32;
  std::array<int, kUnderDepth> under_channels{32, 64, 128, 256, 512};
  int input_channels = 1;
  int output_channels = 1;
  std::uint64_t seed = 0;

  /// Smallest configuration used for gradient audits and overfit checks.
  static NetworkConfig tiny();
  /// Desk-scale configuration: a quarter of the default widths.
  static NetworkConfig small();

  /// Throws std::invalid_argument on non-positive widths or channel counts
  /// other than 1.
  void validate() const;

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

struct ParamSpec {
  std::string name;
  Shape shape;
  std::int64_t fan_in = 0;
};

/// Every learnable tensor in forward order. Names look like
/// "over.enc.0.weight", "under.dec.4.bias", "msff.enc.2.weight",
/// "final.weight".
std::vector<ParamSpec> parameter_layout(const NetworkConfig& config);

template <typename T>
class NetworkParams {
 public:
  NetworkParams() = default;
  /// Tensors must follow parameter_layout(config) in order and shape.
  NetworkParams(NetworkConfig config, std::vector<Tensor<T>> tensors);

  const NetworkConfig& config() const { return config_; }
  std::size_t size() const { return tensors_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  Tensor<T>& tensor(std::size_t i) { return tensors_[i]; }
  const Tensor<T>& tensor(std::size_t i) const { return tensors_[i]; }
  std::span<Tensor<T>> tensors() { return tensors_; }
  std::span<const Tensor<T>> tensors() const { return tensors_; }

  /// Index of a named parameter; throws std::out_of_range when absent.
  std::size_t index_of(std::string_view name) const;
  const Tensor<T>& at(std::string_view name) const {
    return tensors_[index_of(name)];
  }
  Tensor<T>& at(std::string_view name) { return tensors_[index_of(name)]; }

  std::int64_t scalar_count() const;

  template <typename U>
  NetworkParams<U> cast() const {
    std::vector<Tensor<U>> out;
    out.reserve(tensors_.size());
    for (const auto& t : tensors_) out.push_back(t.template cast<U>());
    return NetworkParams<U>(config_, std::move(out));
  }

 private:
  NetworkConfig config_{};
  std::vector<std::string> names_;
  std::vector<Tensor<T>> tensors_;
};

/// He initialisation: weights ~ N(0, 2 / fan_in), biases zero. Parameter i
/// draws from the stream derive_seed(config.seed, {streams::kInit, i}).
template <typename T>
NetworkParams<T> init_params(const NetworkConfig& config);

template <typename T>
struct OvercompleteOutputs {
  Var<T> out;                      // (n, C, h, w)
  std::array<Var<T>, kOverDepth> enc;  // 2h, 4h, 8h
  std::array<Var<T>, kOverDepth> dec;  // 4h, 2h, h
};

template <typename T>
struct UndercompleteOutputs {
  Var<T> out;                       // (n, C, h, w)
  std::array<Var<T>, kUnderDepth> enc;  // h/2 ... h/32; enc[0] after MSFF
  std::array<Var<T>, kUnderDepth> dec;  // h/16 ... h
};

enum class MsffSide { kEncoder, kDecoder };

/// Binds a parameter set to a tape and evaluates the network pieces.
template <typename T>
class Network {
 public:
  Network(Tape<T>& tape, const NetworkParams<T>& params, bool requires_grad);

  /// Requires h, w divisible by 8.
  OvercompleteOutputs<T> forward_overcomplete(const Var<T>& input);

  /// Requires h, w divisible by 32. Absent MSFF features skip injection.
  UndercompleteOutputs<T> forward_undercomplete(
      const Var<T>& input, const std::optional<Var<T>>& msff_enc,
      const std::optional<Var<T>>& msff_dec);

  /// Resamples three overcomplete features to (target_h, target_w), maps
  /// each to U0 channels and sums. Encoder-side inputs must be at 4x, 8x and
  /// 16x the target size; decoder-side at 8x, 4x and 2x.
  Var<T> msff(MsffSide side, std::span<const Var<T>, 3> features,
              std::int64_t target_h, std::int64_t target_w);

  /// Full prediction for an (n, 1, h, w) input, h and w divisible by 32.
  Var<T> forward(const Var<T>& noisy);

  const std::vector<Var<T>>& parameters() const { return vars_; }
  const Var<T>& parameter(std::string_view name) const;

 private:
  const Var<T>& p(std::size_t i) const { return vars_[i]; }
  Var<T> conv_block_up(std::size_t weight, const Var<T>& x);
  Var<T> conv_block_down(std::size_t weight, const Var<T>& x);

  Tape<T>& tape_;
  const NetworkParams<T>& params_;
  std::vector<Var<T>> vars_;
};

/// Convenience inference without gradients.
template <typename T>
Tensor<T> predict(const NetworkParams<T>& params, const Tensor<T>& noisy);

/// Original size of an image padded by pad_to_multiple.
struct CropRecord {
  std::int64_t height = 0;
  std::int64_t width = 0;
  bool is_identity(const ImageGray& padded) const {
    return padded.height() == height && padded.width() == width;
  }
};

/// Reflect-pads right/bottom up to the next multiple of `multiple`.
std::pair<ImageGray, CropRecord> pad_to_multiple(const ImageGray& image,
                                                 std::int64_t multiple = kSizeMultiple);
/// Undoes pad_to_multiple.
ImageGray crop_to(const ImageGray& padded, const CropRecord& record);

/// Pads, predicts, crops back and clamps to [0, 1].
ImageGray despeckle(const NetworkParams<float>& params, const ImageGray& noisy);

extern template class NetworkParams<float>;
extern template class NetworkParams<double>;
extern template class Network<float>;
extern template class Network<double>;

}  // namespace ocsd
