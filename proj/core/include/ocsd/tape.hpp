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

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string_view>
#include <vector>

#include "ocsd/tensor.hpp"

namespace ocsd {

enum class Op : std::uint8_t {
  kLeaf,
  kConv3x3,
  kConv1x1,
  kMaxPool2x2,
  kResizeBilinear,
  kRelu,
  kAdd,
  kMul,
  kScale,
  kSum,
  kMeanSquaredError,
  kTotalVariation,
};

std::string_view op_name(Op op);
/// Inverse of op_name; nullopt for unknown names.
std::optional<Op> op_from_name(std::string_view name);

template <typename T>
struct Node {
  Op op = Op::kLeaf;
  Tensor<T> value;
  Tensor<T> grad;  // allocated lazily during backward
  bool requires_grad = false;
  std::array<std::shared_ptr<Node>, 3> inputs{};
  std::vector<std::int64_t> argmax;  // max-pool routing
  T scalar = T(0);                  // scale factor for kScale
};

/// Handle to a value participating in a computation.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  const Tensor<T>& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_->requires_grad; }
  bool valid() const { return node_ != nullptr; }

  /// Gradient filled by Tape::backward. Zero-filled when this value did not
  /// influence the loss.
  Tensor<T> grad() const;

  const std::shared_ptr<Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Records operations in execution order and replays them in reverse.
///
/// A node is recorded only when at least one input requires a gradient, so
/// a forward pass over non-differentiable leaves keeps no intermediates alive
/// beyond the caller's handles. One tape serves one forward/backward pass and
/// must not be shared across threads.
template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> leaf(Tensor<T> value, bool requires_grad);
  Var<T> constant(Tensor<T> value) { return leaf(std::move(value), false); }

  Var<T> conv3x3(const Var<T>& x, const Var<T>& weight, const Var<T>& bias);
  Var<T> conv1x1(const Var<T>& x, const Var<T>& weight, const Var<T>& bias);
  Var<T> maxpool2x2(const Var<T>& x);
  Var<T> upsample2x(const Var<T>& x);
  Var<T> resize_bilinear(const Var<T>& x, std::int64_t out_h,
                         std::int64_t out_w);
  Var<T> relu(const Var<T>& x);
  Var<T> add(const Var<T>& a, const Var<T>& b);
  Var<T> mul(const Var<T>& a, const Var<T>& b);
  Var<T> scale(const Var<T>& a, T factor);
  Var<T> sum(const Var<T>& a);
  /// Mean of squared differences over all elements.
  Var<T> mse(const Var<T>& pred, const Var<T>& target);
  /// Anisotropic total variation divided by the element count.
  Var<T> total_variation(const Var<T>& pred);

  /// Reverse pass from a (1,1,1,1) loss. Visits every recorded node once.
  void backward(const Var<T>& loss);

  std::size_t size() const { return nodes_.size(); }

  /// When enabled, relu masks and max-pool argmax choices are folded into
  /// branch_signature(). Two evaluations with equal signatures took the same
  /// piecewise-linear branch everywhere.
  void track_branches(bool on) { track_branches_ = on; }
  std::uint64_t branch_signature() const { return signature_; }

  /// Test hook: multiplies every input gradient produced by `op` by factor.
  void inject_fault(Op op, T factor) { fault_ = Fault{op, factor}; }

 private:
  struct Fault {
    Op op;
    T factor;
  };

  Var<T> record(Op op, Tensor<T> value,
                std::initializer_list<const Var<T>*> inputs);
  void backward_node(Node<T>& node);
  void fold(std::uint64_t word);

  std::vector<std::shared_ptr<Node<T>>> nodes_;
  std::optional<Fault> fault_;
  bool track_branches_ = false;
  std::uint64_t signature_ = 0;
};

extern template class Var<float>;
extern template class Var<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace ocsd
