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

#include "ocsd/tape.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

#include "ocsd/kernels.hpp"
#include "ocsd/rng.hpp"

namespace ocsd {

namespace {

constexpr std::array<std::string_view, 12> kOpNames = {
    "leaf", "conv3x3", "conv1x1", "maxpool2x2", "resize_bilinear", "relu",
    "add",  "mul",     "scale",   "sum",        "mse",             "total_variation",
};

template <typename T>
Tensor<T>& ensure_grad(Node<T>& node) {
  if (node.grad.empty() && node.value.numel() > 0) {
    node.grad = Tensor<T>(node.value.shape());
  }
  return node.grad;
}

// Gradient sink for input `i` of `node`, or null when that input does not
// require a gradient.
template <typename T>
Tensor<T>* sink(Node<T>& node, std::size_t i) {
  Node<T>* in = node.inputs[i].get();
  if (in == nullptr || !in->requires_grad) return nullptr;
  return &ensure_grad(*in);
}

}  // namespace

std::string_view op_name(Op op) {
  return kOpNames[static_cast<std::size_t>(op)];
}

std::optional<Op> op_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kOpNames.size(); ++i) {
    if (kOpNames[i] == name) return static_cast<Op>(i);
  }
  return std::nullopt;
}

template <typename T>
Tensor<T> Var<T>::grad() const {
  if (node_->grad.empty()) return Tensor<T>(node_->value.shape());
  return node_->grad;
}

template <typename T>
Var<T> Tape<T>::leaf(Tensor<T> value, bool requires_grad) {
  auto node = std::make_shared<Node<T>>();
  node->op = Op::kLeaf;
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  if (requires_grad) nodes_.push_back(node);
  return Var<T>(std::move(node));
}

template <typename T>
Var<T> Tape<T>::record(Op op, Tensor<T> value,
                       std::initializer_list<const Var<T>*> inputs) {
  auto node = std::make_shared<Node<T>>();
  node->op = op;
  node->value = std::move(value);
  for (const Var<T>* in : inputs) {
    if (in->requires_grad()) node->requires_grad = true;
  }
  if (node->requires_grad) {
    std::size_t i = 0;
    for (const Var<T>* in : inputs) node->inputs[i++] = in->node();
    nodes_.push_back(node);
  }
  return Var<T>(std::move(node));
}

template <typename T>
Var<T> Tape<T>::conv3x3(const Var<T>& x, const Var<T>& weight,
                        const Var<T>& bias) {
  return record(Op::kConv3x3,
                kernels::conv3x3_forward(x.value(), weight.value(), bias.value()),
                {&x, &weight, &bias});
}

template <typename T>
Var<T> Tape<T>::conv1x1(const Var<T>& x, const Var<T>& weight,
                        const Var<T>& bias) {
  return record(Op::kConv1x1,
                kernels::conv1x1_forward(x.value(), weight.value(), bias.value()),
                {&x, &weight, &bias});
}

template <typename T>
Var<T> Tape<T>::maxpool2x2(const Var<T>& x) {
  std::vector<std::int64_t> argmax;
  Var<T> out =
      record(Op::kMaxPool2x2, kernels::maxpool2x2_forward(x.value(), argmax),
             {&x});
  if (track_branches_) {
    for (const std::int64_t a : argmax) fold(static_cast<std::uint64_t>(a));
  }
  if (out.requires_grad()) out.node()->argmax = std::move(argmax);
  return out;
}

template <typename T>
Var<T> Tape<T>::upsample2x(const Var<T>& x) {
  return resize_bilinear(x, 2 * x.shape().h, 2 * x.shape().w);
}

template <typename T>
Var<T> Tape<T>::resize_bilinear(const Var<T>& x, std::int64_t out_h,
                                std::int64_t out_w) {
  return record(Op::kResizeBilinear,
                kernels::resize_bilinear_forward(x.value(), out_h, out_w),
                {&x});
}

template <typename T>
Var<T> Tape<T>::relu(const Var<T>& x) {
  if (track_branches_) {
    const Tensor<T>& v = x.value();
    std::uint64_t word = 0;
    for (std::int64_t k = 0; k < v.numel(); ++k) {
      word = (word << 1) | (v[k] > T(0) ? 1U : 0U);
      if (k % 64 == 63) {
        fold(word);
        word = 0;
      }
    }
    fold(word);
  }
  return record(Op::kRelu, kernels::relu_forward(x.value()), {&x});
}

template <typename T>
void Tape<T>::fold(std::uint64_t word) {
  signature_ = mix64(signature_ ^ mix64(word));
}

template <typename T>
Var<T> Tape<T>::add(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor<T> out(a.shape());
  for (std::int64_t k = 0; k < out.numel(); ++k) {
    out[k] = a.value()[k] + b.value()[k];
  }
  return record(Op::kAdd, std::move(out), {&a, &b});
}

template <typename T>
Var<T> Tape<T>::mul(const Var<T>& a, const Var<T>& b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  Tensor<T> out(a.shape());
  for (std::int64_t k = 0; k < out.numel(); ++k) {
    out[k] = a.value()[k] * b.value()[k];
  }
  return record(Op::kMul, std::move(out), {&a, &b});
}

template <typename T>
Var<T> Tape<T>::scale(const Var<T>& a, T factor) {
  Tensor<T> out(a.shape());
  for (std::int64_t k = 0; k < out.numel(); ++k) out[k] = a.value()[k] * factor;
  Var<T> v = record(Op::kScale, std::move(out), {&a});
  v.node()->scalar = factor;
  return v;
}

template <typename T>
Var<T> Tape<T>::sum(const Var<T>& a) {
  double acc = 0.0;
  for (T v : a.value().data()) acc += v;
  return record(Op::kSum, Tensor<T>::scalar(static_cast<T>(acc)), {&a});
}

template <typename T>
Var<T> Tape<T>::mse(const Var<T>& pred, const Var<T>& target) {
  require_same_shape(pred.shape(), target.shape(), "mse");
  double acc = 0.0;
  const auto& p = pred.value();
  const auto& t = target.value();
  for (std::int64_t k = 0; k < p.numel(); ++k) {
    const double d = static_cast<double>(p[k]) - static_cast<double>(t[k]);
    acc += d * d;
  }
  const double mean = p.numel() > 0 ? acc / static_cast<double>(p.numel()) : 0.0;
  return record(Op::kMeanSquaredError, Tensor<T>::scalar(static_cast<T>(mean)),
                {&pred, &target});
}

template <typename T>
Var<T> Tape<T>::total_variation(const Var<T>& pred) {
  const Shape& s = pred.shape();
  if (s.h < 2 || s.w < 2) {
    throw std::invalid_argument("total_variation: spatial size " +
                                std::to_string(s.h) + "x" +
                                std::to_string(s.w) + " is below 2x2");
  }
  const double raw = static_cast<double>(kernels::total_variation_sum(pred.value()));
  return record(Op::kTotalVariation,
                Tensor<T>::scalar(static_cast<T>(raw / static_cast<double>(s.numel()))),
                {&pred});
}

template <typename T>
void Tape<T>::backward(const Var<T>& loss) {
  if (!(loss.shape() == Shape{1, 1, 1, 1})) {
    throw std::invalid_argument("backward requires a scalar (1,1,1,1) loss, got " +
                                to_string(loss.shape()));
  }
  if (!loss.requires_grad()) return;
  ensure_grad(*loss.node())[0] += T(1);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node<T>& node = **it;
    if (node.op == Op::kLeaf || node.grad.empty()) continue;
    backward_node(node);
  }
}

template <typename T>
void Tape<T>::backward_node(Node<T>& node) {
  Tensor<T> faulted;
  const Tensor<T>* g = &node.grad;
  if (fault_ && fault_->op == node.op) {
    faulted = node.grad;
    for (T& v : faulted.data()) v *= fault_->factor;
    g = &faulted;
  }
  const Tensor<T>* in0 = node.inputs[0] ? &node.inputs[0]->value : nullptr;
  switch (node.op) {
    case Op::kLeaf:
      break;
    case Op::kConv3x3:
      kernels::conv3x3_backward(*in0, node.inputs[1]->value, *g, sink(node, 0),
                                sink(node, 1), sink(node, 2));
      break;
    case Op::kConv1x1:
      kernels::conv1x1_backward(*in0, node.inputs[1]->value, *g, sink(node, 0),
                                sink(node, 1), sink(node, 2));
      break;
    case Op::kMaxPool2x2:
      if (Tensor<T>* gi = sink(node, 0)) {
        kernels::maxpool2x2_backward(node.argmax, *g, *gi);
      }
      break;
    case Op::kResizeBilinear:
      if (Tensor<T>* gi = sink(node, 0)) kernels::resize_bilinear_backward(*g, *gi);
      break;
    case Op::kRelu:
      if (Tensor<T>* gi = sink(node, 0)) kernels::relu_backward(*in0, *g, *gi);
      break;
    case Op::kAdd:
      for (std::size_t i = 0; i < 2; ++i) {
        if (Tensor<T>* gi = sink(node, i)) {
          for (std::int64_t k = 0; k < gi->numel(); ++k) (*gi)[k] += (*g)[k];
        }
      }
      break;
    case Op::kMul: {
      // Read both factors before accumulating: a and b may be the same node.
      const Tensor<T>& a = node.inputs[0]->value;
      const Tensor<T>& b = node.inputs[1]->value;
      if (Tensor<T>* ga = sink(node, 0)) {
        for (std::int64_t k = 0; k < ga->numel(); ++k) (*ga)[k] += (*g)[k] * b[k];
      }
      if (Tensor<T>* gb = sink(node, 1)) {
        for (std::int64_t k = 0; k < gb->numel(); ++k) (*gb)[k] += (*g)[k] * a[k];
      }
      break;
    }
    case Op::kScale:
      if (Tensor<T>* gi = sink(node, 0)) {
        for (std::int64_t k = 0; k < gi->numel(); ++k) {
          (*gi)[k] += (*g)[k] * node.scalar;
        }
      }
      break;
    case Op::kSum:
      if (Tensor<T>* gi = sink(node, 0)) {
        const T s = (*g)[0];
        for (T& v : gi->data()) v += s;
      }
      break;
    case Op::kMeanSquaredError: {
      const Tensor<T>& p = node.inputs[0]->value;
      const Tensor<T>& t = node.inputs[1]->value;
      const T k2 = T(2) * (*g)[0] / static_cast<T>(p.numel());
      Tensor<T>* gp = sink(node, 0);
      Tensor<T>* gt = sink(node, 1);
      for (std::int64_t k = 0; k < p.numel(); ++k) {
        const T d = k2 * (p[k] - t[k]);
        if (gp != nullptr) (*gp)[k] += d;
        if (gt != nullptr) (*gt)[k] -= d;
      }
      break;
    }
    case Op::kTotalVariation:
      if (Tensor<T>* gi = sink(node, 0)) {
        kernels::total_variation_backward(*in0, (*g)[0] / static_cast<T>(in0->numel()),
                                          *gi);
      }
      break;
  }
}

template class Var<float>;
template class Var<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace ocsd
