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

// Forward and backward kernels for the operations the despeckling network
// uses. These are tape-free; `Tape` records calls to them. Backward kernels
// accumulate (+=) into their gradient outputs, and a null output pointer
// skips that gradient.

#pragma once

#include <cstdint>
#include <vector>

#include "ocsd/tensor.hpp"

namespace ocsd::kernels {

/// 3x3 convolution, stride 1, zero padding 1. weight is (cout, cin, 3, 3),
/// bias is (1, cout, 1, 1).
template <typename T>
Tensor<T> conv3x3_forward(const Tensor<T>& input, const Tensor<T>& weight,
                          const Tensor<T>& bias);
template <typename T>
void conv3x3_backward(const Tensor<T>& input, const Tensor<T>& weight,
                      const Tensor<T>& grad_out, Tensor<T>* grad_input,
                      Tensor<T>* grad_weight, Tensor<T>* grad_bias);

/// Per-pixel channel mixing. weight is (cout, cin, 1, 1).
template <typename T>
Tensor<T> conv1x1_forward(const Tensor<T>& input, const Tensor<T>& weight,
                          const Tensor<T>& bias);
template <typename T>
void conv1x1_backward(const Tensor<T>& input, const Tensor<T>& weight,
                      const Tensor<T>& grad_out, Tensor<T>* grad_input,
                      Tensor<T>* grad_weight, Tensor<T>* grad_bias);

/// 2x2 max pooling with stride 2. `argmax` receives, for every output
/// element, the flat input index of the selected value; ties resolve to the
/// first position in row-major window order.
template <typename T>
Tensor<T> maxpool2x2_forward(const Tensor<T>& input,
                             std::vector<std::int64_t>& argmax);
template <typename T>
void maxpool2x2_backward(const std::vector<std::int64_t>& argmax,
                         const Tensor<T>& grad_out, Tensor<T>& grad_input);

/// Bilinear resampling to (out_h, out_w) with half-pixel centres: output
/// index y samples input coordinate (y + 0.5) * in_h / out_h - 0.5, clamped
/// to the valid range. Covers both 2x upsampling and integer-factor
/// downsampling.
template <typename T>
Tensor<T> resize_bilinear_forward(const Tensor<T>& input, std::int64_t out_h,
                                  std::int64_t out_w);
/// Exact adjoint of resize_bilinear_forward.
template <typename T>
void resize_bilinear_backward(const Tensor<T>& grad_out, Tensor<T>& grad_input);

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& input);
template <typename T>
void relu_backward(const Tensor<T>& input, const Tensor<T>& grad_out,
                   Tensor<T>& grad_input);

/// Raw anisotropic total variation: sum of |x[y+1,x] - x[y,x]| and
/// |x[y,x+1] - x[y,x]| over valid neighbours of every plane.
template <typename T>
T total_variation_sum(const Tensor<T>& input);
/// Adds scale * d(total_variation_sum)/d(input) to grad_input, with
/// sign(0) = 0.
template <typename T>
void total_variation_backward(const Tensor<T>& input, T scale,
                              Tensor<T>& grad_input);

}  // namespace ocsd::kernels
