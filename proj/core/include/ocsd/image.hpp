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
#include <span>
#include <vector>

#include "ocsd/tensor.hpp"

namespace ocsd {

/// Single-channel raster. Pixels are nominally in [0, 1]; intermediate
/// products such as unclipped speckled images may exceed 1 until they are
/// clamped for storage.
class ImageGray {
 public:
  ImageGray() = default;
  ImageGray(std::int64_t height, std::int64_t width, float fill = 0.0f);
  ImageGray(std::int64_t height, std::int64_t width, std::vector<float> pixels);

  std::int64_t height() const { return height_; }
  std::int64_t width() const { return width_; }
  std::int64_t size() const { return height_ * width_; }
  bool empty() const { return pixels_.empty(); }

  float& at(std::int64_t y, std::int64_t x) {
    return pixels_[static_cast<std::size_t>(y * width_ + x)];
  }
  float at(std::int64_t y, std::int64_t x) const {
    return pixels_[static_cast<std::size_t>(y * width_ + x)];
  }
  std::span<float> pixels() { return pixels_; }
  std::span<const float> pixels() const { return pixels_; }

  bool is_normalized() const;

  friend bool operator==(const ImageGray&, const ImageGray&) = default;

 private:
  std::int64_t height_ = 0;
  std::int64_t width_ = 0;
  std::vector<float> pixels_;
};

ImageGray clamp01(ImageGray image);

/// Copies the rectangle [y0, y0+h) x [x0, x0+w); it must lie inside `image`.
ImageGray extract(const ImageGray& image, std::int64_t y0, std::int64_t x0,
                  std::int64_t h, std::int64_t w);

/// Extends `image` on the right and bottom to (h, w) by mirror reflection
/// about the last row/column (edge pixel not repeated), folding as many
/// times as needed.
ImageGray reflect_pad(const ImageGray& image, std::int64_t h, std::int64_t w);

/// Uniformly random crop of size x size; the same seed yields the same crop.
ImageGray random_crop(const ImageGray& image, std::int64_t size,
                      std::uint64_t seed);

/// Stacks images of identical size into an (n, 1, h, w) tensor.
template <typename T>
Tensor<T> to_tensor(std::span<const ImageGray> images);
template <typename T>
Tensor<T> to_tensor(const ImageGray& image) {
  return to_tensor<T>(std::span<const ImageGray>(&image, 1));
}
/// Plane (n, c) of a tensor as an image.
template <typename T>
ImageGray from_tensor(const Tensor<T>& t, std::int64_t n = 0,
                      std::int64_t c = 0);

}  // namespace ocsd
