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

#include "ocsd/image.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "ocsd/rng.hpp"

namespace ocsd {

namespace {

std::int64_t reflect_index(std::int64_t i, std::int64_t n) {
  if (n == 1) return 0;
  const std::int64_t period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

}  // namespace

ImageGray::ImageGray(std::int64_t height, std::int64_t width, float fill)
    : height_(height), width_(width) {
  if (height < 0 || width < 0) {
    throw std::invalid_argument("ImageGray: negative dimensions");
  }
  pixels_.assign(static_cast<std::size_t>(height * width), fill);
}

ImageGray::ImageGray(std::int64_t height, std::int64_t width,
                     std::vector<float> pixels)
    : height_(height), width_(width), pixels_(std::move(pixels)) {
  if (height < 0 || width < 0 ||
      static_cast<std::int64_t>(pixels_.size()) != height * width) {
    throw std::invalid_argument("ImageGray: pixel count does not match " +
                                std::to_string(height) + "x" +
                                std::to_string(width));
  }
}

bool ImageGray::is_normalized() const {
  return std::all_of(pixels_.begin(), pixels_.end(),
                     [](float v) { return v >= 0.0f && v <= 1.0f; });
}

ImageGray clamp01(ImageGray image) {
  for (float& v : image.pixels()) v = std::clamp(v, 0.0f, 1.0f);
  return image;
}

ImageGray extract(const ImageGray& image, std::int64_t y0, std::int64_t x0,
                  std::int64_t h, std::int64_t w) {
  if (y0 < 0 || x0 < 0 || h < 0 || w < 0 || y0 + h > image.height() ||
      x0 + w > image.width()) {
    throw std::out_of_range("extract: rectangle outside image bounds");
  }
  ImageGray out(h, w);
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) out.at(y, x) = image.at(y0 + y, x0 + x);
  }
  return out;
}

ImageGray reflect_pad(const ImageGray& image, std::int64_t h, std::int64_t w) {
  if (image.empty()) throw std::invalid_argument("reflect_pad: empty image");
  if (h < image.height() || w < image.width()) {
    throw std::invalid_argument("reflect_pad: target smaller than image");
  }
  ImageGray out(h, w);
  for (std::int64_t y = 0; y < h; ++y) {
    const std::int64_t sy = reflect_index(y, image.height());
    for (std::int64_t x = 0; x < w; ++x) {
      out.at(y, x) = image.at(sy, reflect_index(x, image.width()));
    }
  }
  return out;
}

ImageGray random_crop(const ImageGray& image, std::int64_t size,
                      std::uint64_t seed) {
  if (size < 1 || image.height() < size || image.width() < size) {
    throw std::invalid_argument(
        "random_crop: crop " + std::to_string(size) + " exceeds image " +
        std::to_string(image.height()) + "x" + std::to_string(image.width()));
  }
  Rng rng(seed);
  const auto y0 = static_cast<std::int64_t>(
      rng.below(static_cast<std::uint64_t>(image.height() - size + 1)));
  const auto x0 = static_cast<std::int64_t>(
      rng.below(static_cast<std::uint64_t>(image.width() - size + 1)));
  return extract(image, y0, x0, size, size);
}

template <typename T>
Tensor<T> to_tensor(std::span<const ImageGray> images) {
  if (images.empty()) throw std::invalid_argument("to_tensor: no images");
  const std::int64_t h = images[0].height();
  const std::int64_t w = images[0].width();
  Tensor<T> t(Shape{static_cast<std::int64_t>(images.size()), 1, h, w});
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].height() != h || images[i].width() != w) {
      throw std::invalid_argument("to_tensor: images differ in size");
    }
    const auto px = images[i].pixels();
    std::copy(px.begin(), px.end(),
              t.raw() + static_cast<std::int64_t>(i) * h * w);
  }
  return t;
}

template <typename T>
ImageGray from_tensor(const Tensor<T>& t, std::int64_t n, std::int64_t c) {
  const Shape& s = t.shape();
  ImageGray img(s.h, s.w);
  const T* src = t.raw() + (n * s.c + c) * s.plane();
  auto px = img.pixels();
  for (std::int64_t k = 0; k < s.plane(); ++k) {
    px[static_cast<std::size_t>(k)] = static_cast<float>(src[k]);
  }
  return img;
}

template Tensor<float> to_tensor<float>(std::span<const ImageGray>);
template Tensor<double> to_tensor<double>(std::span<const ImageGray>);
template ImageGray from_tensor<float>(const Tensor<float>&, std::int64_t,
                                      std::int64_t);
template ImageGray from_tensor<double>(const Tensor<double>&, std::int64_t,
                                       std::int64_t);

}  // namespace ocsd
