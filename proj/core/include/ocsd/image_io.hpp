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
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "ocsd/image.hpp"

namespace ocsd {

class ImageFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reads an 8-bit PNG (grayscale, or RGB converted with BT.601 weights
/// 0.299/0.587/0.114) or a binary PGM (P5, maxval 255). Pixels are divided
/// by 255.
ImageGray load_gray(const std::filesystem::path& path);

/// Writes PNG for ".png" and PGM otherwise, quantising with
/// floor(clamp(v, 0, 1) * 255 + 0.5).
void save_gray(const std::filesystem::path& path, const ImageGray& image);

/// The byte stored for pixel value v.
std::uint8_t quantize(float v);

bool is_image_path(const std::filesystem::path& path);

/// Ordered list of image paths plus its split tag.
struct Dataset {
  std::vector<std::filesystem::path> paths;
  std::string split;  // "train", "val" or "all"
  std::uint64_t seed = 0;
};

/// Non-recursive listing of .png/.pgm files, sorted lexicographically. A
/// single file path yields a one-element dataset.
Dataset list_images(const std::filesystem::path& path_or_dir);

/// Shuffles with the seed, puts floor(fraction * n) paths (at most n - 1,
/// at least 1) in train and the rest in val; each part is sorted. Needs at
/// least two paths.
std::pair<Dataset, Dataset> split_dataset(std::vector<std::filesystem::path> paths,
                                          double train_fraction, std::uint64_t seed);

std::vector<ImageGray> load_all(const Dataset& dataset);

}  // namespace ocsd
