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

#include "fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "ocsd/image_io.hpp"
#include "ocsd/rng.hpp"

namespace ocsd::testing {

namespace fs = std::filesystem;

ImageGray synthetic_scene(std::int64_t height, std::int64_t width, std::uint64_t seed) {
  Rng rng(seed);
  ImageGray img(height, width);
  const double base = 0.25 + 0.4 * rng.uniform();
  const double gx = (rng.uniform() - 0.5) * 0.3;
  const double gy = (rng.uniform() - 0.5) * 0.3;
  for (std::int64_t y = 0; y < height; ++y) {
    for (std::int64_t x = 0; x < width; ++x) {
      img.at(y, x) = static_cast<float>(base + gx * x / width + gy * y / height);
    }
  }
  const int shapes = 4 + static_cast<int>(rng.below(5));
  for (int s = 0; s < shapes; ++s) {
    const double level = 0.1 + 0.8 * rng.uniform();
    const double cx = rng.uniform() * width;
    const double cy = rng.uniform() * height;
    const double r = (0.08 + 0.25 * rng.uniform()) * std::min(height, width);
    const bool disc = rng.uniform() < 0.5;
    for (std::int64_t y = 0; y < height; ++y) {
      for (std::int64_t x = 0; x < width; ++x) {
        const double dx = x - cx;
        const double dy = y - cy;
        const bool inside = disc ? dx * dx + dy * dy < r * r
                                 : std::abs(dx) < r && std::abs(dy) < 0.6 * r;
        if (inside) img.at(y, x) = static_cast<float>(level);
      }
    }
  }
  const double freq = 2.0 * std::numbers::pi / (6.0 + 10.0 * rng.uniform());
  const double angle = std::numbers::pi * rng.uniform();
  const double amp = 0.05 + 0.05 * rng.uniform();
  for (std::int64_t y = 0; y < height; ++y) {
    for (std::int64_t x = 0; x < width; ++x) {
      const double t = std::cos(angle) * x + std::sin(angle) * y;
      const double v = img.at(y, x) + amp * std::sin(freq * t);
      img.at(y, x) = static_cast<float>(std::clamp(v, 0.05, 0.95));
    }
  }
  return img;
}

std::vector<fs::path> write_scenes(const fs::path& dir, int count, std::int64_t size,
                                   std::uint64_t seed) {
  fs::create_directories(dir);
  std::vector<fs::path> paths;
  for (int i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "scene_%02d.png", i);
    const fs::path p = dir / name;
    save_gray(p, synthetic_scene(size, size, derive_seed(seed, {static_cast<std::uint64_t>(i)})));
    paths.push_back(p);
  }
  return paths;
}

TempDir::TempDir(const std::string& tag) {
  Rng rng(static_cast<std::uint64_t>(
      std::hash<std::string>{}(tag + std::to_string(reinterpret_cast<std::uintptr_t>(this)))));
  for (;;) {
    path_ = fs::temp_directory_path() / ("ocsd-" + tag + "-" + std::to_string(rng.next() % 1000000));
    if (fs::create_directories(path_)) return;
  }
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

}  // namespace ocsd::testing
