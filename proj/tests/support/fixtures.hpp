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
#include <vector>

#include "ocsd/image.hpp"

namespace ocsd::testing {

/// Piecewise-smooth scene in [0.05, 0.95]: a shaded background plus random
/// rectangles, discs and a soft stripe pattern.
ImageGray synthetic_scene(std::int64_t height, std::int64_t width, std::uint64_t seed);

/// Writes `count` scenes as scene_XX.png and returns their paths.
std::vector<std::filesystem::path> write_scenes(const std::filesystem::path& dir, int count,
                                                std::int64_t size, std::uint64_t seed);

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace ocsd::testing
