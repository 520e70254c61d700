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

// Checkpoint file layout (all integers little-endian):
//
//   offset 0   4 bytes   magic "OCSD"
//   offset 4   u32       format version (currently 1)
//   offset 8   u64       header length H in bytes
//   offset 16  H bytes   UTF-8 JSON header
//   then       payload   f32 little-endian tensor data, concatenated in
//                        manifest order, and nothing after it
//
// The header holds "network" (NetworkConfig), "training" (TrainConfig or
// null), "progress" (epoch counter, step position, loss history), "rng"
// (seed plus step position; every stream is derived from these), "adam"
// (step counter or null) and "tensors", the manifest: an array of
// {"name", "dtype": "f32", "shape": [n, c, h, w]}. Parameters come first, in
// network layout order, followed by "adam.m.<name>" and "adam.v.<name>" when
// an optimiser state is stored.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>

#include "ocsd/network.hpp"
#include "ocsd/training.hpp"

namespace ocsd {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  NetworkParams<float> params;
  std::optional<AdamState<float>> adam;
  std::optional<TrainConfig> training;
  TrainProgress progress;

  const NetworkConfig& network() const { return params.config(); }
};

/// Writes atomically (temporary file + rename).
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);

/// Throws CheckpointError on a bad magic, unsupported version, malformed
/// header, shape mismatch, truncation or trailing bytes.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Snapshot of a trainer.
Checkpoint make_checkpoint(const Trainer& trainer);

}  // namespace ocsd
