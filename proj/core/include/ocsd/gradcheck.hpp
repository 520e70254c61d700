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
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ocsd/network.hpp"
#include "ocsd/tape.hpp"

namespace ocsd {

/// A scalar-valued function of one or more tensors, expressed on a tape.
template <typename T>
using ScalarFunction =
    std::function<Var<T>(Tape<T>&, std::span<const Var<T>> inputs)>;

struct GradCheckOptions {
  double eps = 1e-5;
  /// Number of coordinates to probe, drawn uniformly without replacement
  /// across all inputs. Zero probes every coordinate.
  std::size_t max_coordinates = 0;
  std::uint64_t seed = 0;
  /// Planted backward bug, for mutation testing the checker itself.
  std::optional<std::pair<Op, double>> fault;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  std::size_t worst_input = 0;
  std::int64_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  /// Coordinates redrawn because a +-eps probe crossed a relu or max-pool
  /// switch, where central differences are not a valid reference.
  std::size_t skipped = 0;
};

/// Compares the tape gradient of f against central differences.
///
/// Each probed coordinate contributes
///   |analytic - numeric| / (|analytic| + |numeric| + 1e-12)
/// and the maximum is reported.
template <typename T>
GradCheckResult finite_diff_check(const ScalarFunction<T>& f,
                                  std::span<const Tensor<T>> inputs,
                                  const GradCheckOptions& options = {});

template <typename T>
GradCheckResult finite_diff_check(const ScalarFunction<T>& f,
                                  const Tensor<T>& x,
                                  const GradCheckOptions& options = {}) {
  return finite_diff_check(f, std::span<const Tensor<T>>(&x, 1), options);
}

struct NetworkGradCheckOptions {
  std::int64_t size = 32;
  std::size_t coordinates = 20;
  double eps = 1e-5;
  std::uint64_t seed = 0;
  /// Analytic gradient from a 32-bit tape; differences are always taken in
  /// 64-bit at the same (rounded) point.
  bool single_precision = false;
  std::optional<std::pair<Op, double>> fault;
};

/// Gradient of the L2 loss of the full network, with parameters initialised
/// from config (its seed replaced by options.seed) and random input/target,
/// checked on randomly chosen parameter scalars. Coordinates whose probes
/// change a relu mask or max-pool choice are redrawn.
GradCheckResult network_gradient_check(const NetworkConfig& config,
                                       const NetworkGradCheckOptions& options);

/// One entry of the built-in gradient audit.
struct GradCheckCase {
  std::string name;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed() const { return max_rel_error < tolerance; }
};

struct GradAuditOptions {
  int seeds = 100;
  std::uint64_t base_seed = 0;
  double eps = 1e-5;
  double tolerance = 1e-4;
  bool include_network = true;
  std::optional<std::pair<Op, double>> fault;
};

/// Runs the finite-difference suite over every differentiable op and the
/// tiny network configuration at 64-bit precision. Each case reports its
/// worst error over all seeds.
std::vector<GradCheckCase> run_gradient_audit(const GradAuditOptions& options);

extern template GradCheckResult finite_diff_check<float>(
    const ScalarFunction<float>&, std::span<const Tensor<float>>,
    const GradCheckOptions&);
extern template GradCheckResult finite_diff_check<double>(
    const ScalarFunction<double>&, std::span<const Tensor<double>>,
    const GradCheckOptions&);

}  // namespace ocsd
