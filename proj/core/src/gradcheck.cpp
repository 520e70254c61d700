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

#include "ocsd/gradcheck.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "ocsd/rng.hpp"

namespace ocsd {

namespace {

template <typename T>
double evaluate(const ScalarFunction<T>& f, std::span<const Tensor<T>> inputs) {
  Tape<T> tape;
  std::vector<Var<T>> vars;
  vars.reserve(inputs.size());
  for (const auto& x : inputs) vars.push_back(tape.constant(x));
  const Var<T> out = f(tape, std::span<const Var<T>>(vars));
  if (out.shape() != Shape{1, 1, 1, 1}) {
    throw std::invalid_argument("finite_diff_check: function is not scalar-valued");
  }
  return static_cast<double>(out.value().item());
}

}  // namespace

template <typename T>
GradCheckResult finite_diff_check(const ScalarFunction<T>& f,
                                  std::span<const Tensor<T>> inputs,
                                  const GradCheckOptions& options) {
  if (inputs.empty()) throw std::invalid_argument("finite_diff_check: no inputs");
  if (!(options.eps > 0.0)) throw std::invalid_argument("finite_diff_check: eps must be > 0");

  std::vector<Tensor<T>> grads;
  {
    Tape<T> tape;
    if (options.fault) tape.inject_fault(options.fault->first, static_cast<T>(options.fault->second));
    std::vector<Var<T>> vars;
    for (const auto& x : inputs) vars.push_back(tape.leaf(x, true));
    const Var<T> out = f(tape, std::span<const Var<T>>(vars));
    tape.backward(out);
    for (const auto& v : vars) grads.push_back(v.grad());
  }

  // Flat coordinate list (input index, element index).
  std::vector<std::pair<std::size_t, std::int64_t>> coords;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (std::int64_t k = 0; k < inputs[i].numel(); ++k) coords.emplace_back(i, k);
  }
  if (options.max_coordinates > 0 && options.max_coordinates < coords.size()) {
    Rng rng(options.seed);
    for (std::size_t k = 0; k < options.max_coordinates; ++k) {
      std::swap(coords[k], coords[k + rng.below(coords.size() - k)]);
    }
    coords.resize(options.max_coordinates);
  }

  std::vector<Tensor<T>> probe(inputs.begin(), inputs.end());
  GradCheckResult result;
  result.coordinates = coords.size();
  const T eps = static_cast<T>(options.eps);
  for (const auto& [i, k] : coords) {
    const T saved = probe[i][k];
    probe[i][k] = saved + eps;
    const double up = evaluate(f, std::span<const Tensor<T>>(probe));
    probe[i][k] = saved - eps;
    const double down = evaluate(f, std::span<const Tensor<T>>(probe));
    probe[i][k] = saved;
    // Divide by the step actually taken in T.
    const double step = static_cast<double>(saved + eps) - static_cast<double>(saved - eps);
    const double numeric = (up - down) / step;
    const double analytic = static_cast<double>(grads[i][k]);
    const double rel =
        std::abs(analytic - numeric) / (std::abs(analytic) + std::abs(numeric) + 1e-12);
    if (rel >= result.max_rel_error) {
      result.max_rel_error = rel;
      result.worst_input = i;
      result.worst_index = k;
      result.worst_analytic = analytic;
      result.worst_numeric = numeric;
    }
  }
  return result;
}

template GradCheckResult finite_diff_check<float>(const ScalarFunction<float>&,
                                                  std::span<const Tensor<float>>,
                                                  const GradCheckOptions&);
template GradCheckResult finite_diff_check<double>(const ScalarFunction<double>&,
                                                   std::span<const Tensor<double>>,
                                                   const GradCheckOptions&);

}  // namespace ocsd
