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

#include "ocsd/speckle.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace ocsd {

namespace {

void check_looks(int looks) {
  if (looks < 1) {
    throw std::invalid_argument("number of looks must be >= 1, got " +
                                std::to_string(looks));
  }
}

}  // namespace

// G. Marsaglia and W. W. Tsang, "A simple method for generating gamma
// variables", ACM TOMS 26(3), 2000.
double sample_gamma(Rng& rng, double shape) {
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x;
    double v;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform_open();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
  }
}

SpeckleField sample_gamma_speckle(std::int64_t height, std::int64_t width,
                                  int looks, std::uint64_t seed) {
  check_looks(looks);
  if (height < 1 || width < 1) {
    throw std::invalid_argument("speckle field must be at least 1x1");
  }
  SpeckleField field{height, width, looks, seed, {}};
  field.values.resize(static_cast<std::size_t>(height * width));
  Rng rng(seed);
  const double shape = static_cast<double>(looks);
  for (float& v : field.values) {
    v = static_cast<float>(sample_gamma(rng, shape) / shape);
    // Keep draws strictly positive after narrowing.
    if (v == 0.0f) v = std::numeric_limits<float>::denorm_min();
  }
  return field;
}

ImageGray apply_speckle(const ImageGray& clean, int looks, std::uint64_t seed) {
  const SpeckleField n =
      sample_gamma_speckle(clean.height(), clean.width(), looks, seed);
  ImageGray out = clean;
  auto px = out.pixels();
  for (std::size_t k = 0; k < px.size(); ++k) px[k] *= n.values[k];
  return out;
}

double gamma_pdf(double n, int looks) {
  check_looks(looks);
  if (!(n > 0.0)) {
    throw std::invalid_argument("gamma_pdf: n must be positive");
  }
  const double l = static_cast<double>(looks);
  return std::exp(l * std::log(l) + (l - 1.0) * std::log(n) - l * n -
                  std::lgamma(l));
}

}  // namespace ocsd
