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

// Fully developed multiplicative speckle: Y = X * N with N ~ Gamma(L, 1/L).

#pragma once

#include <cstdint>
#include <vector>

#include "ocsd/image.hpp"
#include "ocsd/rng.hpp"

namespace ocsd {

/// Per-pixel unit-mean speckle draws for a given number of looks.
struct SpeckleField {
  std::int64_t height = 0;
  std::int64_t width = 0;
  int looks = 1;
  std::uint64_t seed = 0;
  std::vector<float> values;
};

/// Draws Gamma(shape, 1) by Marsaglia & Tsang's squeeze method; shape >= 1.
double sample_gamma(Rng& rng, double shape);

SpeckleField sample_gamma_speckle(std::int64_t height, std::int64_t width,
                                  int looks, std::uint64_t seed);

/// Y = X * N pixelwise. The result is not clipped: values above 1 are kept
/// so the multiplicative statistics survive; use clamp01 before storage.
ImageGray apply_speckle(const ImageGray& clean, int looks, std::uint64_t seed);

/// L-look speckle density L^L n^(L-1) exp(-L n) / Gamma(L), for n > 0.
double gamma_pdf(double n, int looks);

}  // namespace ocsd
