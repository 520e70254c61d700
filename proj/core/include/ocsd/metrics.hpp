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

// Despeckling quality metrics. Full-reference metrics work on the 8-bit
// scale (pixels * 255); region statistics work on the stored [0, 1] values.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ocsd/image.hpp"

namespace ocsd {

/// Pixel rectangle [x0, x0+width) x [y0, y0+height).
struct RegionSpec {
  std::int64_t x0 = 0;
  std::int64_t y0 = 0;
  std::int64_t width = 0;
  std::int64_t height = 0;

  /// Throws std::invalid_argument unless the rectangle lies inside a
  /// height x width image and covers at least two pixels.
  void validate(std::int64_t image_height, std::int64_t image_width) const;
  /// Parses "x0,y0,w,h".
  static RegionSpec parse(const std::string& text);
  std::string to_string() const;
};

/// 10 log10(255^2 / MSE); +infinity for identical images.
double psnr(const ImageGray& reference, const ImageGray& test);

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 255.0;
};

/// Mean of the local SSIM map over all fully-contained Gaussian windows.
double ssim(const ImageGray& reference, const ImageGray& test,
            const SsimOptions& options = {});

/// Mean and unbiased variance of a region.
struct RegionStats {
  double mean = 0.0;
  double variance = 0.0;
  std::int64_t count = 0;
};
RegionStats region_stats(const ImageGray& image, const RegionSpec& region);

/// mean^2 / variance; nullopt (undefined) when the variance is zero.
std::optional<double> enl(const ImageGray& image, const RegionSpec& region);

/// std / mean; throws std::domain_error when the mean is zero.
double cx(const ImageGray& image, const RegionSpec& region);

struct RegionReport {
  RegionSpec region;
  std::optional<double> enl;
  double cx = 0.0;
};

struct MetricReport {
  std::optional<double> psnr;  // present when a reference was given
  std::optional<double> ssim;
  std::vector<RegionReport> regions;
};

/// Evaluates whichever metrics the inputs allow. Throws when there is
/// neither a reference nor a region.
MetricReport evaluate(const ImageGray& test, const ImageGray* reference,
                      const std::vector<RegionSpec>& regions);

/// JSON text. Infinite PSNR is written as the string "inf", an undefined
/// ENL as null.
std::string to_json(const MetricReport& report);
std::string to_table(const MetricReport& report);

}  // namespace ocsd
