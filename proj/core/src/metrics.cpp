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

#include "ocsd/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace ocsd {

namespace {

constexpr double kPeak = 255.0;

void require_same_size(const ImageGray& a, const ImageGray& b, const char* what) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw std::invalid_argument(std::string(what) + ": image sizes differ (" +
                                std::to_string(a.height()) + "x" +
                                std::to_string(a.width()) + " vs " +
                                std::to_string(b.height()) + "x" +
                                std::to_string(b.width()) + ")");
  }
}

std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> g(static_cast<std::size_t>(size));
  const double centre = (size - 1) / 2.0;
  double total = 0.0;
  for (int i = 0; i < size; ++i) {
    const double d = i - centre;
    g[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
    total += g[static_cast<std::size_t>(i)];
  }
  for (double& v : g) v /= total;
  return g;
}

// Valid-mode separable filtering of a row-major h x w field.
std::vector<double> filter_valid(const std::vector<double>& src, std::int64_t h,
                                 std::int64_t w, const std::vector<double>& g) {
  const auto k = static_cast<std::int64_t>(g.size());
  const std::int64_t oh = h - k + 1;
  const std::int64_t ow = w - k + 1;
  std::vector<double> rows(static_cast<std::size_t>(h * ow));
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::int64_t j = 0; j < k; ++j) {
        acc += g[static_cast<std::size_t>(j)] * src[static_cast<std::size_t>(y * w + x + j)];
      }
      rows[static_cast<std::size_t>(y * ow + x)] = acc;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(oh * ow));
  for (std::int64_t y = 0; y < oh; ++y) {
    for (std::int64_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::int64_t j = 0; j < k; ++j) {
        acc += g[static_cast<std::size_t>(j)] * rows[static_cast<std::size_t>((y + j) * ow + x)];
      }
      out[static_cast<std::size_t>(y * ow + x)] = acc;
    }
  }
  return out;
}

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

void RegionSpec::validate(std::int64_t image_height, std::int64_t image_width) const {
  if (x0 < 0 || y0 < 0 || width < 1 || height < 1 || x0 + width > image_width ||
      y0 + height > image_height) {
    throw std::invalid_argument("region " + to_string() + " is outside the " +
                                std::to_string(image_width) + "x" +
                                std::to_string(image_height) + " image");
  }
  if (width * height < 2) {
    throw std::invalid_argument("region " + to_string() + " must cover >= 2 pixels");
  }
}

RegionSpec RegionSpec::parse(const std::string& text) {
  RegionSpec r;
  std::istringstream in(text);
  char c1 = 0, c2 = 0, c3 = 0;
  in >> r.x0 >> c1 >> r.y0 >> c2 >> r.width >> c3 >> r.height;
  if (!in || c1 != ',' || c2 != ',' || c3 != ',' || !(in >> std::ws).eof()) {
    throw std::invalid_argument("region must be x0,y0,w,h; got '" + text + "'");
  }
  return r;
}

std::string RegionSpec::to_string() const {
  return std::to_string(x0) + "," + std::to_string(y0) + "," +
         std::to_string(width) + "," + std::to_string(height);
}

double psnr(const ImageGray& reference, const ImageGray& test) {
  require_same_size(reference, test, "psnr");
  if (reference.empty()) throw std::invalid_argument("psnr: empty images");
  const auto a = reference.pixels();
  const auto b = test.pixels();
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = kPeak * (static_cast<double>(a[k]) - static_cast<double>(b[k]));
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(a.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(kPeak * kPeak / mse);
}

double ssim(const ImageGray& reference, const ImageGray& test,
            const SsimOptions& options) {
  require_same_size(reference, test, "ssim");
  const std::int64_t h = reference.height();
  const std::int64_t w = reference.width();
  if (h < options.window || w < options.window) {
    throw std::invalid_argument("ssim: image " + std::to_string(h) + "x" +
                                std::to_string(w) + " is smaller than the " +
                                std::to_string(options.window) + "x" +
                                std::to_string(options.window) + " window");
  }
  const std::size_t n = static_cast<std::size_t>(h * w);
  std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
  const auto a = reference.pixels();
  const auto b = test.pixels();
  for (std::size_t k = 0; k < n; ++k) {
    x[k] = kPeak * static_cast<double>(a[k]);
    y[k] = kPeak * static_cast<double>(b[k]);
    xx[k] = x[k] * x[k];
    yy[k] = y[k] * y[k];
    xy[k] = x[k] * y[k];
  }
  const auto g = gaussian_window(options.window, options.sigma);
  const auto mx = filter_valid(x, h, w, g);
  const auto my = filter_valid(y, h, w, g);
  const auto exx = filter_valid(xx, h, w, g);
  const auto eyy = filter_valid(yy, h, w, g);
  const auto exy = filter_valid(xy, h, w, g);
  const double c1 = std::pow(options.k1 * options.dynamic_range, 2);
  const double c2 = std::pow(options.k2 * options.dynamic_range, 2);
  double total = 0.0;
  for (std::size_t k = 0; k < mx.size(); ++k) {
    const double sxx = exx[k] - mx[k] * mx[k];
    const double syy = eyy[k] - my[k] * my[k];
    const double sxy = exy[k] - mx[k] * my[k];
    const double num = (2.0 * mx[k] * my[k] + c1) * (2.0 * sxy + c2);
    const double den = (mx[k] * mx[k] + my[k] * my[k] + c1) * (sxx + syy + c2);
    total += num / den;
  }
  return total / static_cast<double>(mx.size());
}

RegionStats region_stats(const ImageGray& image, const RegionSpec& region) {
  region.validate(image.height(), image.width());
  RegionStats s;
  s.count = region.width * region.height;
  double sum = 0.0;
  for (std::int64_t y = region.y0; y < region.y0 + region.height; ++y) {
    for (std::int64_t x = region.x0; x < region.x0 + region.width; ++x) {
      sum += image.at(y, x);
    }
  }
  s.mean = sum / static_cast<double>(s.count);
  double sq = 0.0;
  for (std::int64_t y = region.y0; y < region.y0 + region.height; ++y) {
    for (std::int64_t x = region.x0; x < region.x0 + region.width; ++x) {
      const double d = image.at(y, x) - s.mean;
      sq += d * d;
    }
  }
  s.variance = sq / static_cast<double>(s.count - 1);
  return s;
}

std::optional<double> enl(const ImageGray& image, const RegionSpec& region) {
  const RegionStats s = region_stats(image, region);
  if (s.variance == 0.0) return std::nullopt;
  return s.mean * s.mean / s.variance;
}

double cx(const ImageGray& image, const RegionSpec& region) {
  const RegionStats s = region_stats(image, region);
  if (s.mean == 0.0) {
    throw std::domain_error("cx: region " + region.to_string() + " has zero mean");
  }
  return std::sqrt(s.variance) / s.mean;
}

MetricReport evaluate(const ImageGray& test, const ImageGray* reference,
                      const std::vector<RegionSpec>& regions) {
  if (reference == nullptr && regions.empty()) {
    throw std::invalid_argument(
        "nothing to compute: give a reference image (PSNR/SSIM) and/or regions "
        "(ENL/Cx)");
  }
  MetricReport report;
  if (reference != nullptr) {
    report.psnr = psnr(*reference, test);
    report.ssim = ssim(*reference, test);
  }
  for (const RegionSpec& r : regions) {
    report.regions.push_back({r, enl(test, r), cx(test, r)});
  }
  return report;
}

std::string to_json(const MetricReport& report) {
  nlohmann::ordered_json j;
  if (report.psnr) {
    if (std::isinf(*report.psnr)) {
      j["psnr"] = "inf";
    } else {
      j["psnr"] = *report.psnr;
    }
  }
  if (report.ssim) j["ssim"] = *report.ssim;
  nlohmann::ordered_json regions = nlohmann::ordered_json::array();
  for (const RegionReport& r : report.regions) {
    nlohmann::ordered_json e;
    e["region"] = {r.region.x0, r.region.y0, r.region.width, r.region.height};
    e["enl"] = r.enl ? nlohmann::ordered_json(*r.enl) : nlohmann::ordered_json(nullptr);
    e["cx"] = r.cx;
    regions.push_back(std::move(e));
  }
  j["regions"] = std::move(regions);
  return j.dump(2);
}

std::string to_table(const MetricReport& report) {
  std::ostringstream out;
  if (report.psnr) {
    out << "PSNR  " << (std::isinf(*report.psnr) ? "inf" : format_number(*report.psnr))
        << " dB\n";
  }
  if (report.ssim) out << "SSIM  " << format_number(*report.ssim) << "\n";
  for (const RegionReport& r : report.regions) {
    out << "region " << r.region.to_string() << "  ENL "
        << (r.enl ? format_number(*r.enl) : "undefined") << "  Cx "
        << format_number(r.cx) << "\n";
  }
  return out.str();
}

}  // namespace ocsd
