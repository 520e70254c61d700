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

#include "ocsd/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <memory>

#include "ocsd/rng.hpp"

namespace ocsd {

namespace fs = std::filesystem;

namespace {

std::string lower_extension(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f != nullptr) std::fclose(f);
  }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

ImageGray load_png(const fs::path& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  const std::string where = path.string() + ": ";
  if (png_image_begin_read_from_file(&img, path.c_str()) == 0) {
    throw ImageFormatError(where + img.message);
  }
  const png_uint_32 fmt = img.format;
  const bool linear = (fmt & PNG_FORMAT_FLAG_LINEAR) != 0;
  const bool colormap = (fmt & PNG_FORMAT_FLAG_COLORMAP) != 0;
  const bool alpha = (fmt & PNG_FORMAT_FLAG_ALPHA) != 0;
  if (linear || colormap || alpha) {
    png_image_free(&img);
    throw ImageFormatError(where + "unsupported PNG layout (need 8-bit gray or RGB, " +
                           (linear ? "got 16-bit" : colormap ? "got palette" : "got alpha") +
                           ")");
  }
  const bool rgb = (fmt & PNG_FORMAT_FLAG_COLOR) != 0;
  img.format = rgb ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const std::size_t channels = rgb ? 3 : 1;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(img));
  if (png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr) == 0) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw ImageFormatError(where + msg);
  }
  ImageGray out(img.height, img.width);
  auto px = out.pixels();
  for (std::size_t k = 0; k < px.size(); ++k) {
    if (rgb) {
      const double r = buf[3 * k], g = buf[3 * k + 1], b = buf[3 * k + 2];
      px[k] = static_cast<float>((0.299 * r + 0.587 * g + 0.114 * b) / 255.0);
    } else {
      px[k] = static_cast<float>(buf[k * channels]) / 255.0f;
    }
  }
  return out;
}

void skip_pgm_space(const std::string& s, std::size_t& pos) {
  for (;;) {
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    if (pos < s.size() && s[pos] == '#') {
      while (pos < s.size() && s[pos] != '\n') ++pos;
      continue;
    }
    return;
  }
}

long read_pgm_int(const std::string& s, std::size_t& pos, const std::string& where) {
  skip_pgm_space(s, pos);
  if (pos >= s.size() || !std::isdigit(static_cast<unsigned char>(s[pos]))) {
    throw ImageFormatError(where + "malformed PGM header");
  }
  long v = 0;
  while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
    v = v * 10 + (s[pos] - '0');
    if (v > (1L << 30)) throw ImageFormatError(where + "PGM dimension too large");
    ++pos;
  }
  return v;
}

ImageGray load_pgm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  const std::string where = path.string() + ": ";
  if (!in) throw ImageFormatError(where + "cannot open");
  const std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (s.size() < 2 || s[0] != 'P' || s[1] != '5') {
    throw ImageFormatError(where + "not a binary PGM (P5)");
  }
  std::size_t pos = 2;
  const long w = read_pgm_int(s, pos, where);
  const long h = read_pgm_int(s, pos, where);
  const long maxval = read_pgm_int(s, pos, where);
  if (maxval != 255) {
    throw ImageFormatError(where + "unsupported PGM maxval " + std::to_string(maxval) +
                           " (only 8-bit, maxval 255)");
  }
  if (pos >= s.size() || !std::isspace(static_cast<unsigned char>(s[pos]))) {
    throw ImageFormatError(where + "malformed PGM header");
  }
  ++pos;
  const auto count = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  if (s.size() - pos < count) throw ImageFormatError(where + "truncated PGM data");
  ImageGray out(h, w);
  auto px = out.pixels();
  for (std::size_t k = 0; k < count; ++k) {
    px[k] = static_cast<float>(static_cast<unsigned char>(s[pos + k])) / 255.0f;
  }
  return out;
}

std::vector<std::uint8_t> to_bytes(const ImageGray& image) {
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(image.size()));
  auto px = image.pixels();
  for (std::size_t k = 0; k < bytes.size(); ++k) bytes[k] = quantize(px[k]);
  return bytes;
}

}  // namespace

std::uint8_t quantize(float v) {
  const double c = std::clamp(static_cast<double>(v), 0.0, 1.0);
  return static_cast<std::uint8_t>(std::floor(c * 255.0 + 0.5));
}

bool is_image_path(const fs::path& path) {
  const std::string ext = lower_extension(path);
  return ext == ".png" || ext == ".pgm";
}

ImageGray load_gray(const fs::path& path) {
  const std::string ext = lower_extension(path);
  if (ext == ".png") return load_png(path);
  if (ext == ".pgm") return load_pgm(path);
  throw ImageFormatError(path.string() + ": unsupported extension (need .png or .pgm)");
}

void save_gray(const fs::path& path, const ImageGray& image) {
  if (image.empty()) throw std::invalid_argument("save_gray: empty image");
  const std::vector<std::uint8_t> bytes = to_bytes(image);
  if (lower_extension(path) == ".png") {
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(image.width());
    img.height = static_cast<png_uint_32>(image.height());
    img.format = PNG_FORMAT_GRAY;
    if (png_image_write_to_file(&img, path.c_str(), 0, bytes.data(), 0, nullptr) == 0) {
      throw std::runtime_error(path.string() + ": " + img.message);
    }
    return;
  }
  File f(std::fopen(path.c_str(), "wb"));
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  std::fprintf(f.get(), "P5\n%lld %lld\n255\n", static_cast<long long>(image.width()),
               static_cast<long long>(image.height()));
  if (std::fwrite(bytes.data(), 1, bytes.size(), f.get()) != bytes.size()) {
    throw std::runtime_error("failed writing " + path.string());
  }
}

Dataset list_images(const fs::path& path_or_dir) {
  Dataset ds{{}, "all", 0};
  if (fs::is_regular_file(path_or_dir)) {
    ds.paths.push_back(path_or_dir);
    return ds;
  }
  if (!fs::is_directory(path_or_dir)) {
    throw std::runtime_error(path_or_dir.string() + " is neither a file nor a directory");
  }
  for (const auto& entry : fs::directory_iterator(path_or_dir)) {
    if (entry.is_regular_file() && is_image_path(entry.path())) {
      ds.paths.push_back(entry.path());
    }
  }
  std::sort(ds.paths.begin(), ds.paths.end());
  return ds;
}

std::pair<Dataset, Dataset> split_dataset(std::vector<fs::path> paths,
                                          double train_fraction, std::uint64_t seed) {
  if (paths.empty()) throw std::invalid_argument("split_dataset: no paths");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw std::invalid_argument("split_dataset: fraction must lie in (0, 1)");
  }
  if (paths.size() < 2) {
    throw std::invalid_argument("split_dataset: need at least 2 paths for a train/val split");
  }
  std::sort(paths.begin(), paths.end());
  Rng rng(derive_seed(seed, {streams::kSplit}));
  for (std::size_t k = paths.size(); k > 1; --k) {
    std::swap(paths[k - 1], paths[rng.below(k)]);
  }
  const std::size_t n = paths.size();
  auto n_train = static_cast<std::size_t>(
      std::floor(train_fraction * static_cast<double>(n) + 1e-9));
  n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
  Dataset train{{paths.begin(), paths.begin() + static_cast<std::ptrdiff_t>(n_train)},
                "train", seed};
  Dataset val{{paths.begin() + static_cast<std::ptrdiff_t>(n_train), paths.end()}, "val", seed};
  std::sort(train.paths.begin(), train.paths.end());
  std::sort(val.paths.begin(), val.paths.end());
  return {std::move(train), std::move(val)};
}

std::vector<ImageGray> load_all(const Dataset& dataset) {
  std::vector<ImageGray> out;
  out.reserve(dataset.paths.size());
  for (const auto& p : dataset.paths) out.push_back(load_gray(p));
  return out;
}

}  // namespace ocsd
