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

#include "ocsd/kernels.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ocsd::kernels {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>, Eigen::Unaligned, Eigen::OuterStride<>>;
template <typename T>
using ConstMatMap =
    Eigen::Map<const RowMat<T>, Eigen::Unaligned, Eigen::OuterStride<>>;

// Upper bound on im2col scratch elements per chunk of output rows.
constexpr std::int64_t kColBudget = std::int64_t{1} << 20;

void check_conv_shapes(const Shape& in, const Shape& wt, const Shape& b,
                       std::int64_t k, const char* name) {
  if (wt.h != k || wt.w != k) {
    throw std::invalid_argument(std::string(name) + ": expected " +
                                std::to_string(k) + "x" + std::to_string(k) +
                                " kernel, got weight " + to_string(wt));
  }
  if (wt.c != in.c) {
    throw std::invalid_argument(
        std::string(name) + ": input has " + std::to_string(in.c) +
        " channels but weight expects " + std::to_string(wt.c) + " (input " +
        to_string(in) + ", weight " + to_string(wt) + ")");
  }
  if (wt.n < 1 || wt.c < 1) {
    throw std::invalid_argument(std::string(name) + ": empty weight");
  }
  if (b.numel() != wt.n) {
    throw std::invalid_argument(std::string(name) + ": bias has " +
                                std::to_string(b.numel()) +
                                " entries, expected " + std::to_string(wt.n));
  }
}

std::int64_t rows_per_chunk(std::int64_t cin, std::int64_t h, std::int64_t w) {
  std::int64_t rows = kColBudget / std::max<std::int64_t>(1, cin * 9 * w);
  return std::clamp<std::int64_t>(rows, 1, h);
}

// Fills col[(i*3+dy)*3+dx][(y-y0)*w + x] = in[i][y+dy-1][x+dx-1] (zero
// outside the image) for rows y in [y0, y0+rows).
template <typename T>
void im2col3x3(const T* in, std::int64_t cin, std::int64_t h, std::int64_t w,
               std::int64_t y0, std::int64_t rows, T* col) {
  const std::int64_t pixels = rows * w;
  for (std::int64_t i = 0; i < cin; ++i) {
    const T* plane = in + i * h * w;
    for (std::int64_t dy = 0; dy < 3; ++dy) {
      for (std::int64_t dx = 0; dx < 3; ++dx) {
        T* dst = col + ((i * 3 + dy) * 3 + dx) * pixels;
        for (std::int64_t r = 0; r < rows; ++r) {
          T* drow = dst + r * w;
          const std::int64_t sy = y0 + r + dy - 1;
          if (sy < 0 || sy >= h) {
            std::fill(drow, drow + w, T(0));
            continue;
          }
          const T* srow = plane + sy * w;
          const std::int64_t x_begin = std::max<std::int64_t>(0, 1 - dx);
          const std::int64_t x_end = std::min<std::int64_t>(w, w + 1 - dx);
          for (std::int64_t x = 0; x < x_begin; ++x) drow[x] = T(0);
          for (std::int64_t x = x_begin; x < x_end; ++x) {
            drow[x] = srow[x + dx - 1];
          }
          for (std::int64_t x = x_end; x < w; ++x) drow[x] = T(0);
        }
      }
    }
  }
}

template <typename T>
void col2im3x3(const T* col, std::int64_t cin, std::int64_t h, std::int64_t w,
               std::int64_t y0, std::int64_t rows, T* out) {
  const std::int64_t pixels = rows * w;
  for (std::int64_t i = 0; i < cin; ++i) {
    T* plane = out + i * h * w;
    for (std::int64_t dy = 0; dy < 3; ++dy) {
      for (std::int64_t dx = 0; dx < 3; ++dx) {
        const T* src = col + ((i * 3 + dy) * 3 + dx) * pixels;
        for (std::int64_t r = 0; r < rows; ++r) {
          const std::int64_t sy = y0 + r + dy - 1;
          if (sy < 0 || sy >= h) continue;
          const T* srow = src + r * w;
          T* drow = plane + sy * w;
          const std::int64_t x_begin = std::max<std::int64_t>(0, 1 - dx);
          const std::int64_t x_end = std::min<std::int64_t>(w, w + 1 - dx);
          for (std::int64_t x = x_begin; x < x_end; ++x) {
            drow[x + dx - 1] += srow[x];
          }
        }
      }
    }
  }
}

template <typename T>
void add_bias(Tensor<T>& out, const Tensor<T>& bias) {
  const Shape& s = out.shape();
  const std::int64_t plane = s.plane();
  for (std::int64_t n = 0; n < s.n; ++n) {
    for (std::int64_t o = 0; o < s.c; ++o) {
      T* p = out.raw() + (n * s.c + o) * plane;
      const T b = bias[o];
      for (std::int64_t k = 0; k < plane; ++k) p[k] += b;
    }
  }
}

template <typename T>
void accumulate_bias_grad(const Tensor<T>& grad_out, Tensor<T>& grad_bias) {
  const Shape& s = grad_out.shape();
  const std::int64_t plane = s.plane();
  for (std::int64_t o = 0; o < s.c; ++o) {
    double acc = 0.0;
    for (std::int64_t n = 0; n < s.n; ++n) {
      const T* p = grad_out.raw() + (n * s.c + o) * plane;
      for (std::int64_t k = 0; k < plane; ++k) acc += p[k];
    }
    grad_bias[o] += static_cast<T>(acc);
  }
}

struct AxisTaps {
  std::vector<std::int64_t> lo;
  std::vector<std::int64_t> hi;
  std::vector<double> frac;  // weight of `hi`
};

AxisTaps make_axis(std::int64_t in, std::int64_t out) {
  AxisTaps taps;
  taps.lo.resize(static_cast<std::size_t>(out));
  taps.hi.resize(static_cast<std::size_t>(out));
  taps.frac.resize(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::int64_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    auto lo = static_cast<std::int64_t>(std::floor(src));
    if (lo > in - 1) lo = in - 1;
    const std::int64_t hi = std::min(lo + 1, in - 1);
    const auto k = static_cast<std::size_t>(o);
    taps.lo[k] = lo;
    taps.hi[k] = hi;
    taps.frac[k] = hi == lo ? 0.0 : src - static_cast<double>(lo);
  }
  return taps;
}

}  // namespace

template <typename T>
Tensor<T> conv3x3_forward(const Tensor<T>& input, const Tensor<T>& weight,
                          const Tensor<T>& bias) {
  const Shape& s = input.shape();
  check_conv_shapes(s, weight.shape(), bias.shape(), 3, "conv3x3");
  const std::int64_t cout = weight.shape().n;
  const std::int64_t k = s.c * 9;
  Tensor<T> out(Shape{s.n, cout, s.h, s.w});
  const std::int64_t chunk = rows_per_chunk(s.c, s.h, s.w);
  std::vector<T> col(static_cast<std::size_t>(k * chunk * s.w));
  ConstMatMap<T> wm(weight.raw(), cout, k, Eigen::OuterStride<>(k));
  for (std::int64_t n = 0; n < s.n; ++n) {
    const T* in = input.raw() + n * s.c * s.plane();
    T* o = out.raw() + n * cout * s.plane();
    for (std::int64_t y0 = 0; y0 < s.h; y0 += chunk) {
      const std::int64_t rows = std::min(chunk, s.h - y0);
      const std::int64_t pixels = rows * s.w;
      im2col3x3(in, s.c, s.h, s.w, y0, rows, col.data());
      ConstMatMap<T> cm(col.data(), k, pixels, Eigen::OuterStride<>(pixels));
      MatMap<T> om(o + y0 * s.w, cout, pixels, Eigen::OuterStride<>(s.plane()));
      om.noalias() = wm * cm;
    }
  }
  add_bias(out, bias);
  return out;
}

template <typename T>
void conv3x3_backward(const Tensor<T>& input, const Tensor<T>& weight,
                      const Tensor<T>& grad_out, Tensor<T>* grad_input,
                      Tensor<T>* grad_weight, Tensor<T>* grad_bias) {
  const Shape& s = input.shape();
  const std::int64_t cout = weight.shape().n;
  const std::int64_t k = s.c * 9;
  if (grad_bias != nullptr) accumulate_bias_grad(grad_out, *grad_bias);
  if (grad_input == nullptr && grad_weight == nullptr) return;
  const std::int64_t chunk = rows_per_chunk(s.c, s.h, s.w);
  std::vector<T> col(static_cast<std::size_t>(k * chunk * s.w));
  std::vector<T> dcol(grad_input != nullptr ? col.size() : 0);
  ConstMatMap<T> wm(weight.raw(), cout, k, Eigen::OuterStride<>(k));
  for (std::int64_t n = 0; n < s.n; ++n) {
    const T* in = input.raw() + n * s.c * s.plane();
    const T* go = grad_out.raw() + n * cout * s.plane();
    for (std::int64_t y0 = 0; y0 < s.h; y0 += chunk) {
      const std::int64_t rows = std::min(chunk, s.h - y0);
      const std::int64_t pixels = rows * s.w;
      ConstMatMap<T> gm(go + y0 * s.w, cout, pixels,
                        Eigen::OuterStride<>(s.plane()));
      if (grad_weight != nullptr) {
        im2col3x3(in, s.c, s.h, s.w, y0, rows, col.data());
        ConstMatMap<T> cm(col.data(), k, pixels, Eigen::OuterStride<>(pixels));
        MatMap<T> gw(grad_weight->raw(), cout, k, Eigen::OuterStride<>(k));
        gw.noalias() += gm * cm.transpose();
      }
      if (grad_input != nullptr) {
        MatMap<T> dm(dcol.data(), k, pixels, Eigen::OuterStride<>(pixels));
        dm.noalias() = wm.transpose() * gm;
        col2im3x3(dcol.data(), s.c, s.h, s.w, y0, rows,
                  grad_input->raw() + n * s.c * s.plane());
      }
    }
  }
}

template <typename T>
Tensor<T> conv1x1_forward(const Tensor<T>& input, const Tensor<T>& weight,
                          const Tensor<T>& bias) {
  const Shape& s = input.shape();
  check_conv_shapes(s, weight.shape(), bias.shape(), 1, "conv1x1");
  const std::int64_t cout = weight.shape().n;
  Tensor<T> out(Shape{s.n, cout, s.h, s.w});
  ConstMatMap<T> wm(weight.raw(), cout, s.c, Eigen::OuterStride<>(s.c));
  for (std::int64_t n = 0; n < s.n; ++n) {
    ConstMatMap<T> xm(input.raw() + n * s.c * s.plane(), s.c, s.plane(),
                      Eigen::OuterStride<>(s.plane()));
    MatMap<T> om(out.raw() + n * cout * s.plane(), cout, s.plane(),
                 Eigen::OuterStride<>(s.plane()));
    om.noalias() = wm * xm;
  }
  add_bias(out, bias);
  return out;
}

template <typename T>
void conv1x1_backward(const Tensor<T>& input, const Tensor<T>& weight,
                      const Tensor<T>& grad_out, Tensor<T>* grad_input,
                      Tensor<T>* grad_weight, Tensor<T>* grad_bias) {
  const Shape& s = input.shape();
  const std::int64_t cout = weight.shape().n;
  if (grad_bias != nullptr) accumulate_bias_grad(grad_out, *grad_bias);
  ConstMatMap<T> wm(weight.raw(), cout, s.c, Eigen::OuterStride<>(s.c));
  for (std::int64_t n = 0; n < s.n; ++n) {
    ConstMatMap<T> gm(grad_out.raw() + n * cout * s.plane(), cout, s.plane(),
                      Eigen::OuterStride<>(s.plane()));
    if (grad_weight != nullptr) {
      ConstMatMap<T> xm(input.raw() + n * s.c * s.plane(), s.c, s.plane(),
                        Eigen::OuterStride<>(s.plane()));
      MatMap<T> gw(grad_weight->raw(), cout, s.c, Eigen::OuterStride<>(s.c));
      gw.noalias() += gm * xm.transpose();
    }
    if (grad_input != nullptr) {
      MatMap<T> gi(grad_input->raw() + n * s.c * s.plane(), s.c, s.plane(),
                   Eigen::OuterStride<>(s.plane()));
      gi.noalias() += wm.transpose() * gm;
    }
  }
}

template <typename T>
Tensor<T> maxpool2x2_forward(const Tensor<T>& input,
                             std::vector<std::int64_t>& argmax) {
  const Shape& s = input.shape();
  if (s.h % 2 != 0 || s.w % 2 != 0) {
    throw std::invalid_argument("maxpool2x2: spatial size " +
                                std::to_string(s.h) + "x" +
                                std::to_string(s.w) + " must be even");
  }
  const std::int64_t oh = s.h / 2;
  const std::int64_t ow = s.w / 2;
  Tensor<T> out(Shape{s.n, s.c, oh, ow});
  argmax.resize(static_cast<std::size_t>(out.numel()));
  std::int64_t k = 0;
  for (std::int64_t p = 0; p < s.n * s.c; ++p) {
    const std::int64_t base = p * s.plane();
    for (std::int64_t y = 0; y < oh; ++y) {
      for (std::int64_t x = 0; x < ow; ++x, ++k) {
        const std::int64_t top = base + (2 * y) * s.w + 2 * x;
        const std::int64_t cand[4] = {top, top + 1, top + s.w, top + s.w + 1};
        std::int64_t best = cand[0];
        for (int j = 1; j < 4; ++j) {
          if (input[cand[j]] > input[best]) best = cand[j];
        }
        out[k] = input[best];
        argmax[static_cast<std::size_t>(k)] = best;
      }
    }
  }
  return out;
}

template <typename T>
void maxpool2x2_backward(const std::vector<std::int64_t>& argmax,
                         const Tensor<T>& grad_out, Tensor<T>& grad_input) {
  for (std::int64_t k = 0; k < grad_out.numel(); ++k) {
    grad_input[argmax[static_cast<std::size_t>(k)]] += grad_out[k];
  }
}

template <typename T>
Tensor<T> resize_bilinear_forward(const Tensor<T>& input, std::int64_t out_h,
                                  std::int64_t out_w) {
  const Shape& s = input.shape();
  if (s.h < 1 || s.w < 1 || out_h < 1 || out_w < 1) {
    throw std::invalid_argument("resize_bilinear: empty spatial extent");
  }
  const AxisTaps ty = make_axis(s.h, out_h);
  const AxisTaps tx = make_axis(s.w, out_w);
  Tensor<T> out(Shape{s.n, s.c, out_h, out_w});
  for (std::int64_t p = 0; p < s.n * s.c; ++p) {
    const T* in = input.raw() + p * s.plane();
    T* o = out.raw() + p * out_h * out_w;
    for (std::int64_t y = 0; y < out_h; ++y) {
      const auto yi = static_cast<std::size_t>(y);
      const T fy = static_cast<T>(ty.frac[yi]);
      const T* r0 = in + ty.lo[yi] * s.w;
      const T* r1 = in + ty.hi[yi] * s.w;
      for (std::int64_t x = 0; x < out_w; ++x) {
        const auto xi = static_cast<std::size_t>(x);
        const T fx = static_cast<T>(tx.frac[xi]);
        const std::int64_t x0 = tx.lo[xi];
        const std::int64_t x1 = tx.hi[xi];
        const T top = (T(1) - fx) * r0[x0] + fx * r0[x1];
        const T bot = (T(1) - fx) * r1[x0] + fx * r1[x1];
        o[y * out_w + x] = (T(1) - fy) * top + fy * bot;
      }
    }
  }
  return out;
}

template <typename T>
void resize_bilinear_backward(const Tensor<T>& grad_out, Tensor<T>& grad_input) {
  const Shape& s = grad_input.shape();
  const std::int64_t out_h = grad_out.shape().h;
  const std::int64_t out_w = grad_out.shape().w;
  const AxisTaps ty = make_axis(s.h, out_h);
  const AxisTaps tx = make_axis(s.w, out_w);
  for (std::int64_t p = 0; p < s.n * s.c; ++p) {
    T* gi = grad_input.raw() + p * s.plane();
    const T* go = grad_out.raw() + p * out_h * out_w;
    for (std::int64_t y = 0; y < out_h; ++y) {
      const auto yi = static_cast<std::size_t>(y);
      const T fy = static_cast<T>(ty.frac[yi]);
      T* r0 = gi + ty.lo[yi] * s.w;
      T* r1 = gi + ty.hi[yi] * s.w;
      for (std::int64_t x = 0; x < out_w; ++x) {
        const auto xi = static_cast<std::size_t>(x);
        const T fx = static_cast<T>(tx.frac[xi]);
        const T g = go[y * out_w + x];
        const T top = (T(1) - fy) * g;
        const T bot = fy * g;
        r0[tx.lo[xi]] += (T(1) - fx) * top;
        r0[tx.hi[xi]] += fx * top;
        r1[tx.lo[xi]] += (T(1) - fx) * bot;
        r1[tx.hi[xi]] += fx * bot;
      }
    }
  }
}

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& input) {
  Tensor<T> out(input.shape());
  for (std::int64_t k = 0; k < input.numel(); ++k) {
    out[k] = input[k] > T(0) ? input[k] : T(0);
  }
  return out;
}

template <typename T>
void relu_backward(const Tensor<T>& input, const Tensor<T>& grad_out,
                   Tensor<T>& grad_input) {
  for (std::int64_t k = 0; k < input.numel(); ++k) {
    if (input[k] > T(0)) grad_input[k] += grad_out[k];
  }
}

template <typename T>
T total_variation_sum(const Tensor<T>& input) {
  const Shape& s = input.shape();
  double acc = 0.0;
  for (std::int64_t p = 0; p < s.n * s.c; ++p) {
    const T* x = input.raw() + p * s.plane();
    for (std::int64_t y = 0; y < s.h; ++y) {
      for (std::int64_t c = 0; c < s.w; ++c) {
        const T v = x[y * s.w + c];
        if (y + 1 < s.h) acc += std::abs(x[(y + 1) * s.w + c] - v);
        if (c + 1 < s.w) acc += std::abs(x[y * s.w + c + 1] - v);
      }
    }
  }
  return static_cast<T>(acc);
}

template <typename T>
void total_variation_backward(const Tensor<T>& input, T scale,
                              Tensor<T>& grad_input) {
  const Shape& s = input.shape();
  auto sign = [](T d) { return d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0)); };
  for (std::int64_t p = 0; p < s.n * s.c; ++p) {
    const T* x = input.raw() + p * s.plane();
    T* g = grad_input.raw() + p * s.plane();
    for (std::int64_t y = 0; y < s.h; ++y) {
      for (std::int64_t c = 0; c < s.w; ++c) {
        const std::int64_t k = y * s.w + c;
        if (y + 1 < s.h) {
          const T sg = scale * sign(x[k + s.w] - x[k]);
          g[k + s.w] += sg;
          g[k] -= sg;
        }
        if (c + 1 < s.w) {
          const T sg = scale * sign(x[k + 1] - x[k]);
          g[k + 1] += sg;
          g[k] -= sg;
        }
      }
    }
  }
}

#define OCSD_INSTANTIATE_KERNELS(T)                                           \
  template Tensor<T> conv3x3_forward(const Tensor<T>&, const Tensor<T>&,      \
                                     const Tensor<T>&);                       \
  template void conv3x3_backward(const Tensor<T>&, const Tensor<T>&,          \
                                 const Tensor<T>&, Tensor<T>*, Tensor<T>*,    \
                                 Tensor<T>*);                                 \
  template Tensor<T> conv1x1_forward(const Tensor<T>&, const Tensor<T>&,      \
                                     const Tensor<T>&);                       \
  template void conv1x1_backward(const Tensor<T>&, const Tensor<T>&,          \
                                 const Tensor<T>&, Tensor<T>*, Tensor<T>*,    \
                                 Tensor<T>*);                                 \
  template Tensor<T> maxpool2x2_forward(const Tensor<T>&,                     \
                                        std::vector<std::int64_t>&);          \
  template void maxpool2x2_backward(const std::vector<std::int64_t>&,         \
                                    const Tensor<T>&, Tensor<T>&);            \
  template Tensor<T> resize_bilinear_forward(const Tensor<T>&, std::int64_t,  \
                                             std::int64_t);                   \
  template void resize_bilinear_backward(const Tensor<T>&, Tensor<T>&);       \
  template Tensor<T> relu_forward(const Tensor<T>&);                          \
  template void relu_backward(const Tensor<T>&, const Tensor<T>&, Tensor<T>&); \
  template T total_variation_sum(const Tensor<T>&);                           \
  template void total_variation_backward(const Tensor<T>&, T, Tensor<T>&);

OCSD_INSTANTIATE_KERNELS(float)
OCSD_INSTANTIATE_KERNELS(double)

#undef OCSD_INSTANTIATE_KERNELS

}  // namespace ocsd::kernels
