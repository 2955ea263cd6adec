#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "semcast/errors.hpp"

namespace semcast {

/// Planar C×H×W image with pixel values in [-1, 1].
struct Image {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int c, int h, int w, float fill = 0.0f)
      : channels(c), height(h), width(w), pixels(static_cast<std::size_t>(c) * h * w, fill) {
    if (c <= 0 || h <= 0 || w <= 0) {
      throw DimensionError("image dimensions must be positive, got " + std::to_string(c) + "x" +
                           std::to_string(h) + "x" + std::to_string(w));
    }
  }

  float& at(int c, int y, int x) { return pixels[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  float at(int c, int y, int x) const {
    return pixels[(static_cast<std::size_t>(c) * height + y) * width + x];
  }

  std::size_t size() const { return pixels.size(); }
  bool same_shape(const Image& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }

  void clamp() {
    for (float& v : pixels) v = std::clamp(v, -1.0f, 1.0f);
  }

  friend bool operator==(const Image&, const Image&) = default;
};

/// Pixel rectangle [top, bottom) × [left, right).
struct PixelBox {
  int top = 0;
  int left = 0;
  int bottom = 0;
  int right = 0;

  bool empty() const { return bottom <= top || right <= left; }
  friend bool operator==(const PixelBox&, const PixelBox&) = default;
};

/// Maps an 8-bit intensity linearly onto [-1, 1].
inline float normalize_u8(unsigned char v) { return static_cast<float>(v) / 127.5f - 1.0f; }

inline unsigned char denormalize_u8(float v) {
  const float s = (std::clamp(v, -1.0f, 1.0f) + 1.0f) * 127.5f;
  return static_cast<unsigned char>(std::lround(s));
}

namespace detail {

/// Catmull-Rom cubic (a = -0.5).
inline double cubic_kernel(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return (((x - 5.0) * x + 8.0) * x - 4.0) * a;
  return 0.0;
}

struct Taps {
  std::vector<int> first;       // first source index per output sample
  std::vector<int> count;       // number of taps per output sample
  std::vector<double> weights;  // row-major, stride = max_taps
  int max_taps = 0;
};

// Half-pixel-centred taps. When shrinking, the kernel is stretched by the
// scale factor so that it also acts as the anti-alias prefilter. Out-of-range
// taps are clamped to the border sample.
inline Taps make_taps(int in_size, int out_size) {
  const double scale = static_cast<double>(in_size) / out_size;
  const double stretch = std::max(1.0, scale);
  const double support = 2.0 * stretch;
  Taps t;
  t.max_taps = static_cast<int>(std::ceil(support)) * 2 + 1;
  t.first.resize(out_size);
  t.count.resize(out_size);
  t.weights.assign(static_cast<std::size_t>(out_size) * t.max_taps, 0.0);
  for (int i = 0; i < out_size; ++i) {
    const double center = (i + 0.5) * scale;
    const int lo = static_cast<int>(std::floor(center - support));
    const int hi = static_cast<int>(std::ceil(center + support));
    t.first[i] = lo;
    const int n = std::min(hi - lo, t.max_taps);
    t.count[i] = n;
    double total = 0.0;
    for (int j = 0; j < n; ++j) {
      const double w = cubic_kernel((lo + j + 0.5 - center) / stretch);
      t.weights[static_cast<std::size_t>(i) * t.max_taps + j] = w;
      total += w;
    }
    for (int j = 0; j < n; ++j) t.weights[static_cast<std::size_t>(i) * t.max_taps + j] /= total;
  }
  return t;
}

}  // namespace detail

/// Separable bicubic resampling to an arbitrary size. Output is clamped to [-1, 1].
inline Image resize_bicubic(const Image& x, int out_h, int out_w) {
  if (out_h <= 0 || out_w <= 0) throw DimensionError("resize target must be positive");
  if (out_h == x.height && out_w == x.width) return x;

  const detail::Taps tx = detail::make_taps(x.width, out_w);
  const detail::Taps ty = detail::make_taps(x.height, out_h);

  std::vector<double> tmp(static_cast<std::size_t>(x.height) * out_w);
  Image out(x.channels, out_h, out_w);
  for (int c = 0; c < x.channels; ++c) {
    for (int y = 0; y < x.height; ++y) {
      for (int i = 0; i < out_w; ++i) {
        double acc = 0.0;
        const double* w = &tx.weights[static_cast<std::size_t>(i) * tx.max_taps];
        for (int j = 0; j < tx.count[i]; ++j) {
          const int sx = std::clamp(tx.first[i] + j, 0, x.width - 1);
          acc += w[j] * x.at(c, y, sx);
        }
        tmp[static_cast<std::size_t>(y) * out_w + i] = acc;
      }
    }
    for (int i = 0; i < out_h; ++i) {
      const double* w = &ty.weights[static_cast<std::size_t>(i) * ty.max_taps];
      for (int xo = 0; xo < out_w; ++xo) {
        double acc = 0.0;
        for (int j = 0; j < ty.count[i]; ++j) {
          const int sy = std::clamp(ty.first[i] + j, 0, x.height - 1);
          acc += w[j] * tmp[static_cast<std::size_t>(sy) * out_w + xo];
        }
        out.at(c, i, xo) = static_cast<float>(std::clamp(acc, -1.0, 1.0));
      }
    }
  }
  return out;
}

/// Bicubic downsampling by an integer factor; both spatial dims must divide by f.
inline Image downsample(const Image& x, int f) {
  if (f < 1) throw ArgumentError("downsample factor must be >= 1");
  if (x.height % f != 0 || x.width % f != 0) {
    throw DimensionError("image " + std::to_string(x.height) + "x" + std::to_string(x.width) +
                         " is not divisible by factor " + std::to_string(f));
  }
  if (f == 1) return x;
  return resize_bicubic(x, x.height / f, x.width / f);
}

/// Bicubic upsampling by an integer factor.
inline Image upsample(const Image& x, int f) {
  if (f < 1) throw ArgumentError("upsample factor must be >= 1");
  if (f == 1) return x;
  return resize_bicubic(x, x.height * f, x.width * f);
}

}  // namespace semcast
