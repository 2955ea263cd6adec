#pragma once

#include <cstddef>
#include <algorithm>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "semcast/errors.hpp"

namespace semcast::nn {

/// Dense C×H×W activation tensor (single sample, no batch dimension).
template <class T>
struct Tensor {
  int c = 0;
  int h = 0;
  int w = 0;
  std::vector<T> data;

  Tensor() = default;
  Tensor(int c_, int h_, int w_, T fill = T(0))
      : c(c_), h(h_), w(w_), data(static_cast<std::size_t>(c_) * h_ * w_, fill) {}

  std::size_t size() const { return data.size(); }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  T& at(int ch, int y, int x) { return data[(static_cast<std::size_t>(ch) * h + y) * w + x]; }
  T at(int ch, int y, int x) const { return data[(static_cast<std::size_t>(ch) * h + y) * w + x]; }
  bool same_shape(const Tensor& o) const { return c == o.c && h == o.h && w == o.w; }
  std::string shape_str() const {
    return std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w);
  }
};

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatMap = Eigen::Map<RowMat<T>>;
template <class T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

/// Learnable array with its gradient accumulator.
template <class T>
struct Param {
  std::vector<T> value;
  std::vector<T> grad;

  void resize(std::size_t n) {
    value.assign(n, T(0));
    grad.assign(n, T(0));
  }
  void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
  std::size_t size() const { return value.size(); }
};

namespace detail {

// Output positions o in [0, n) whose input coordinate o*stride - pad + k lies in [0, size).
inline std::pair<int, int> valid_range(int n, int size, int stride, int pad, int k) {
  int lo = 0;
  while (lo < n && lo * stride - pad + k < 0) ++lo;
  int hi = n;
  while (hi > lo && (hi - 1) * stride - pad + k >= size) --hi;
  return {lo, hi};
}

}  // namespace detail

/// Unfolds k×k patches into a (C·k·k) × (oh·ow) row-major matrix.
template <class T>
RowMat<T> im2col(const Tensor<T>& x, int k, int stride, int pad, int oh, int ow) {
  const Eigen::Index cols = static_cast<Eigen::Index>(oh) * ow;
  RowMat<T> out(static_cast<Eigen::Index>(x.c) * k * k, cols);
  Eigen::Index row = 0;
  for (int ch = 0; ch < x.c; ++ch) {
    for (int ky = 0; ky < k; ++ky) {
      const auto [y0, y1] = detail::valid_range(oh, x.h, stride, pad, ky);
      for (int kx = 0; kx < k; ++kx, ++row) {
        const auto [x0, x1] = detail::valid_range(ow, x.w, stride, pad, kx);
        T* dst = out.data() + row * cols;
        for (int oy = 0; oy < oh; ++oy) {
          T* d = dst + static_cast<std::size_t>(oy) * ow;
          if (oy < y0 || oy >= y1) {
            std::fill(d, d + ow, T(0));
            continue;
          }
          const int iy = oy * stride - pad + ky;
          const T* src = &x.data[(static_cast<std::size_t>(ch) * x.h + iy) * x.w];
          const int off = kx - pad;
          std::fill(d, d + x0, T(0));
          if (stride == 1) {
            std::copy(src + x0 + off, src + x1 + off, d + x0);
          } else {
            for (int ox = x0; ox < x1; ++ox) d[ox] = src[ox * stride + off];
          }
          std::fill(d + x1, d + ow, T(0));
        }
      }
    }
  }
  return out;
}

/// Adjoint of im2col: scatters-and-adds patch columns back into a C×H×W tensor.
template <class T>
Tensor<T> col2im(const T* cols_data, int c, int h, int w, int k, int stride, int pad, int oh, int ow) {
  Tensor<T> out(c, h, w);
  const std::size_t cols = static_cast<std::size_t>(oh) * ow;
  std::size_t row = 0;
  for (int ch = 0; ch < c; ++ch) {
    for (int ky = 0; ky < k; ++ky) {
      const auto [y0, y1] = detail::valid_range(oh, h, stride, pad, ky);
      for (int kx = 0; kx < k; ++kx, ++row) {
        const auto [x0, x1] = detail::valid_range(ow, w, stride, pad, kx);
        const T* src = cols_data + row * cols;
        for (int oy = y0; oy < y1; ++oy) {
          const int iy = oy * stride - pad + ky;
          T* dst = &out.data[(static_cast<std::size_t>(ch) * h + iy) * w];
          const int off = kx - pad;
          const T* s = src + static_cast<std::size_t>(oy) * ow;
          for (int ox = x0; ox < x1; ++ox) dst[ox * stride + off] += s[ox];
        }
      }
    }
  }
  return out;
}

}  // namespace semcast::nn
