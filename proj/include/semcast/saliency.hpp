#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <vector>

#include "semcast/classifier.hpp"
#include "semcast/errors.hpp"
#include "semcast/image.hpp"
#include "semcast/latent.hpp"

namespace semcast {

/// Single-channel H×W map with values in [0, 1].
struct SaliencyMap {
  int height = 0;
  int width = 0;
  std::vector<float> values;

  SaliencyMap() = default;
  SaliencyMap(int h, int w, float fill = 0.0f)
      : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {}
  float& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
  float at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

/// Per-latent-cell importance aligned with a LatentGrid, plus the selected set I_s.
struct ImportanceGrid {
  int h = 0;
  int w = 0;
  std::vector<float> scores;
  std::vector<Cell> selected;

  float score(Cell c) const { return scores[static_cast<std::size_t>(c.row) * w + c.col]; }

  /// All cells by descending score; equal scores keep row-major order.
  std::vector<Cell> ranking() const {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::vector<Cell> out;
    out.reserve(order.size());
    for (auto i : order) out.push_back({static_cast<int>(i) / w, static_cast<int>(i) % w});
    return out;
  }
};

namespace detail {

inline void min_max_normalize(std::vector<float>& v) {
  if (v.empty()) return;
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const float mn = *lo, mx = *hi;
  if (mx <= 0.0f) {
    std::fill(v.begin(), v.end(), 0.0f);
  } else if (mx == mn) {
    std::fill(v.begin(), v.end(), 1.0f);
  } else {
    for (auto& x : v) x = (x - mn) / (mx - mn);
  }
}

inline void max_normalize(std::vector<float>& v) {
  if (v.empty()) return;
  const float mx = *std::max_element(v.begin(), v.end());
  if (mx <= 0.0f) {
    std::fill(v.begin(), v.end(), 0.0f);
    return;
  }
  for (auto& x : v) x /= mx;
}

// Half-pixel-centred bilinear resize with edge clamping.
inline std::vector<float> bilinear_resize(const std::vector<float>& src, int sh, int sw, int dh, int dw) {
  std::vector<float> out(static_cast<std::size_t>(dh) * dw);
  const double sy = static_cast<double>(sh) / dh;
  const double sx = static_cast<double>(sw) / dw;
  for (int y = 0; y < dh; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(sh - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, sh - 1);
    const double ty = fy - y0;
    for (int x = 0; x < dw; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(sw - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, sw - 1);
      const double tx = fx - x0;
      const double top = src[y0 * sw + x0] * (1 - tx) + src[y0 * sw + x1] * tx;
      const double bot = src[y1 * sw + x0] * (1 - tx) + src[y1 * sw + x1] * tx;
      out[static_cast<std::size_t>(y) * dw + x] = static_cast<float>(top * (1 - ty) + bot * ty);
    }
  }
  return out;
}

}  // namespace detail

/// GradCAM from final-layer activations and class-score gradients:
/// alpha_k = spatial mean of dA^k, map = ReLU(sum_k alpha_k A^k), bilinearly
/// resized to out_h×out_w and min-max normalized (an all-zero map stays zero).
template <class T>
SaliencyMap gradcam_from_activations(const nn::Tensor<T>& activations, const nn::Tensor<T>& gradients,
                                     int out_h, int out_w) {
  if (!activations.same_shape(gradients)) {
    throw DimensionError("activations " + activations.shape_str() + " and gradients " + gradients.shape_str() +
                         " differ in shape");
  }
  const std::size_t plane = activations.plane();
  std::vector<double> cam(plane, 0.0);
  for (int k = 0; k < activations.c; ++k) {
    double alpha = 0.0;
    for (std::size_t i = 0; i < plane; ++i) alpha += static_cast<double>(gradients.data[k * plane + i]);
    alpha /= static_cast<double>(plane);
    for (std::size_t i = 0; i < plane; ++i) cam[i] += alpha * static_cast<double>(activations.data[k * plane + i]);
  }
  std::vector<float> relu(plane);
  for (std::size_t i = 0; i < plane; ++i) relu[i] = cam[i] > 0.0 ? static_cast<float>(cam[i]) : 0.0f;

  SaliencyMap out(out_h, out_w);
  out.values = detail::bilinear_resize(relu, activations.h, activations.w, out_h, out_w);
  for (auto& v : out.values) v = std::max(v, 0.0f);
  detail::min_max_normalize(out.values);
  return out;
}

/// GradCAM of `model` on x for target_class (argmax prediction when < 0).
template <class T>
SaliencyMap gradcam(const BasicTaskModel<T>& model, const Image& x, int target_class = -1) {
  const auto in = model.cam_inputs(x, target_class);
  return gradcam_from_activations(in.activations, in.gradients, x.height, x.width);
}

/// Block-mean pooling of a pixel map onto the f_model-strided latent grid,
/// renormalized so the maximum cell is 1 (a zero map stays zero).
inline ImportanceGrid pool_to_latent(const SaliencyMap& map, int f_model) {
  if (f_model < 1 || map.height % f_model != 0 || map.width % f_model != 0) {
    throw DimensionError("saliency map " + std::to_string(map.height) + "x" + std::to_string(map.width) +
                         " is not divisible by f_model=" + std::to_string(f_model));
  }
  ImportanceGrid g;
  g.h = map.height / f_model;
  g.w = map.width / f_model;
  g.scores.assign(static_cast<std::size_t>(g.h) * g.w, 0.0f);
  const double inv = 1.0 / (static_cast<double>(f_model) * f_model);
  for (int a = 0; a < g.h; ++a) {
    for (int b = 0; b < g.w; ++b) {
      double s = 0.0;
      for (int y = a * f_model; y < (a + 1) * f_model; ++y) {
        for (int x = b * f_model; x < (b + 1) * f_model; ++x) s += map.at(y, x);
      }
      g.scores[static_cast<std::size_t>(a) * g.w + b] = static_cast<float>(s * inv);
    }
  }
  detail::max_normalize(g.scores);
  return g;
}

/// Number of cells selected for percentage p: ceil(p/100 · cells).
inline std::size_t selection_count(int percent, std::size_t cells) {
  if (percent < 0 || percent > 100) throw ArgumentError("percentage must lie in [0, 100]");
  return (static_cast<std::size_t>(percent) * cells + 99) / 100;
}

/// Top-p% cells (descending score, row-major tie-break). Also stored in grid.selected.
inline std::vector<Cell> select_top_p(ImportanceGrid& grid, int percent) {
  const auto n = selection_count(percent, grid.scores.size());
  auto order = grid.ranking();
  order.resize(n);
  grid.selected = order;
  return order;
}

inline std::vector<Cell> select_top_p(const ImportanceGrid& grid, int percent) {
  const auto n = selection_count(percent, grid.scores.size());
  auto order = grid.ranking();
  order.resize(n);
  return order;
}

/// Bounding box of the 4-connected region around the map's maximum whose
/// values are >= threshold · max. Empty box for an all-zero map.
inline PixelBox top_region_box(const SaliencyMap& map, float threshold = 0.5f) {
  if (map.values.empty()) return {};
  const auto it = std::max_element(map.values.begin(), map.values.end());
  if (*it <= 0.0f) return {};
  const float cut = *it * threshold;
  const auto start = static_cast<std::size_t>(it - map.values.begin());
  std::vector<char> seen(map.values.size(), 0);
  std::queue<std::size_t> q;
  q.push(start);
  seen[start] = 1;
  PixelBox box{map.height, map.width, 0, 0};
  while (!q.empty()) {
    const auto i = q.front();
    q.pop();
    const int y = static_cast<int>(i) / map.width;
    const int x = static_cast<int>(i) % map.width;
    box.top = std::min(box.top, y);
    box.left = std::min(box.left, x);
    box.bottom = std::max(box.bottom, y + 1);
    box.right = std::max(box.right, x + 1);
    const int dy[] = {-1, 1, 0, 0};
    const int dx[] = {0, 0, -1, 1};
    for (int n = 0; n < 4; ++n) {
      const int ny = y + dy[n], nx = x + dx[n];
      if (ny < 0 || ny >= map.height || nx < 0 || nx >= map.width) continue;
      const auto j = static_cast<std::size_t>(ny) * map.width + nx;
      if (!seen[j] && map.values[j] >= cut) {
        seen[j] = 1;
        q.push(j);
      }
    }
  }
  return box;
}

}  // namespace semcast
