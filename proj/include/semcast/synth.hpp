#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "semcast/dataset.hpp"
#include "semcast/errors.hpp"
#include "semcast/image.hpp"
#include "semcast/image_io.hpp"

// Procedural shapes dataset: one anti-aliased object over a smooth
// background with faint blob distractors. Fine label = shape * 2 + colour
// family; the coarse label is the shape alone.

namespace semcast::synth {

enum class Shape { disk = 0, square = 1, triangle = 2, cross = 3, ring = 4 };
inline constexpr int kShapes = 5;
inline constexpr int kColourFamilies = 2;  // warm, cool
inline constexpr int kClasses = kShapes * kColourFamilies;

/// Coarse (shape-only) grouping of the fine labels.
inline std::vector<int> shape_groups() {
  std::vector<int> g(kClasses);
  for (int i = 0; i < kClasses; ++i) g[i] = i / kColourFamilies;
  return g;
}

struct Config {
  int size = 64;
  int train = 1400;
  int val = 200;
  int test = 400;
  std::uint64_t seed = 7;
  int supersample = 4;
};

namespace detail {

inline std::array<float, 3> hsv_to_rgb(double h, double s, double v) {
  h = std::fmod(h, 360.0);
  if (h < 0) h += 360.0;
  const double c = v * s;
  const double x = c * (1 - std::fabs(std::fmod(h / 60.0, 2.0) - 1));
  const double m = v - c;
  double r = 0, g = 0, b = 0;
  if (h < 60) { r = c; g = x; }
  else if (h < 120) { r = x; g = c; }
  else if (h < 180) { g = c; b = x; }
  else if (h < 240) { g = x; b = c; }
  else if (h < 300) { r = x; b = c; }
  else { r = c; b = x; }
  return {static_cast<float>(r + m), static_cast<float>(g + m), static_cast<float>(b + m)};
}

// (u, v) in the object frame, scaled so the shape spans roughly [-1, 1].
inline bool inside(Shape s, double u, double v) {
  constexpr double kSqrt3 = 1.7320508075688772;
  switch (s) {
    case Shape::disk: return u * u + v * v <= 1.0;
    case Shape::square: return std::max(std::fabs(u), std::fabs(v)) <= 0.82;
    case Shape::triangle: return v <= 0.5 && kSqrt3 * u - v <= 1.0 && -kSqrt3 * u - v <= 1.0;
    case Shape::cross:
      return (std::fabs(u) <= 0.3 && std::fabs(v) <= 0.95) || (std::fabs(v) <= 0.3 && std::fabs(u) <= 0.95);
    case Shape::ring: {
      const double r2 = u * u + v * v;
      return r2 <= 1.0 && r2 >= 0.36;
    }
  }
  return false;
}

}  // namespace detail

/// Renders one sample of class `label` in [-1, 1] pixel range.
inline Image render(std::mt19937_64& rng, int label, int size = 64, int supersample = 4) {
  if (label < 0 || label >= kClasses) throw ArgumentError("synthetic label out of range");
  std::uniform_real_distribution<double> U(0.0, 1.0);
  const auto shape = static_cast<Shape>(label / kColourFamilies);
  const bool warm = label % kColourFamilies == 0;

  // Background: low-saturation linear gradient.
  const auto bg0 = detail::hsv_to_rgb(360 * U(rng), 0.1 + 0.2 * U(rng), 0.3 + 0.4 * U(rng));
  const auto bg1 = detail::hsv_to_rgb(360 * U(rng), 0.1 + 0.2 * U(rng), 0.3 + 0.4 * U(rng));
  const double gdir = 2 * M_PI * U(rng);
  const double gx = std::cos(gdir), gy = std::sin(gdir);

  struct Blob { double x, y, sigma, amp; };
  std::vector<Blob> blobs(2 + static_cast<int>(U(rng) * 3));
  for (auto& b : blobs) {
    b = {size * U(rng), size * U(rng), 3 + 6 * U(rng), (U(rng) < 0.5 ? -1 : 1) * (0.06 + 0.1 * U(rng))};
  }

  const double hue = warm ? -20 + 70 * U(rng) : 160 + 90 * U(rng);
  const auto fg = detail::hsv_to_rgb(hue, 0.65 + 0.35 * U(rng), 0.65 + 0.35 * U(rng));
  const double radius = size * (0.17 + 0.14 * U(rng));
  const double margin = radius + 2;
  const double cx = margin + (size - 2 * margin) * U(rng);
  const double cy = margin + (size - 2 * margin) * U(rng);
  const double angle = shape == Shape::disk || shape == Shape::ring ? 0.0 : 2 * M_PI * U(rng);
  const double ca = std::cos(angle), sa = std::sin(angle);

  Image img(3, size, size);
  const double inv_ss = 1.0 / supersample;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      int hits = 0;
      for (int sy = 0; sy < supersample; ++sy) {
        for (int sx = 0; sx < supersample; ++sx) {
          const double px = x + (sx + 0.5) * inv_ss - cx;
          const double py = y + (sy + 0.5) * inv_ss - cy;
          const double u = (ca * px + sa * py) / radius;
          const double v = (-sa * px + ca * py) / radius;
          hits += detail::inside(shape, u, v) ? 1 : 0;
        }
      }
      const double cover = static_cast<double>(hits) / (supersample * supersample);
      const double t = std::clamp(0.5 + ((x - size / 2.0) * gx + (y - size / 2.0) * gy) / size, 0.0, 1.0);
      double shade = 0.0;
      for (const auto& b : blobs) {
        const double dx = x - b.x, dy = y - b.y;
        shade += b.amp * std::exp(-(dx * dx + dy * dy) / (2 * b.sigma * b.sigma));
      }
      for (int c = 0; c < 3; ++c) {
        const double back = std::clamp((1 - t) * bg0[c] + t * bg1[c] + shade, 0.0, 1.0);
        const double v = (1 - cover) * back + cover * fg[c];
        img.at(c, y, x) = static_cast<float>(std::clamp(v * 2.0 - 1.0, -1.0, 1.0));
      }
    }
  }
  return img;
}

/// Writes <dir>/<split>/NNNNN.png plus <dir>/<split>.csv manifests.
/// Labels are balanced per split and shuffled.
inline void write_dataset(const std::filesystem::path& dir, const Config& cfg) {
  if (cfg.train + cfg.val + cfg.test <= 0) throw ArgumentError("empty synthetic dataset");
  std::mt19937_64 rng(cfg.seed);
  const std::array<std::pair<Split, int>, 3> splits{{{Split::train, cfg.train}, {Split::val, cfg.val},
                                                     {Split::test, cfg.test}}};
  for (const auto& [split, count] : splits) {
    const auto sub = dir / split_name(split);
    std::filesystem::create_directories(sub);
    std::vector<int> labels(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) labels[i] = i % kClasses;
    std::shuffle(labels.begin(), labels.end(), rng);
    LabeledDataset ds;
    ds.split = split;
    ds.class_count = kClasses;
    for (int i = 0; i < count; ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "%05d.png", i);
      save_image(sub / name, render(rng, labels[i], cfg.size, cfg.supersample));
      ds.items.push_back({sub / name, labels[i]});
    }
    write_manifest(dir / (std::string(split_name(split)) + ".csv"), ds);
  }
}

}  // namespace semcast::synth
