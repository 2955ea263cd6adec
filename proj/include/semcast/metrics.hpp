#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "semcast/errors.hpp"
#include "semcast/image.hpp"

namespace semcast {

/// SSIM on [0,1]-rescaled data, 11×11 Gaussian window (σ = 1.5), averaged
/// over valid window positions and channels.
inline double ssim(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw DimensionError("ssim: images differ in shape");
  constexpr int kWin = 11;
  constexpr double kSigma = 1.5;
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  const int win = std::min({kWin, a.height, a.width});
  std::vector<double> g(static_cast<std::size_t>(win));
  double gsum = 0.0;
  for (int i = 0; i < win; ++i) {
    const double d = i - (win - 1) / 2.0;
    g[i] = std::exp(-d * d / (2 * kSigma * kSigma));
    gsum += g[i];
  }
  for (auto& v : g) v /= gsum;

  const int oh = a.height - win + 1;
  const int ow = a.width - win + 1;
  double total = 0.0;
  for (int c = 0; c < a.channels; ++c) {
    auto px = [&](const Image& im, int y, int x) { return (im.at(c, y, x) + 1.0) * 0.5; };
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        for (int i = 0; i < win; ++i) {
          for (int j = 0; j < win; ++j) {
            const double w = g[i] * g[j];
            const double va = px(a, y + i, x + j);
            const double vb = px(b, y + i, x + j);
            ma += w * va;
            mb += w * vb;
            saa += w * va * va;
            sbb += w * vb * vb;
            sab += w * va * vb;
          }
        }
        const double va = saa - ma * ma;
        const double vb = sbb - mb * mb;
        const double cov = sab - ma * mb;
        total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      }
    }
  }
  return total / (static_cast<double>(a.channels) * oh * ow);
}

struct SignTest {
  int positive = 0;
  int negative = 0;
  int ties = 0;
  double p_value = 1.0;  // two-sided, exact binomial over non-tied pairs
};

/// Exact two-sided sign test on paired differences.
inline SignTest sign_test(const std::vector<double>& differences) {
  SignTest t;
  for (const double d : differences) {
    if (d > 0) ++t.positive;
    else if (d < 0) ++t.negative;
    else ++t.ties;
  }
  const int n = t.positive + t.negative;
  if (n == 0) return t;
  const int k = std::min(t.positive, t.negative);
  // P(X <= k) for X ~ Binomial(n, 1/2), summed in log space.
  double tail = 0.0;
  for (int i = 0; i <= k; ++i) {
    const double log_term = std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0) - n * std::log(2.0);
    tail += std::exp(log_term);
  }
  t.p_value = std::min(1.0, 2.0 * tail);
  return t;
}

inline double mean(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (const double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace semcast
