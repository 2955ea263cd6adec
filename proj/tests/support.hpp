#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include <gtest/gtest.h>

#include "semcast/classifier.hpp"
#include "semcast/codec.hpp"
#include "semcast/image.hpp"

namespace semcast::test {

inline Image random_image(std::mt19937_64& rng, int c, int h, int w) {
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  Image x(c, h, w);
  for (auto& v : x.pixels) v = u(rng);
  return x;
}

// Smooth random image: a few low-frequency cosines, so codecs see structure.
inline Image smooth_image(std::mt19937_64& rng, int c, int h, int w) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image x(c, h, w);
  for (int ch = 0; ch < c; ++ch) {
    const double fx = 1 + 3 * u(rng), fy = 1 + 3 * u(rng), ph = 6.28 * u(rng), a = 0.3 + 0.5 * u(rng);
    for (int y = 0; y < h; ++y) {
      for (int xx = 0; xx < w; ++xx) {
        x.at(ch, y, xx) = static_cast<float>(a * std::cos(fx * xx * 6.28 / w + fy * y * 6.28 / h + ph));
      }
    }
  }
  return x;
}

inline CodecConfig tiny_codec_config(int K = 16) {
  CodecConfig c;
  c.K = K;
  c.d_c = 8;
  c.width = 4;
  return c;
}

inline ClassifierConfig tiny_task_config(int side = 32, int classes = 3) {
  ClassifierConfig c;
  c.classes = classes;
  c.width = 4;
  c.input_h = side;
  c.input_w = side;
  return c;
}

/// Fresh per-test scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  auto dir = std::filesystem::temp_directory_path() / "semcast_tests" /
             (std::string(info->test_suite_name()) + "." + info->name() + "." + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace semcast::test
