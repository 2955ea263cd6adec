#include <algorithm>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "support.hpp"
#include "semcast/saliency.hpp"

using namespace semcast;

namespace {

nn::Tensor<float> filled(int c, int h, int w, float v) { return nn::Tensor<float>(c, h, w, v); }

SaliencyMap random_map(std::mt19937_64& rng, int h, int w) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  SaliencyMap m(h, w);
  for (auto& v : m.values) v = u(rng);
  return m;
}

}  // namespace

TEST(GradCam, OpposingChannelsCancelToZero) {
  auto a = filled(2, 4, 4, 1.0f);
  auto g = filled(2, 4, 4, 1.0f);
  std::fill(g.data.begin() + 16, g.data.end(), -1.0f);
  const auto map = gradcam_from_activations(a, g, 16, 16);
  EXPECT_EQ(map.height, 16);
  for (float v : map.values) EXPECT_EQ(v, 0.0f);
}

TEST(GradCam, SingleChannelFollowsActivations) {
  auto a = filled(1, 4, 4, 0.0f);
  a.at(0, 1, 2) = 3.0f;
  a.at(0, 3, 0) = 1.0f;
  const auto g = filled(1, 4, 4, 0.5f);
  const auto map = gradcam_from_activations(a, g, 4, 4);
  EXPECT_FLOAT_EQ(map.at(1, 2), 1.0f);
  EXPECT_NEAR(map.at(3, 0), 1.0f / 3.0f, 1e-6);
  EXPECT_EQ(map.at(0, 0), 0.0f);
}

TEST(GradCam, NegativeEvidenceIsRectified) {
  auto a = filled(1, 2, 2, 1.0f);
  a.at(0, 0, 0) = 2.0f;
  const auto g = filled(1, 2, 2, -1.0f);
  for (float v : gradcam_from_activations(a, g, 2, 2).values) EXPECT_EQ(v, 0.0f);
  EXPECT_THROW(gradcam_from_activations(a, filled(1, 3, 2, 1.0f), 2, 2), DimensionError);
}

TEST(GradCam, ModelMapsAreNormalized) {
  std::mt19937_64 rng(7);
  TaskModel model(test::tiny_task_config(32, 4), 3);
  for (int i = 0; i < 6; ++i) {
    const Image x = test::smooth_image(rng, 3, 32, 32);
    const auto map = gradcam(model, x);
    ASSERT_EQ(map.height, 32);
    ASSERT_EQ(map.width, 32);
    const float mx = *std::max_element(map.values.begin(), map.values.end());
    for (float v : map.values) EXPECT_GE(v, 0.0f);
    EXPECT_TRUE(mx == 1.0f || mx == 0.0f);
    const auto in = model.cam_inputs(x);
    EXPECT_EQ(in.target_class, model.predict(x));
  }
  EXPECT_THROW(model.cam_inputs(Image(3, 32, 32), 4), ArgumentError);
}

TEST(Pooling, HalfFilledBlock) {
  SaliencyMap m(8, 8);
  for (int y = 0; y < 2; ++y) {
    for (int x = 0; x < 4; ++x) m.at(y, x) = 1.0f;
  }
  const auto g = pool_to_latent(m, 4);
  ASSERT_EQ(g.h, 2);
  ASSERT_EQ(g.w, 2);
  EXPECT_FLOAT_EQ(g.score({0, 0}), 1.0f);
  EXPECT_EQ(g.score({0, 1}), 0.0f);
  EXPECT_EQ(g.score({1, 0}), 0.0f);
  EXPECT_EQ(g.score({1, 1}), 0.0f);
  EXPECT_THROW(pool_to_latent(SaliencyMap(6, 8), 4), DimensionError);
}

TEST(Pooling, ConstantMapAndScaleInvariance) {
  const auto flat = pool_to_latent(SaliencyMap(16, 16, 0.3f), 4);
  for (float v : flat.scores) EXPECT_FLOAT_EQ(v, 1.0f);
  for (float v : pool_to_latent(SaliencyMap(16, 16, 0.0f), 4).scores) EXPECT_EQ(v, 0.0f);

  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    auto m = random_map(rng, 16, 16);
    auto scaled = m;
    for (auto& v : scaled.values) v *= 0.37f;
    const auto a = pool_to_latent(m, 4), b = pool_to_latent(scaled, 4);
    const auto am = std::max_element(a.scores.begin(), a.scores.end()) - a.scores.begin();
    const auto bm = std::max_element(b.scores.begin(), b.scores.end()) - b.scores.begin();
    EXPECT_EQ(am, bm);
  }
}

TEST(Selection, CountOn56x56Grid) {
  EXPECT_EQ(selection_count(10, 3136), 314u);
  EXPECT_EQ(selection_count(0, 3136), 0u);
  EXPECT_EQ(selection_count(100, 3136), 3136u);
  EXPECT_EQ(selection_count(1, 10), 1u);
  EXPECT_THROW(selection_count(101, 10), ArgumentError);
  EXPECT_THROW(selection_count(-1, 10), ArgumentError);
}

TEST(Selection, TopCellsAndTieOrder) {
  ImportanceGrid g;
  g.h = 2;
  g.w = 3;
  g.scores = {0.2f, 0.9f, 0.5f, 0.9f, 0.1f, 0.5f};
  const auto sel = select_top_p(g, 50);
  ASSERT_EQ(sel.size(), 3u);
  EXPECT_EQ(sel[0], (Cell{0, 1}));
  EXPECT_EQ(sel[1], (Cell{1, 0}));
  EXPECT_EQ(sel[2], (Cell{0, 2}));
  EXPECT_EQ(g.selected, sel);
}

TEST(Selection, MonotoneInPercent) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const auto g = pool_to_latent(random_map(rng, 32, 32), 4);
    std::set<Cell> prev;
    for (int p : {0, 5, 10, 20, 30, 50, 70, 90, 100}) {
      const auto sel = select_top_p(g, p);
      const std::set<Cell> cur(sel.begin(), sel.end());
      EXPECT_EQ(cur.size(), sel.size());
      EXPECT_TRUE(std::includes(cur.begin(), cur.end(), prev.begin(), prev.end())) << "p=" << p;
      prev = cur;
    }
    EXPECT_EQ(prev.size(), 64u);
  }
}

TEST(RegionBox, ConnectedComponentAroundPeak) {
  SaliencyMap m(8, 8);
  m.at(2, 3) = 1.0f;
  m.at(2, 4) = 0.6f;
  m.at(3, 3) = 0.7f;
  m.at(6, 6) = 0.9f;  // strong but disconnected
  EXPECT_EQ(top_region_box(m, 0.5f), (PixelBox{2, 3, 4, 5}));
  EXPECT_EQ(top_region_box(m, 0.65f), (PixelBox{2, 3, 4, 4}));
  EXPECT_TRUE(top_region_box(SaliencyMap(4, 4), 0.5f).empty());
}

// Cell (a, b) covers pixels [4a, 4a+4) x [4b, 4b+4): perturbing that block
// changes the embedding of (a, b) and leaves cells beyond the encoder's
// receptive field untouched.
TEST(Correspondence, PixelBlockMapsToItsCell) {
  std::mt19937_64 rng(9);
  Codec codec(test::tiny_codec_config(), 4);
  const Image x = test::smooth_image(rng, 3, 64, 64);
  const auto e0 = codec.embed(x);
  for (const Cell target : {Cell{0, 0}, Cell{5, 9}, Cell{15, 15}}) {
    Image y = x;
    for (int c = 0; c < 3; ++c) {
      for (int py = 4 * target.row; py < 4 * target.row + 4; ++py) {
        for (int px = 4 * target.col; px < 4 * target.col + 4; ++px) y.at(c, py, px) = -y.at(c, py, px) + 0.3f;
      }
    }
    const auto e1 = codec.embed(y);
    auto delta = [&](int a, int b) {
      double d = 0;
      for (int j = 0; j < e0.c; ++j) d += std::fabs(e0.at(j, a, b) - e1.at(j, a, b));
      return d;
    };
    EXPECT_GT(delta(target.row, target.col), 0.0);
    for (int a = 0; a < 16; ++a) {
      for (int b = 0; b < 16; ++b) {
        if (std::abs(a - target.row) >= 3 || std::abs(b - target.col) >= 3) {
          EXPECT_EQ(delta(a, b), 0.0) << a << "," << b;
        }
      }
    }
  }
}
