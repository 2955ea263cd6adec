#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "support.hpp"
#include "semcast/rate.hpp"
#include "semcast/semcom.hpp"

using namespace semcast;

namespace {

struct Models {
  Codec codec{test::tiny_codec_config(16), 11};
  TaskModel task{test::tiny_task_config(32, 3), 12};
};

double round3(double v) { return std::round(v * 1000.0) / 1000.0; }

}  // namespace

TEST(Rate, Context224x224With8192Codewords) {
  const Geometry g{224, 224, 4, 4, 8192};
  EXPECT_EQ(g.bits(), 13);
  EXPECT_EQ(g.context_cells(), 14 * 14);
  EXPECT_EQ(g.context_bits(), 2548);
  EXPECT_EQ(round3(bits_to_kb(g.context_bits())), 0.311);
  EXPECT_EQ(g.image_cells(), 3136);
  EXPECT_EQ(g.image_bits(), 40768);
  EXPECT_EQ(round3(bits_to_kb(g.image_bits())), 4.977);
}

TEST(Rate, FullLatent256x512With8192Codewords) {
  const Geometry g{256, 512, 4, 4, 8192};
  EXPECT_EQ(g.image_bits(), 106496);
  EXPECT_DOUBLE_EQ(bits_to_kb(g.image_bits()), 13.0);
  EXPECT_LE(11.70, bits_to_kb(g.image_bits()));
}

TEST(Rate, DeskGeometry) {
  const Geometry g{64, 64, 4, 4, 512};
  EXPECT_EQ(g.context_h(), 4);
  EXPECT_EQ(g.context_w(), 4);
  EXPECT_EQ(g.context_bits(), 144);
  EXPECT_EQ(g.image_bits(), 2304);
  EXPECT_EQ(g.raw_bits(), 3L * 64 * 64 * 8);
  EXPECT_THROW((Geometry{60, 64, 4, 4, 512}.validate()), DimensionError);
  EXPECT_THROW((Geometry{64, 64, 4, 4, 1}.validate()), ArgumentError);
}

TEST(Rate, BitsPerIndex) {
  EXPECT_EQ(bits_per_index(2), 1);
  EXPECT_EQ(bits_per_index(3), 2);
  EXPECT_EQ(bits_per_index(512), 9);
  EXPECT_EQ(bits_per_index(513), 10);
  EXPECT_EQ(bits_per_index(8192), 13);
  EXPECT_THROW(bits_per_index(1), ArgumentError);
}

TEST(Rate, PositionModeOn56x56Grid) {
  EXPECT_EQ(position_list_bits(3136, 314), 16 + 314 * 12);
  EXPECT_EQ(position_list_bits(3136, 314), 3784);
  EXPECT_EQ(position_bitmap_bits(3136), 3136);
  EXPECT_EQ(choose_position_mode(3136, 314), PositionMode::bitmap);
  EXPECT_EQ(choose_position_mode(3136, 10), PositionMode::list);
}

TEST(Rate, PatchBitsNonDecreasingInPercent) {
  for (const Geometry g : {Geometry{64, 64, 4, 4, 512}, Geometry{224, 224, 4, 4, 8192}}) {
    long prev = -1;
    for (int p = 0; p <= 100; ++p) {
      const long bits = context_plus_task_bits(g, p);
      EXPECT_GE(bits, prev) << "p=" << p;
      prev = bits;
    }
  }
}

TEST(Fusion, TwoByTwoExample) {
  LatentGrid z_u(2, 2, 8, 8);
  z_u.indices = {1, 2, 3, 4};
  LatentPatch patch;
  patch.cells = {{0, 1}};
  patch.indices = {9};
  const auto z_r = fuse(z_u, patch, build_mask({{0, 1}}, 2, 2));
  EXPECT_EQ(z_r.indices, (std::vector<std::uint32_t>{1, 9, 3, 4}));
}

TEST(Fusion, MaskMatchesSelection) {
  const auto m = build_mask({{0, 0}, {1, 2}, {0, 0}}, 2, 3);
  EXPECT_EQ(m.count(), 2u);
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 3; ++b) EXPECT_EQ(m.at(a, b), (a == 0 && b == 0) || (a == 1 && b == 2));
  }
  EXPECT_THROW(build_mask({{2, 0}}, 2, 3), ArgumentError);
  LatentGrid z_u(2, 3, 8, 12);
  EXPECT_THROW(fuse(z_u, LatentPatch{}, m), ProtocolError);
  EXPECT_THROW(fuse(LatentGrid(3, 3, 12, 12), LatentPatch{}, m), DimensionError);
}

TEST(Fusion, AllOnesAndAllZerosLimits) {
  Models md;
  std::mt19937_64 rng(3);
  for (int i = 0; i < 5; ++i) {
    const Image x = test::smooth_image(rng, 3, 32, 32);
    const auto a = analyze(md.codec, md.task, x, 4);
    std::vector<Cell> all;
    for (std::size_t c = 0; c < a.z.cells(); ++c) all.push_back(a.z.cell(c));
    const auto z_all = fuse(a.z_u, extract_patch(a.z, all), build_mask(all, a.z.h, a.z.w));
    EXPECT_EQ(z_all, a.z);
    EXPECT_EQ(md.codec.decode(z_all), md.codec.decode(md.codec.encode(x)));
    EXPECT_EQ(fuse(a.z_u, LatentPatch{}, build_mask({}, a.z.h, a.z.w)), a.z_u);
  }
}

TEST(Context, ShapesAndReprojection) {
  Models md;
  std::mt19937_64 rng(4);
  const Image x = test::smooth_image(rng, 3, 32, 32);
  const auto ctx = make_context(md.codec, x, 4);
  EXPECT_EQ(ctx.z_c.h, 2);
  EXPECT_EQ(ctx.z_c.w, 2);
  EXPECT_EQ(ctx.rate_bits, 4 * 4);
  const auto z_u = reproject_context(md.codec, ctx.z_c, 4);
  EXPECT_EQ(z_u.h, 8);
  EXPECT_EQ(z_u.w, 8);
  EXPECT_EQ(z_u, md.codec.encode(upsample(md.codec.decode(ctx.z_c), 4)));
  EXPECT_THROW(make_context(md.codec, Image(3, 24, 24), 4), DimensionError);
}

TEST(Compatibility, TopKRelaxation) {
  Models md;
  std::mt19937_64 rng(5);
  const Image x = test::smooth_image(rng, 3, 32, 32);
  EXPECT_TRUE(compatibility(md.task, x, x));
  const Image other = test::smooth_image(rng, 3, 32, 32);
  EXPECT_TRUE(compatibility(md.task, x, other, 3));  // 3 classes: always inside the top 3
}

TEST(Lsf, RateChainMinimalityAndAgreement) {
  Models md;
  std::mt19937_64 rng(6);
  LsfOptions opt;
  int compatible = 0;
  for (int i = 0; i < 12; ++i) {
    const Image x = test::smooth_image(rng, 3, 32, 32);
    const auto a = analyze(md.codec, md.task, x, 4);
    const auto d = lsf_select(md.codec, md.task, a, opt);
    EXPECT_LE(a.geometry.context_bits(), d.rate_bits);
    EXPECT_LE(d.rate_bits, a.geometry.image_bits());

    // exhaustive re-evaluation of every p
    int first = -1;
    for (int p : opt.search_set) {
      if (compatibility(md.task, x, md.codec.decode(fused_for_percent(a, p)))) {
        first = p;
        break;
      }
    }
    EXPECT_EQ(d.first_compatible, first);
    EXPECT_EQ(d.compatible, first >= 0);
    if (first >= 0) ++compatible;
    if (d.mode == LsfMode::context_plus_task) {
      EXPECT_EQ(d.percent, first);
      EXPECT_EQ(d.fused, fused_for_percent(a, first));
      EXPECT_EQ(d.rate_bits, context_plus_task_bits(a.geometry, first));
    } else if (d.mode == LsfMode::full_latent) {
      EXPECT_GT(context_plus_task_bits(a.geometry, first), a.geometry.image_bits());
      EXPECT_EQ(d.fused, a.z);
    } else {
      EXPECT_EQ(first, -1);
      EXPECT_EQ(d.fused, a.z_u);
    }
    const auto r = rate_report(d, a.geometry);
    EXPECT_EQ(r.rate_bits, d.rate_bits);
  }
  EXPECT_GT(compatible, 0);
}

TEST(Lsf, FixedDecisions) {
  Models md;
  std::mt19937_64 rng(7);
  const auto a = analyze(md.codec, md.task, test::smooth_image(rng, 3, 32, 32), 4);
  const auto ctx = fixed_decision(a, 0);
  EXPECT_EQ(ctx.mode, LsfMode::context_only);
  EXPECT_EQ(ctx.rate_bits, a.geometry.context_bits());
  const auto p20 = fixed_decision(a, 20);
  EXPECT_EQ(p20.selected.size(), selection_count(20, 64));
  EXPECT_EQ(p20.rate_bits, a.geometry.context_bits() + patch_bits(64, 13, 4));
  const auto full = full_latent_decision(a);
  EXPECT_EQ(full.rate_bits, 64 * 4);
}
