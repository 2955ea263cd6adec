#include <cmath>
#include <fstream>
#include <random>

#include <gtest/gtest.h>
#include <opencv2/imgcodecs.hpp>

#include "support.hpp"
#include "semcast/dataset.hpp"
#include "semcast/image.hpp"
#include "semcast/image_io.hpp"

using namespace semcast;

namespace {

// Straightforward Catmull-Rom upsampler: four taps around the half-pixel
// source coordinate, border samples repeated.
double catmull_rom(double t) {
  t = std::fabs(t);
  if (t <= 1) return 1.5 * t * t * t - 2.5 * t * t + 1;
  if (t < 2) return -0.5 * t * t * t + 2.5 * t * t - 4 * t + 2;
  return 0;
}

Image reference_upsample(const Image& x, int f) {
  Image out(x.channels, x.height * f, x.width * f);
  auto clampi = [](int v, int n) { return std::min(std::max(v, 0), n - 1); };
  for (int c = 0; c < x.channels; ++c) {
    for (int oy = 0; oy < out.height; ++oy) {
      const double sy = (oy + 0.5) / f - 0.5;
      const int iy = static_cast<int>(std::floor(sy));
      for (int ox = 0; ox < out.width; ++ox) {
        const double sx = (ox + 0.5) / f - 0.5;
        const int ix = static_cast<int>(std::floor(sx));
        double acc = 0;
        for (int ky = iy - 1; ky <= iy + 2; ++ky) {
          for (int kx = ix - 1; kx <= ix + 2; ++kx) {
            acc += catmull_rom(sy - ky) * catmull_rom(sx - kx) *
                   x.at(c, clampi(ky, x.height), clampi(kx, x.width));
          }
        }
        out.at(c, oy, ox) = static_cast<float>(std::clamp(acc, -1.0, 1.0));
      }
    }
  }
  return out;
}

Image constant(float v, int c, int h, int w) { return Image(c, h, w, v); }

}  // namespace

TEST(Normalize, Endpoints) {
  EXPECT_EQ(normalize_u8(255), 1.0f);
  EXPECT_EQ(normalize_u8(0), -1.0f);
  for (int v = 0; v < 256; ++v) EXPECT_EQ(denormalize_u8(normalize_u8(static_cast<unsigned char>(v))), v);
}

TEST(Resample, Shapes256x512) {
  const Image x = constant(0.25f, 3, 256, 512);
  const Image d = downsample(x, 4);
  EXPECT_EQ(d.channels, 3);
  EXPECT_EQ(d.height, 64);
  EXPECT_EQ(d.width, 128);
  const Image u = upsample(d, 4);
  EXPECT_EQ(u.height, 256);
  EXPECT_EQ(u.width, 512);
}

TEST(Resample, FactorOneIsIdentity) {
  std::mt19937_64 rng(3);
  const Image x = test::random_image(rng, 3, 16, 24);
  EXPECT_EQ(downsample(x, 1), x);
  EXPECT_EQ(upsample(x, 1), x);
}

TEST(Resample, ConstantsArePreserved) {
  for (float v : {-1.0f, -0.3f, 0.0f, 0.7f, 1.0f}) {
    for (int f : {2, 4}) {
      const Image x = constant(v, 3, 32, 32);
      for (float p : downsample(x, f).pixels) EXPECT_NEAR(p, v, 1e-6);
      for (float p : upsample(x, f).pixels) EXPECT_NEAR(p, v, 1e-6);
      for (float p : downsample(upsample(x, f), f).pixels) EXPECT_NEAR(p, v, 1e-6);
    }
  }
}

TEST(Resample, UpsampleMatchesReferenceCatmullRom) {
  std::mt19937_64 rng(11);
  const Image x = test::random_image(rng, 2, 7, 9);
  for (int f : {2, 3, 4}) {
    const Image got = upsample(x, f);
    const Image want = reference_upsample(x, f);
    ASSERT_TRUE(got.same_shape(want));
    for (std::size_t i = 0; i < got.size(); ++i) ASSERT_NEAR(got.pixels[i], want.pixels[i], 1e-5) << "f=" << f;
  }
}

TEST(Resample, RoundTripShapeAndRange) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    const Image x = test::random_image(rng, 3, 16, 32);
    const Image y = downsample(upsample(x, 4), 4);
    EXPECT_TRUE(y.same_shape(x));
    for (float p : upsample(x, 4).pixels) {
      EXPECT_GE(p, -1.0f);
      EXPECT_LE(p, 1.0f);
    }
    for (float p : downsample(x, 4).pixels) {
      EXPECT_GE(p, -1.0f);
      EXPECT_LE(p, 1.0f);
    }
  }
}

TEST(Resample, Deterministic) {
  std::mt19937_64 rng(8);
  const Image x = test::random_image(rng, 3, 32, 32);
  EXPECT_EQ(upsample(downsample(x, 4), 4), upsample(downsample(x, 4), 4));
}

TEST(Resample, Errors) {
  const Image x = constant(0.0f, 3, 30, 32);
  EXPECT_THROW(downsample(x, 4), DimensionError);
  EXPECT_THROW(downsample(x, 0), ArgumentError);
  EXPECT_THROW(upsample(x, 0), ArgumentError);
  EXPECT_THROW(Image(0, 4, 4), DimensionError);
}

TEST(LoadImage, ResizesAndNormalizes) {
  const auto dir = test::scratch_dir("png");
  cv::Mat white(96, 96, CV_8UC3, cv::Scalar(255, 255, 255));
  ASSERT_TRUE(cv::imwrite((dir / "white.png").string(), white));
  const Image x = load_image(dir / "white.png", 64, 64);
  EXPECT_EQ(x.channels, 3);
  EXPECT_EQ(x.height, 64);
  EXPECT_EQ(x.width, 64);
  for (float p : x.pixels) EXPECT_NEAR(p, 1.0f, 1e-6);
}

TEST(LoadImage, ChannelsAreRgb) {
  const auto dir = test::scratch_dir("png");
  cv::Mat red(16, 16, CV_8UC3, cv::Scalar(0, 0, 255));  // BGR
  ASSERT_TRUE(cv::imwrite((dir / "red.png").string(), red));
  const Image x = load_image(dir / "red.png", 16, 16);
  EXPECT_NEAR(x.at(0, 8, 8), 1.0f, 1e-6);
  EXPECT_NEAR(x.at(1, 8, 8), -1.0f, 1e-6);
  EXPECT_NEAR(x.at(2, 8, 8), -1.0f, 1e-6);
}

TEST(LoadImage, SaveLoadRoundTripsEightBitValues) {
  const auto dir = test::scratch_dir("png");
  std::mt19937_64 rng(2);
  Image x = test::random_image(rng, 3, 16, 16);
  for (auto& v : x.pixels) v = normalize_u8(denormalize_u8(v));
  save_image(dir / "x.png", x);
  EXPECT_EQ(load_image(dir / "x.png", 16, 16), x);
}

TEST(LoadImage, ErrorsNameThePath) {
  const auto dir = test::scratch_dir("bad");
  const auto bogus = dir / "not_an_image.png";
  std::ofstream(bogus) << "hello";
  try {
    load_image(bogus, 64, 64);
    FAIL() << "expected IngestionError";
  } catch (const IngestionError& e) {
    EXPECT_NE(std::string(e.what()).find("not_an_image.png"), std::string::npos);
  }
  EXPECT_THROW(load_image(dir / "missing.png", 64, 64), IngestionError);
  EXPECT_THROW(load_image(bogus, 60, 64, 16), DimensionError);
}

TEST(Manifest, RoundTripAndValidation) {
  const auto dir = test::scratch_dir("manifest");
  cv::Mat img(8, 8, CV_8UC3, cv::Scalar(10, 20, 30));
  cv::imwrite((dir / "a.png").string(), img);
  cv::imwrite((dir / "b.png").string(), img);
  LabeledDataset ds;
  ds.items = {{dir / "a.png", 0}, {dir / "b.png", 2}};
  ds.class_count = 3;
  write_manifest(dir / "train.csv", ds);
  const auto back = read_manifest(dir / "train.csv", Split::train);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back.class_count, 3);
  EXPECT_EQ(back.items[1].label, 2);
  EXPECT_EQ(std::filesystem::canonical(back.items[0].path), std::filesystem::canonical(dir / "a.png"));

  std::ofstream(dir / "bad_label.csv") << "path,label\na.png,5\n";
  EXPECT_THROW(read_manifest(dir / "bad_label.csv", Split::train, 3), IngestionError);
  std::ofstream(dir / "bad_header.csv") << "file,class\na.png,0\n";
  EXPECT_THROW(read_manifest(dir / "bad_header.csv", Split::train), IngestionError);

  std::ofstream(dir / "missing.csv") << "path,label\nghost.png,0\n";
  EXPECT_THROW(read_manifest(dir / "missing.csv", Split::train), IngestionError);

  const auto coarse = remap_labels(back, {0, 0, 1});
  EXPECT_EQ(coarse.class_count, 2);
  EXPECT_EQ(coarse.items[1].label, 1);
}
