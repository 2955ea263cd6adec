#pragma once

#include <filesystem>
#include <string>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "semcast/errors.hpp"
#include "semcast/image.hpp"

namespace semcast {

/// Decodes a PNG/JPEG file into an RGB image at target_h×target_w.
/// The source is center-cropped to the target aspect ratio, then bicubic
/// resized. `multiple` is the spatial divisor the target must honour
/// (f_model·f_ctx for pipeline inputs).
inline Image load_image(const std::filesystem::path& path, int target_h, int target_w,
                        int multiple = 1) {
  if (multiple < 1) multiple = 1;
  if (target_h <= 0 || target_w <= 0 || target_h % multiple != 0 || target_w % multiple != 0) {
    throw DimensionError("target " + std::to_string(target_h) + "x" + std::to_string(target_w) +
                         " is not a positive multiple of " + std::to_string(multiple) +
                         " (loading " + path.string() + ")");
  }
  cv::Mat bgr;
  try {
    bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  } catch (const cv::Exception&) {
    bgr.release();
  }
  if (bgr.empty()) throw IngestionError("cannot decode image " + path.string());

  // center crop to the target aspect ratio
  int crop_w = bgr.cols;
  int crop_h = bgr.rows;
  if (static_cast<long>(bgr.cols) * target_h > static_cast<long>(bgr.rows) * target_w) {
    crop_w = static_cast<int>(static_cast<long>(bgr.rows) * target_w / target_h);
  } else {
    crop_h = static_cast<int>(static_cast<long>(bgr.cols) * target_h / target_w);
  }
  const int x0 = (bgr.cols - crop_w) / 2;
  const int y0 = (bgr.rows - crop_h) / 2;

  Image src(3, crop_h, crop_w);
  for (int y = 0; y < crop_h; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y0 + y);
    for (int x = 0; x < crop_w; ++x) {
      const cv::Vec3b px = row[x0 + x];
      src.at(0, y, x) = normalize_u8(px[2]);
      src.at(1, y, x) = normalize_u8(px[1]);
      src.at(2, y, x) = normalize_u8(px[0]);
    }
  }
  Image out = resize_bicubic(src, target_h, target_w);
  if (out.height != target_h || out.width != target_w) {
    throw DimensionError("resize of " + path.string() + " produced non-conforming dimensions");
  }
  return out;
}

inline cv::Mat to_bgr8(const Image& img) {
  if (img.channels != 3 && img.channels != 1) throw DimensionError("only 1 or 3 channel images convert");
  cv::Mat m(img.height, img.width, CV_8UC3);
  for (int y = 0; y < img.height; ++y) {
    auto* row = m.ptr<cv::Vec3b>(y);
    for (int x = 0; x < img.width; ++x) {
      if (img.channels == 3) {
        row[x] = cv::Vec3b(denormalize_u8(img.at(2, y, x)), denormalize_u8(img.at(1, y, x)),
                           denormalize_u8(img.at(0, y, x)));
      } else {
        const auto v = denormalize_u8(img.at(0, y, x));
        row[x] = cv::Vec3b(v, v, v);
      }
    }
  }
  return m;
}

inline void save_image(const std::filesystem::path& path, const Image& img) {
  if (!cv::imwrite(path.string(), to_bgr8(img))) throw IoError("cannot write image " + path.string());
}

}  // namespace semcast
