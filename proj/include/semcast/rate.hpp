#pragma once

#include <algorithm>
#include <cstddef>
#include <string>

#include "semcast/errors.hpp"
#include "semcast/latent.hpp"

namespace semcast {

/// Bits per KB (1 KB = 1024 bytes).
inline constexpr double kBitsPerKB = 8192.0;

inline double bits_to_kb(long bits) { return static_cast<double>(bits) / kBitsPerKB; }

/// Static geometry of one transmission: image size, strides, codebook size.
struct Geometry {
  int height = 64;
  int width = 64;
  int f_model = 4;
  int f_ctx = 4;
  int K = 512;

  void validate() const {
    const int m = f_model * f_ctx;
    if (f_model < 1 || f_ctx < 1) throw ArgumentError("factors must be >= 1");
    if (height <= 0 || width <= 0 || height % m != 0 || width % m != 0) {
      throw DimensionError("image " + std::to_string(height) + "x" + std::to_string(width) +
                           " is not divisible by f_model*f_ctx=" + std::to_string(m));
    }
    bits_per_index(K);
  }

  int latent_h() const { return height / f_model; }
  int latent_w() const { return width / f_model; }
  int context_h() const { return height / (f_model * f_ctx); }
  int context_w() const { return width / (f_model * f_ctx); }
  long image_cells() const { return static_cast<long>(latent_h()) * latent_w(); }
  long context_cells() const { return static_cast<long>(context_h()) * context_w(); }
  int bits() const { return bits_per_index(K); }

  /// R_c
  long context_bits() const { return context_cells() * bits(); }
  /// R_i
  long image_bits() const { return image_cells() * bits(); }
  /// Raw 8-bit RGB size, C·H·W·8.
  long raw_bits(int channels = 3) const { return static_cast<long>(channels) * height * width * 8; }
};

/// Bits needed to address one of `cells` positions: ceil(log2(cells)).
inline int position_index_bits(long cells) {
  int b = 0;
  while ((1L << b) < cells) ++b;
  return b;
}

/// List encoding: 16-bit count plus one fixed-width cell index per entry.
inline long position_list_bits(long grid_cells, long selected) {
  return 16 + selected * position_index_bits(grid_cells);
}

/// Bitmap encoding: one bit per grid cell.
inline long position_bitmap_bits(long grid_cells) { return grid_cells; }

enum class PositionMode : unsigned char { list = 0, bitmap = 1 };

/// Largest cell count the 16-bit list header can carry.
inline constexpr long kMaxListEntries = 65535;

/// The cheaper encoding; the list wins ties and is unavailable past 65535 entries.
inline PositionMode choose_position_mode(long grid_cells, long selected) {
  if (selected > kMaxListEntries) return PositionMode::bitmap;
  return position_list_bits(grid_cells, selected) <= position_bitmap_bits(grid_cells) ? PositionMode::list
                                                                                      : PositionMode::bitmap;
}

inline long position_bits(long grid_cells, long selected) {
  return choose_position_mode(grid_cells, selected) == PositionMode::list
             ? position_list_bits(grid_cells, selected)
             : position_bitmap_bits(grid_cells);
}

/// Payload of a patch of `selected` cells: positions + packed indices.
inline long patch_bits(long grid_cells, long selected, int bits) {
  return position_bits(grid_cells, selected) + selected * bits;
}

}  // namespace semcast
