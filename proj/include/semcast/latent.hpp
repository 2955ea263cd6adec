#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "semcast/errors.hpp"

namespace semcast {

/// Fixed-width index size: ceil(log2 K).
inline int bits_per_index(long codebook_size) {
  if (codebook_size < 2) throw ArgumentError("codebook size must be >= 2");
  int b = 0;
  while ((1L << b) < codebook_size) ++b;
  return b;
}

/// A latent cell coordinate (row a, column b).
struct Cell {
  int row = 0;
  int col = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
  friend auto operator<=>(const Cell&, const Cell&) = default;
};

/// h×w grid of codebook indices, row-major.
struct LatentGrid {
  int h = 0;
  int w = 0;
  std::vector<std::uint32_t> indices;
  int source_h = 0;  // height of the image this grid encodes
  int source_w = 0;

  LatentGrid() = default;
  LatentGrid(int h_, int w_, int src_h, int src_w)
      : h(h_), w(w_), indices(static_cast<std::size_t>(h_) * w_, 0), source_h(src_h), source_w(src_w) {}

  std::size_t cells() const { return indices.size(); }
  std::uint32_t& at(int a, int b) { return indices[static_cast<std::size_t>(a) * w + b]; }
  std::uint32_t at(int a, int b) const { return indices[static_cast<std::size_t>(a) * w + b]; }
  std::uint32_t& at(Cell c) { return at(c.row, c.col); }
  std::uint32_t at(Cell c) const { return at(c.row, c.col); }
  std::size_t flat(Cell c) const { return static_cast<std::size_t>(c.row) * w + c.col; }
  Cell cell(std::size_t flat_index) const {
    return {static_cast<int>(flat_index / w), static_cast<int>(flat_index % w)};
  }
  bool contains(Cell c) const { return c.row >= 0 && c.row < h && c.col >= 0 && c.col < w; }

  friend bool operator==(const LatentGrid&, const LatentGrid&) = default;
};

}  // namespace semcast
