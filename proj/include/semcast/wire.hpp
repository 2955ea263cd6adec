#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "semcast/errors.hpp"
#include "semcast/image.hpp"
#include "semcast/rate.hpp"

namespace semcast {

/// Big-endian (MSB-first) bit packer.
class BitWriter {
 public:
  void write(std::uint64_t value, int nbits) {
    for (int i = nbits - 1; i >= 0; --i) put_bit(((value >> i) & 1u) != 0);
  }
  void put_bit(bool bit) {
    if (used_ == 0) bytes_.push_back(0);
    if (bit) bytes_.back() |= static_cast<std::uint8_t>(0x80u >> used_);
    used_ = (used_ + 1) % 8;
  }
  /// Zero-pads to the next byte boundary.
  void align() { used_ = 0; }
  void write_u8(std::uint8_t v) {
    align();
    bytes_.push_back(v);
  }
  void write_u16(std::uint16_t v) {
    write_u8(static_cast<std::uint8_t>(v >> 8));
    write_u8(static_cast<std::uint8_t>(v & 0xff));
  }
  std::vector<std::uint8_t> take() {
    align();
    return std::move(bytes_);
  }

 private:
  std::vector<std::uint8_t> bytes_;
  int used_ = 0;  // bits used in the last byte
};

class BitReader {
 public:
  explicit BitReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint64_t read(int nbits) {
    std::uint64_t v = 0;
    for (int i = 0; i < nbits; ++i) v = (v << 1) | (get_bit() ? 1u : 0u);
    return v;
  }
  bool get_bit() {
    if (byte_ >= bytes_.size()) throw FormatError("message truncated");
    const bool bit = (bytes_[byte_] & (0x80u >> bit_)) != 0;
    if (++bit_ == 8) {
      bit_ = 0;
      ++byte_;
    }
    return bit;
  }
  /// Skips to the next byte boundary; padding bits must be zero.
  void align() {
    while (bit_ != 0) {
      if (get_bit()) throw FormatError("non-zero padding bits");
    }
  }
  std::uint8_t read_u8() {
    align();
    if (byte_ >= bytes_.size()) throw FormatError("message truncated");
    return bytes_[byte_++];
  }
  std::uint16_t read_u16() {
    const auto hi = read_u8();
    return static_cast<std::uint16_t>((hi << 8) | read_u8());
  }
  bool at_end() const { return byte_ == bytes_.size() && bit_ == 0; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t byte_ = 0;
  int bit_ = 0;
};

enum class MsgType : std::uint8_t {
  context_only = 0,
  context_plus_task = 1,
  full_latent = 2,
  task_patch = 3,
  more_info_request = 4,
  region_request = 5,
};

inline const char* msg_type_name(MsgType t) {
  switch (t) {
    case MsgType::context_only: return "CONTEXT_ONLY";
    case MsgType::context_plus_task: return "CONTEXT_PLUS_TASK";
    case MsgType::full_latent: return "FULL_LATENT";
    case MsgType::task_patch: return "TASK_PATCH";
    case MsgType::more_info_request: return "MORE_INFO_REQUEST";
    case MsgType::region_request: return "REGION_REQUEST";
  }
  return "?";
}

inline constexpr std::uint8_t kWireVersion = 1;
inline constexpr std::size_t kHeaderBytes = 9;

/// One protocol message.
///
/// Header grid dims are the context grid for CONTEXT_ONLY and the image latent
/// grid for every other type. Patch positions are flat row-major cell indices
/// kept in ascending order, which is the only order a bitmap can express.
struct SemMessage {
  MsgType type = MsgType::context_only;
  int grid_h = 0;
  int grid_w = 0;
  int bits = 1;                        // b = ceil(log2 K)
  int context_h = 0;                   // CONTEXT_PLUS_TASK only
  int context_w = 0;
  std::vector<std::uint32_t> context;  // CONTEXT_ONLY, CONTEXT_PLUS_TASK
  std::vector<std::uint32_t> latent;   // FULL_LATENT
  std::vector<std::uint32_t> positions;  // CONTEXT_PLUS_TASK, TASK_PATCH
  std::vector<std::uint32_t> patch;      // aligned with positions
  PixelBox box;                        // REGION_REQUEST

  long grid_cells() const { return static_cast<long>(grid_h) * grid_w; }

  PositionMode position_mode() const {
    return choose_position_mode(grid_cells(), static_cast<long>(positions.size()));
  }

  /// Payload bits counted by rate accounting (no header, no padding,
  /// no context-dims or position-mode control bytes).
  long payload_bits() const {
    switch (type) {
      case MsgType::context_only: return static_cast<long>(context.size()) * bits;
      case MsgType::full_latent: return static_cast<long>(latent.size()) * bits;
      case MsgType::context_plus_task:
        return static_cast<long>(context.size()) * bits +
               patch_bits(grid_cells(), static_cast<long>(positions.size()), bits);
      case MsgType::task_patch: return patch_bits(grid_cells(), static_cast<long>(positions.size()), bits);
      case MsgType::more_info_request: return 0;
      case MsgType::region_request: return 64;
    }
    return 0;
  }

  friend bool operator==(const SemMessage&, const SemMessage&) = default;
};

namespace detail {

inline void check_u16(long v, const char* what) {
  if (v < 0 || v > 65535) throw FormatError(std::string(what) + " " + std::to_string(v) + " does not fit 16 bits");
}

inline void check_indices(const std::vector<std::uint32_t>& v, int bits, const char* what) {
  const std::uint64_t limit = 1ull << bits;
  for (auto x : v) {
    if (x >= limit) throw FormatError(std::string(what) + " index " + std::to_string(x) + " exceeds " +
                                      std::to_string(bits) + " bits");
  }
}

inline void write_indices(BitWriter& w, const std::vector<std::uint32_t>& v, int bits) {
  for (auto x : v) w.write(x, bits);
  w.align();
}

inline std::vector<std::uint32_t> read_indices(BitReader& r, std::size_t n, int bits) {
  std::vector<std::uint32_t> v(n);
  for (auto& x : v) x = static_cast<std::uint32_t>(r.read(bits));
  r.align();
  return v;
}

inline void write_positions(BitWriter& w, const SemMessage& m) {
  const long cells = m.grid_cells();
  for (std::size_t i = 0; i < m.positions.size(); ++i) {
    if (m.positions[i] >= static_cast<std::uint64_t>(cells)) throw FormatError("patch position outside grid");
    if (i > 0 && m.positions[i] <= m.positions[i - 1]) {
      throw FormatError("patch positions must be strictly ascending");
    }
  }
  const auto mode = m.position_mode();
  w.write_u8(static_cast<std::uint8_t>(mode));
  if (mode == PositionMode::list) {
    w.write_u16(static_cast<std::uint16_t>(m.positions.size()));
    const int pb = position_index_bits(cells);
    for (auto p : m.positions) w.write(p, pb);
  } else {
    std::size_t next = 0;
    for (long i = 0; i < cells; ++i) {
      const bool set = next < m.positions.size() && m.positions[next] == static_cast<std::uint32_t>(i);
      w.put_bit(set);
      if (set) ++next;
    }
  }
  w.align();
}

inline std::vector<std::uint32_t> read_positions(BitReader& r, const SemMessage& m) {
  const long cells = m.grid_cells();
  const auto mode = r.read_u8();
  std::vector<std::uint32_t> pos;
  if (mode == static_cast<std::uint8_t>(PositionMode::list)) {
    const auto n = r.read_u16();
    const int pb = position_index_bits(cells);
    pos.resize(n);
    for (auto& p : pos) p = static_cast<std::uint32_t>(r.read(pb));
    for (std::size_t i = 0; i < pos.size(); ++i) {
      if (pos[i] >= static_cast<std::uint64_t>(cells) || (i > 0 && pos[i] <= pos[i - 1])) {
        throw FormatError("position list is not strictly ascending within the grid");
      }
    }
  } else if (mode == static_cast<std::uint8_t>(PositionMode::bitmap)) {
    for (long i = 0; i < cells; ++i) {
      if (r.get_bit()) pos.push_back(static_cast<std::uint32_t>(i));
    }
  } else {
    throw FormatError("unknown position mode " + std::to_string(mode));
  }
  r.align();
  if (choose_position_mode(cells, static_cast<long>(pos.size())) != static_cast<PositionMode>(mode)) {
    throw FormatError("position payload does not use the cheaper encoding");
  }
  return pos;
}

}  // namespace detail

/// Wire layout: "SC", version, type, grid h (u16), grid w (u16), b (u8),
/// then the type-specific payload with every section zero-padded to a byte.
inline std::vector<std::uint8_t> serialize(const SemMessage& m) {
  detail::check_u16(m.grid_h, "grid height");
  detail::check_u16(m.grid_w, "grid width");
  if (m.bits < 1 || m.bits > 32) throw FormatError("index width must be 1..32 bits");

  BitWriter w;
  w.write_u8('S');
  w.write_u8('C');
  w.write_u8(kWireVersion);
  w.write_u8(static_cast<std::uint8_t>(m.type));
  w.write_u16(static_cast<std::uint16_t>(m.grid_h));
  w.write_u16(static_cast<std::uint16_t>(m.grid_w));
  w.write_u8(static_cast<std::uint8_t>(m.bits));

  switch (m.type) {
    case MsgType::context_only:
      if (static_cast<long>(m.context.size()) != m.grid_cells()) throw FormatError("context size != grid cells");
      detail::check_indices(m.context, m.bits, "context");
      detail::write_indices(w, m.context, m.bits);
      break;
    case MsgType::full_latent:
      if (static_cast<long>(m.latent.size()) != m.grid_cells()) throw FormatError("latent size != grid cells");
      detail::check_indices(m.latent, m.bits, "latent");
      detail::write_indices(w, m.latent, m.bits);
      break;
    case MsgType::context_plus_task:
      detail::check_u16(m.context_h, "context height");
      detail::check_u16(m.context_w, "context width");
      if (static_cast<long>(m.context.size()) != static_cast<long>(m.context_h) * m.context_w) {
        throw FormatError("context size != context grid cells");
      }
      detail::check_indices(m.context, m.bits, "context");
      w.write_u16(static_cast<std::uint16_t>(m.context_h));
      w.write_u16(static_cast<std::uint16_t>(m.context_w));
      detail::write_indices(w, m.context, m.bits);
      [[fallthrough]];
    case MsgType::task_patch:
      if (m.positions.size() != m.patch.size()) throw FormatError("positions and patch indices differ in count");
      detail::check_indices(m.patch, m.bits, "patch");
      detail::write_positions(w, m);
      detail::write_indices(w, m.patch, m.bits);
      break;
    case MsgType::more_info_request: break;
    case MsgType::region_request:
      detail::check_u16(m.box.top, "box top");
      detail::check_u16(m.box.left, "box left");
      detail::check_u16(m.box.bottom, "box bottom");
      detail::check_u16(m.box.right, "box right");
      w.write_u16(static_cast<std::uint16_t>(m.box.top));
      w.write_u16(static_cast<std::uint16_t>(m.box.left));
      w.write_u16(static_cast<std::uint16_t>(m.box.bottom));
      w.write_u16(static_cast<std::uint16_t>(m.box.right));
      break;
    default: throw FormatError("unknown message type");
  }
  return w.take();
}

inline SemMessage deserialize(std::span<const std::uint8_t> bytes) {
  BitReader r(bytes);
  if (bytes.size() < kHeaderBytes || r.read_u8() != 'S' || r.read_u8() != 'C') {
    throw FormatError("missing 'SC' magic");
  }
  if (const auto v = r.read_u8(); v != kWireVersion) throw FormatError("unsupported wire version " + std::to_string(v));
  SemMessage m;
  const auto type = r.read_u8();
  if (type > static_cast<std::uint8_t>(MsgType::region_request)) {
    throw FormatError("unknown message type " + std::to_string(type));
  }
  m.type = static_cast<MsgType>(type);
  m.grid_h = r.read_u16();
  m.grid_w = r.read_u16();
  m.bits = r.read_u8();
  if (m.bits < 1 || m.bits > 32) throw FormatError("index width must be 1..32 bits");

  switch (m.type) {
    case MsgType::context_only:
      m.context = detail::read_indices(r, static_cast<std::size_t>(m.grid_cells()), m.bits);
      break;
    case MsgType::full_latent:
      m.latent = detail::read_indices(r, static_cast<std::size_t>(m.grid_cells()), m.bits);
      break;
    case MsgType::context_plus_task:
      m.context_h = r.read_u16();
      m.context_w = r.read_u16();
      m.context = detail::read_indices(r, static_cast<std::size_t>(m.context_h) * m.context_w, m.bits);
      [[fallthrough]];
    case MsgType::task_patch:
      m.positions = detail::read_positions(r, m);
      m.patch = detail::read_indices(r, m.positions.size(), m.bits);
      break;
    case MsgType::more_info_request: break;
    case MsgType::region_request:
      m.box.top = r.read_u16();
      m.box.left = r.read_u16();
      m.box.bottom = r.read_u16();
      m.box.right = r.read_u16();
      break;
  }
  if (!r.at_end()) throw FormatError("trailing bytes after message payload");
  return m;
}

}  // namespace semcast
