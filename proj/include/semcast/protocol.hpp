#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "semcast/classifier.hpp"
#include "semcast/codec.hpp"
#include "semcast/errors.hpp"
#include "semcast/semcom.hpp"
#include "semcast/wire.hpp"

namespace semcast {

enum class Direction : std::uint8_t { downlink = 0, uplink = 1 };  // tx→rx, rx→tx

struct TranscriptEntry {
  Direction direction = Direction::downlink;
  std::vector<std::uint8_t> bytes;
  friend bool operator==(const TranscriptEntry&, const TranscriptEntry&) = default;
};

/// In-order, lossless, bit-transparent two-way message queue with per-direction
/// counters. Payload bits follow the rate accounting; wire bytes include headers.
class Channel {
 public:
  struct Counters {
    long sent_payload_bits = 0;
    long delivered_payload_bits = 0;
    long sent_bytes = 0;
    long delivered_bytes = 0;
    long sent_messages = 0;
    long delivered_messages = 0;
  };

  explicit Channel(bool keep_transcript = false) : keep_transcript_(keep_transcript) {}

  void send(Direction d, const SemMessage& m) {
    auto bytes = serialize(m);
    auto& c = counters_[index(d)];
    c.sent_payload_bits += m.payload_bits();
    c.sent_bytes += static_cast<long>(bytes.size());
    ++c.sent_messages;
    if (keep_transcript_) transcript_.push_back({d, bytes});
    queues_[index(d)].push_back(std::move(bytes));
  }

  SemMessage receive(Direction d) {
    auto& q = queues_[index(d)];
    if (q.empty()) throw ProtocolError("receive on an empty channel");
    const auto bytes = std::move(q.front());
    q.pop_front();
    SemMessage m = deserialize(bytes);
    auto& c = counters_[index(d)];
    c.delivered_payload_bits += m.payload_bits();
    c.delivered_bytes += static_cast<long>(bytes.size());
    ++c.delivered_messages;
    return m;
  }

  bool pending(Direction d) const { return !queues_[index(d)].empty(); }
  const Counters& counters(Direction d) const { return counters_[index(d)]; }
  const std::vector<TranscriptEntry>& transcript() const { return transcript_; }

 private:
  static std::size_t index(Direction d) { return static_cast<std::size_t>(d); }

  bool keep_transcript_;
  std::array<std::deque<std::vector<std::uint8_t>>, 2> queues_;
  std::array<Counters, 2> counters_{};
  std::vector<TranscriptEntry> transcript_;
};

/// Transcript file: "SCTR", version byte, then records of
/// (direction u8, length u32 big-endian, serialized message).
inline void write_transcript(const std::filesystem::path& path, const std::vector<TranscriptEntry>& entries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write transcript " + path.string());
  out.write("SCTR", 4);
  out.put(static_cast<char>(1));
  for (const auto& e : entries) {
    out.put(static_cast<char>(e.direction));
    const auto n = static_cast<std::uint32_t>(e.bytes.size());
    const char len[4] = {static_cast<char>(n >> 24), static_cast<char>(n >> 16), static_cast<char>(n >> 8),
                         static_cast<char>(n)};
    out.write(len, 4);
    out.write(reinterpret_cast<const char*>(e.bytes.data()), static_cast<std::streamsize>(n));
  }
  if (!out) throw IoError("short write on transcript " + path.string());
}

inline std::vector<TranscriptEntry> read_transcript(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open transcript " + path.string());
  char magic[5] = {};
  in.read(magic, 5);
  if (!in || std::string(magic, 4) != "SCTR" || magic[4] != 1) throw FormatError(path.string() + " is not a transcript");
  std::vector<TranscriptEntry> out;
  int dir = 0;
  while ((dir = in.get()) != EOF) {
    if (dir > 1) throw FormatError("bad transcript direction");
    unsigned char len[4];
    in.read(reinterpret_cast<char*>(len), 4);
    const std::uint32_t n = (std::uint32_t{len[0]} << 24) | (std::uint32_t{len[1]} << 16) |
                            (std::uint32_t{len[2]} << 8) | len[3];
    TranscriptEntry e;
    e.direction = static_cast<Direction>(dir);
    e.bytes.resize(n);
    in.read(reinterpret_cast<char*>(e.bytes.data()), static_cast<std::streamsize>(n));
    if (!in) throw FormatError("truncated transcript " + path.string());
    out.push_back(std::move(e));
  }
  return out;
}

struct SessionOptions {
  int f_ctx = 4;
  LsfOptions lsf;
  double theta = 0.8;  // receiver confidence threshold
};

/// Maps a pixel box to the latent cells it touches: floor for the minimum
/// corner, ceiling for the maximum corner.
inline std::vector<Cell> box_to_cells(const PixelBox& box, int f_model, int grid_h, int grid_w) {
  std::vector<Cell> cells;
  const int r0 = std::clamp(box.top / f_model, 0, grid_h);
  const int c0 = std::clamp(box.left / f_model, 0, grid_w);
  const int r1 = std::clamp((box.bottom + f_model - 1) / f_model, 0, grid_h);
  const int c1 = std::clamp((box.right + f_model - 1) / f_model, 0, grid_w);
  for (int r = r0; r < r1; ++r) {
    for (int c = c0; c < c1; ++c) cells.push_back({r, c});
  }
  return cells;
}

/// Transmitter half of a session.
template <class T>
class BasicTransmitter {
 public:
  BasicTransmitter(const BasicCodec<T>& codec, const BasicTaskModel<T>& task, SessionOptions opt)
      : codec_(&codec), task_(&task), opt_(std::move(opt)) {}

  void load(const Image& x) { load(analyze(*codec_, *task_, x, opt_.f_ctx)); }

  void load(TransmitterAnalysis analysis) {
    a_ = std::move(analysis);
    sent_.assign(a_.z.cells(), 0);
    full_sent_ = false;
    percent_ = 0;
    round_ = 0;
    sent_bits_ = 0;
  }

  const TransmitterAnalysis& analysis() const { return a_; }
  LsfDecision decide() const { return lsf_select(*codec_, *task_, a_, opt_.lsf); }
  int round() const { return round_; }
  long sent_payload_bits() const { return sent_bits_; }

  void transmit_round(const LsfDecision& d, Channel& ch) {
    SemMessage m;
    m.bits = codec_->bits();
    switch (d.mode) {
      case LsfMode::context_only:
        m.type = MsgType::context_only;
        m.grid_h = a_.context.z_c.h;
        m.grid_w = a_.context.z_c.w;
        m.context = a_.context.z_c.indices;
        break;
      case LsfMode::full_latent:
        m.type = MsgType::full_latent;
        m.grid_h = a_.z.h;
        m.grid_w = a_.z.w;
        m.latent = a_.z.indices;
        full_sent_ = true;
        break;
      case LsfMode::context_plus_task:
        m.type = MsgType::context_plus_task;
        m.grid_h = a_.z.h;
        m.grid_w = a_.z.w;
        m.context_h = a_.context.z_c.h;
        m.context_w = a_.context.z_c.w;
        m.context = a_.context.z_c.indices;
        fill_patch(m, d.selected);
        break;
    }
    percent_ = d.percent;
    send(m, ch);
  }

  /// Answers a receiver request already taken off the uplink.
  void respond(const SemMessage& request, Channel& ch) {
    switch (request.type) {
      case MsgType::more_info_request: respond_more_info(ch); break;
      case MsgType::region_request: respond_region(request.box, ch); break;
      default: throw ProtocolError(std::string("transmitter cannot handle ") + msg_type_name(request.type));
    }
  }

 private:
  void send(const SemMessage& m, Channel& ch) {
    sent_bits_ += m.payload_bits();
    ++round_;
    ch.send(Direction::downlink, m);
  }

  void fill_patch(SemMessage& m, std::vector<Cell> cells) {
    std::sort(cells.begin(), cells.end());
    m.positions.clear();
    m.patch.clear();
    for (const Cell& c : cells) {
      const auto flat = a_.z.flat(c);
      m.positions.push_back(static_cast<std::uint32_t>(flat));
      m.patch.push_back(a_.z.indices[flat]);
      sent_[flat] = 1;
    }
  }

  SemMessage full_message() {
    SemMessage m;
    m.type = MsgType::full_latent;
    m.bits = codec_->bits();
    m.grid_h = a_.z.h;
    m.grid_w = a_.z.w;
    m.latent = a_.z.indices;
    full_sent_ = true;
    std::fill(sent_.begin(), sent_.end(), 1);
    return m;
  }

  SemMessage patch_message() const {
    SemMessage m;
    m.type = MsgType::task_patch;
    m.bits = codec_->bits();
    m.grid_h = a_.z.h;
    m.grid_w = a_.z.w;
    return m;
  }

  // Escalates to the next percentage in the search set, sending only cells
  // the receiver does not hold yet; reaching 100 sends the full latent.
  void respond_more_info(Channel& ch) {
    if (full_sent_) throw ProtocolError("more information requested after the full latent was sent");
    auto set = opt_.lsf.search_set;
    std::sort(set.begin(), set.end());
    const auto next = std::upper_bound(set.begin(), set.end(), percent_);
    if (next == set.end() || *next >= 100) {
      percent_ = 100;
      send(full_message(), ch);
      return;
    }
    percent_ = *next;
    const auto n = selection_count(percent_, a_.z.cells());
    std::vector<Cell> delta;
    for (std::size_t i = 0; i < n; ++i) {
      if (!sent_[a_.z.flat(a_.ranking[i])]) delta.push_back(a_.ranking[i]);
    }
    SemMessage m = patch_message();
    fill_patch(m, delta);
    send(m, ch);
  }

  // Sends the box's cells not yet delivered, or the full latent when that
  // is no more expensive than the patch.
  void respond_region(const PixelBox& box, Channel& ch) {
    if (box.empty()) throw ProtocolError("empty region request");
    const auto cells = box_to_cells(box, codec_->config().f_model, a_.z.h, a_.z.w);
    std::vector<Cell> fresh;
    for (const Cell& c : cells) {
      if (!sent_[a_.z.flat(c)]) fresh.push_back(c);
    }
    const long grid = static_cast<long>(a_.z.cells());
    if (!fresh.empty() && patch_bits(grid, static_cast<long>(fresh.size()), codec_->bits()) >= a_.geometry.image_bits()) {
      send(full_message(), ch);
      return;
    }
    SemMessage m = patch_message();
    fill_patch(m, fresh);
    send(m, ch);
  }

  const BasicCodec<T>* codec_;
  const BasicTaskModel<T>* task_;
  SessionOptions opt_;
  TransmitterAnalysis a_;
  std::vector<std::uint8_t> sent_;
  bool full_sent_ = false;
  int percent_ = 0;
  int round_ = 0;
  long sent_bits_ = 0;
};

/// Receiver half of a session: holds the context latent and the union of all
/// patch cells received so far.
template <class T>
class BasicReceiver {
 public:
  BasicReceiver(const BasicCodec<T>& codec, SessionOptions opt) : codec_(&codec), opt_(std::move(opt)) {}

  Image receive_and_reconstruct(const SemMessage& m) {
    if (m.bits != codec_->bits()) {
      throw ProtocolError("message uses " + std::to_string(m.bits) + "-bit indices, codec needs " +
                          std::to_string(codec_->bits()));
    }
    const int f = codec_->config().f_model;
    switch (m.type) {
      case MsgType::context_only:
        set_context(m.grid_h, m.grid_w, m.context);
        break;
      case MsgType::context_plus_task:
        set_context(m.context_h, m.context_w, m.context);
        add_patch(m);
        break;
      case MsgType::task_patch:
        if (!z_u_ && !full_) throw ProtocolError("task patch received before any context");
        add_patch(m);
        break;
      case MsgType::full_latent: {
        LatentGrid z(m.grid_h, m.grid_w, m.grid_h * f, m.grid_w * f);
        if (m.latent.size() != z.cells()) throw ProtocolError("latent payload does not match its grid");
        z.indices = m.latent;
        full_ = true;
        z_r_ = std::move(z);
        ++round_;
        return codec_->decode(*z_r_);
      }
      default: throw ProtocolError(std::string("receiver cannot handle ") + msg_type_name(m.type));
    }
    ++round_;
    if (!full_) rebuild_fused();
    return codec_->decode(*z_r_);
  }

  /// MORE_INFO_REQUEST when the task's top softmax probability is below θ;
  /// nullopt once satisfied or once the full latent is held.
  std::optional<SemMessage> confidence_gate(const BasicTaskModel<T>& task, const Image& x_hat) const {
    if (full_) return std::nullopt;
    const auto p = task.probabilities(x_hat);
    if (*std::max_element(p.begin(), p.end()) >= opt_.theta) return std::nullopt;
    SemMessage m;
    m.type = MsgType::more_info_request;
    m.bits = codec_->bits();
    if (z_r_) {
      m.grid_h = z_r_->h;
      m.grid_w = z_r_->w;
    }
    return m;
  }

  SemMessage region_request(const PixelBox& box) const {
    if (box.empty()) throw ArgumentError("region request box is empty");
    if (!z_r_) throw ProtocolError("region request before any reconstruction");
    const int f = codec_->config().f_model;
    if (box.top < 0 || box.left < 0 || box.bottom > z_r_->h * f || box.right > z_r_->w * f) {
      throw ArgumentError("region request box lies outside the image");
    }
    SemMessage m;
    m.type = MsgType::region_request;
    m.bits = codec_->bits();
    m.grid_h = z_r_->h;
    m.grid_w = z_r_->w;
    m.box = box;
    return m;
  }

  bool complete() const { return full_; }
  int round() const { return round_; }
  bool has_reconstruction() const { return z_r_.has_value(); }
  const LatentGrid& fused() const {
    if (!z_r_) throw ProtocolError("no latent received yet");
    return *z_r_;
  }
  std::size_t patch_cells() const { return static_cast<std::size_t>(std::count(have_.begin(), have_.end(), 1)); }

 private:
  void set_context(int h, int w, const std::vector<std::uint32_t>& indices) {
    const int f = codec_->config().f_model;
    LatentGrid z_c(h, w, h * f, w * f);
    if (indices.size() != z_c.cells()) throw ProtocolError("context payload does not match its grid");
    z_c.indices = indices;
    z_u_ = reproject_context(*codec_, z_c, opt_.f_ctx);
    if (have_.size() != z_u_->cells()) {
      have_.assign(z_u_->cells(), 0);
      values_.assign(z_u_->cells(), 0);
    }
  }

  void add_patch(const SemMessage& m) {
    if (full_) return;
    if (!z_u_ || m.grid_h != z_u_->h || m.grid_w != z_u_->w) {
      throw ProtocolError("patch grid " + std::to_string(m.grid_h) + "x" + std::to_string(m.grid_w) +
                          " does not match the session geometry");
    }
    for (std::size_t i = 0; i < m.positions.size(); ++i) {
      have_[m.positions[i]] = 1;
      values_[m.positions[i]] = m.patch[i];
    }
  }

  void rebuild_fused() {
    LatentPatch patch;
    std::vector<Cell> cells;
    for (std::size_t i = 0; i < have_.size(); ++i) {
      if (!have_[i]) continue;
      const Cell c = z_u_->cell(i);
      cells.push_back(c);
      patch.cells.push_back(c);
      patch.indices.push_back(values_[i]);
    }
    z_r_ = fuse(*z_u_, patch, build_mask(cells, z_u_->h, z_u_->w));
  }

  const BasicCodec<T>* codec_;
  SessionOptions opt_;
  std::optional<LatentGrid> z_u_;
  std::optional<LatentGrid> z_r_;
  std::vector<std::uint8_t> have_;
  std::vector<std::uint32_t> values_;
  bool full_ = false;
  int round_ = 0;
};

using Transmitter = BasicTransmitter<float>;
using Receiver = BasicReceiver<float>;

/// One new-task feedback round: the receiver asks for a pixel box, the
/// transmitter answers with the corresponding latent cells, the receiver
/// fuses and re-decodes.
template <class T>
Image region_request_round(BasicReceiver<T>& rx, BasicTransmitter<T>& tx, const PixelBox& box, Channel& ch) {
  ch.send(Direction::uplink, rx.region_request(box));
  tx.respond(ch.receive(Direction::uplink), ch);
  return rx.receive_and_reconstruct(ch.receive(Direction::downlink));
}

struct SessionResult {
  Image x_hat;
  int rounds = 0;
  bool complete = false;
};

/// Runs a confidence-gated session: the initial decision is sent, then the
/// receiver keeps asking for more until its task is confident or it holds
/// the full latent.
template <class T>
SessionResult run_session(BasicTransmitter<T>& tx, BasicReceiver<T>& rx, const BasicTaskModel<T>& receiver_task,
                          const LsfDecision& initial, Channel& ch) {
  SessionResult r;
  tx.transmit_round(initial, ch);
  r.x_hat = rx.receive_and_reconstruct(ch.receive(Direction::downlink));
  r.rounds = 1;
  while (auto request = rx.confidence_gate(receiver_task, r.x_hat)) {
    ch.send(Direction::uplink, *request);
    tx.respond(ch.receive(Direction::uplink), ch);
    r.x_hat = rx.receive_and_reconstruct(ch.receive(Direction::downlink));
    ++r.rounds;
  }
  r.complete = rx.complete();
  return r;
}

}  // namespace semcast
