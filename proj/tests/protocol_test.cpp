#include <algorithm>
#include <random>

#include <gtest/gtest.h>

#include "support.hpp"
#include "semcast/protocol.hpp"

using namespace semcast;

namespace {

struct Session : ::testing::Test {
  Codec codec{test::tiny_codec_config(16), 21};
  TaskModel task{test::tiny_task_config(32, 3), 22};
  SessionOptions opt;
  std::mt19937_64 rng{99};

  Image image() { return test::smooth_image(rng, 3, 32, 32); }
};

SemMessage control(MsgType t) {
  SemMessage m;
  m.type = t;
  m.bits = 4;
  return m;
}

}  // namespace

TEST(Channel, FifoAndConservation) {
  Channel ch(true);
  for (int i = 0; i < 3; ++i) {
    SemMessage m = control(MsgType::region_request);
    m.box = {i, i, i + 1, i + 1};
    ch.send(Direction::uplink, m);
  }
  ch.send(Direction::downlink, control(MsgType::more_info_request));
  EXPECT_EQ(ch.counters(Direction::uplink).sent_payload_bits, 3 * 64);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(ch.receive(Direction::uplink).box.top, i);
  EXPECT_FALSE(ch.pending(Direction::uplink));
  EXPECT_TRUE(ch.pending(Direction::downlink));
  EXPECT_THROW(ch.receive(Direction::uplink), ProtocolError);
  const auto& up = ch.counters(Direction::uplink);
  EXPECT_EQ(up.delivered_payload_bits, up.sent_payload_bits);
  EXPECT_EQ(up.delivered_bytes, up.sent_bytes);
  EXPECT_EQ(up.delivered_messages, 3);
  EXPECT_EQ(up.sent_bytes, 3 * static_cast<long>(kHeaderBytes + 8));
  EXPECT_EQ(ch.transcript().size(), 4u);
}

TEST(Channel, TranscriptFileRoundTrip) {
  const auto dir = test::scratch_dir("tr");
  Channel ch(true);
  ch.send(Direction::downlink, control(MsgType::more_info_request));
  SemMessage r = control(MsgType::region_request);
  r.box = {1, 2, 3, 4};
  ch.send(Direction::uplink, r);
  write_transcript(dir / "t.bin", ch.transcript());
  const auto back = read_transcript(dir / "t.bin");
  EXPECT_EQ(back, ch.transcript());
  EXPECT_EQ(deserialize(back[1].bytes), r);
  std::ofstream(dir / "bad.bin") << "nope";
  EXPECT_THROW(read_transcript(dir / "bad.bin"), FormatError);
}

TEST(BoxToCells, FloorAndCeiling) {
  EXPECT_EQ(box_to_cells({0, 0, 4, 4}, 4, 16, 16), (std::vector<Cell>{{0, 0}}));
  EXPECT_EQ(box_to_cells({1, 1, 5, 5}, 4, 16, 16), (std::vector<Cell>{{0, 0}, {0, 1}, {1, 0}, {1, 1}}));
  EXPECT_EQ(box_to_cells({60, 60, 64, 64}, 4, 16, 16), (std::vector<Cell>{{15, 15}}));
  EXPECT_EQ(box_to_cells({0, 0, 64, 64}, 4, 16, 16).size(), 256u);
}

TEST_F(Session, TransmitRoundMessageTypesAndCounters) {
  Transmitter tx(codec, task, opt);
  tx.load(image());
  const auto& a = tx.analysis();
  Channel ch;
  tx.transmit_round(fixed_decision(a, 0), ch);
  EXPECT_EQ(ch.receive(Direction::downlink).type, MsgType::context_only);
  EXPECT_EQ(ch.counters(Direction::downlink).sent_payload_bits, a.geometry.context_bits());
  tx.transmit_round(full_latent_decision(a), ch);
  const auto full = ch.receive(Direction::downlink);
  EXPECT_EQ(full.type, MsgType::full_latent);
  EXPECT_EQ(full.payload_bits(), 8L * 8 * 4);
  EXPECT_EQ(ch.counters(Direction::downlink).sent_payload_bits, a.geometry.context_bits() + 8 * 8 * 4);
  EXPECT_EQ(tx.sent_payload_bits(), ch.counters(Direction::downlink).delivered_payload_bits);
  EXPECT_EQ(tx.round(), 2);
}

TEST_F(Session, ReceiverMatchesTransmitterSideFusion) {
  for (int i = 0; i < 4; ++i) {
    Transmitter tx(codec, task, opt);
    tx.load(image());
    const auto& a = tx.analysis();
    for (int p : {0, 10, 30, 70, 100}) {
      Receiver rx(codec, opt);
      Channel ch;
      const auto d = p == 0 ? fixed_decision(a, 0) : (p == 100 ? full_latent_decision(a) : fixed_decision(a, p));
      tx.transmit_round(d, ch);
      const Image x_hat = rx.receive_and_reconstruct(ch.receive(Direction::downlink));
      EXPECT_EQ(rx.fused(), d.fused) << "p=" << p;
      EXPECT_EQ(x_hat, codec.decode(d.fused));
    }
  }
}

TEST_F(Session, AllCellsPatchEqualsFullLatent) {
  Transmitter tx(codec, task, opt);
  const Image x = image();
  tx.load(x);
  Channel ch;
  Receiver rx(codec, opt);
  tx.transmit_round(fixed_decision(tx.analysis(), 100), ch);
  const Image fused = rx.receive_and_reconstruct(ch.receive(Direction::downlink));
  EXPECT_EQ(fused, codec.decode(codec.encode(x)));
  EXPECT_EQ(rx.patch_cells(), 64u);
}

TEST_F(Session, DeltaRoundsEqualSingleTransmission) {
  opt.lsf.search_set = {10, 20, 100};
  Transmitter tx(codec, task, opt);
  tx.load(image());
  Receiver rx(codec, opt);
  Channel ch;
  tx.transmit_round(fixed_decision(tx.analysis(), 10), ch);
  rx.receive_and_reconstruct(ch.receive(Direction::downlink));
  ch.send(Direction::uplink, control(MsgType::more_info_request));
  tx.respond(ch.receive(Direction::uplink), ch);
  const auto delta = ch.receive(Direction::downlink);
  EXPECT_EQ(delta.type, MsgType::task_patch);
  EXPECT_EQ(delta.positions.size(), selection_count(20, 64) - selection_count(10, 64));
  const Image two_rounds = rx.receive_and_reconstruct(delta);
  EXPECT_EQ(rx.fused(), fixed_decision(tx.analysis(), 20).fused);
  EXPECT_EQ(two_rounds, codec.decode(fixed_decision(tx.analysis(), 20).fused));
  EXPECT_EQ(rx.round(), 2);
}

// Random cell sets split into random rounds and delivered in random order
// always fuse to the same grid as one message carrying the union.
TEST_F(Session, UnionOfRoundsDeterminesReconstruction) {
  Transmitter tx(codec, task, opt);
  tx.load(image());
  const auto& a = tx.analysis();
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 25; ++trial) {
    std::vector<std::uint32_t> cells;
    for (std::uint32_t c = 0; c < 64; ++c) {
      if (u(rng) < 0.3) cells.push_back(c);
    }
    const int rounds = 1 + static_cast<int>(u(rng) * 4);
    std::vector<std::vector<std::uint32_t>> parts(rounds);
    for (auto c : cells) parts[static_cast<std::size_t>(u(rng) * rounds)].push_back(c);
    std::shuffle(parts.begin(), parts.end(), rng);

    auto patch_msg = [&](const std::vector<std::uint32_t>& pos) {
      SemMessage m;
      m.type = MsgType::task_patch;
      m.bits = codec.bits();
      m.grid_h = a.z.h;
      m.grid_w = a.z.w;
      m.positions = pos;
      for (auto p : pos) m.patch.push_back(a.z.indices[p]);
      return m;
    };
    SemMessage ctx;
    ctx.type = MsgType::context_only;
    ctx.bits = codec.bits();
    ctx.grid_h = a.context.z_c.h;
    ctx.grid_w = a.context.z_c.w;
    ctx.context = a.context.z_c.indices;

    Receiver split(codec, opt), single(codec, opt);
    split.receive_and_reconstruct(ctx);
    single.receive_and_reconstruct(ctx);
    Image last;
    for (const auto& part : parts) last = split.receive_and_reconstruct(patch_msg(part));
    const Image once = single.receive_and_reconstruct(patch_msg(cells));
    EXPECT_EQ(split.fused(), single.fused());
    EXPECT_EQ(last, once);
    EXPECT_EQ(split.patch_cells(), cells.size());
    EXPECT_EQ(split.round(), rounds + 1);
  }
}

TEST_F(Session, ConfidenceGateExtremes) {
  const Image x = image();
  {
    opt.theta = 0.0;
    Transmitter tx(codec, task, opt);
    tx.load(x);
    Receiver rx(codec, opt);
    Channel ch;
    const auto r = run_session(tx, rx, task, fixed_decision(tx.analysis(), 0), ch);
    EXPECT_EQ(r.rounds, 1);
    EXPECT_FALSE(r.complete);
  }
  {
    opt.theta = 1.0;
    Transmitter tx(codec, task, opt);
    tx.load(x);
    Receiver rx(codec, opt);
    Channel ch;
    const auto r = run_session(tx, rx, task, fixed_decision(tx.analysis(), 0), ch);
    EXPECT_TRUE(r.complete);
    EXPECT_EQ(r.x_hat, codec.decode(codec.encode(x)));
    EXPECT_LE(r.rounds, static_cast<int>(opt.lsf.search_set.size()) + 1);
    EXPECT_FALSE(rx.confidence_gate(task, r.x_hat).has_value());
    EXPECT_EQ(ch.counters(Direction::uplink).delivered_messages, r.rounds - 1);
    ch.send(Direction::uplink, control(MsgType::more_info_request));
    EXPECT_THROW(tx.respond(ch.receive(Direction::uplink), ch), ProtocolError);
  }
}

TEST_F(Session, RegionRequestRounds) {
  const Image x = image();
  Transmitter tx(codec, task, opt);
  tx.load(x);
  {
    Receiver rx(codec, opt);
    Channel ch;
    tx.transmit_round(fixed_decision(tx.analysis(), 0), ch);
    rx.receive_and_reconstruct(ch.receive(Direction::downlink));
    region_request_round(rx, tx, {0, 0, 4, 4}, ch);
    EXPECT_EQ(ch.counters(Direction::uplink).delivered_payload_bits, 64);
    EXPECT_EQ(rx.patch_cells(), 1u);
    EXPECT_EQ(rx.fused().at(0, 0), tx.analysis().z.at(0, 0));
  }
  {
    tx.load(x);
    Receiver rx(codec, opt);
    Channel ch;
    tx.transmit_round(fixed_decision(tx.analysis(), 0), ch);
    rx.receive_and_reconstruct(ch.receive(Direction::downlink));
    const Image all = region_request_round(rx, tx, {0, 0, 32, 32}, ch);
    EXPECT_EQ(all, codec.decode(codec.encode(x)));
    EXPECT_EQ(ch.counters(Direction::uplink).delivered_bytes, static_cast<long>(kHeaderBytes + 8));
  }
}

TEST_F(Session, ErrorPaths) {
  Transmitter tx(codec, task, opt);
  tx.load(image());
  Receiver rx(codec, opt);
  Channel ch;
  EXPECT_THROW(rx.region_request({0, 0, 4, 4}), ProtocolError);
  SemMessage patch = control(MsgType::task_patch);
  patch.grid_h = patch.grid_w = 8;
  EXPECT_THROW(rx.receive_and_reconstruct(patch), ProtocolError);
  SemMessage wide = patch;
  wide.bits = 9;
  EXPECT_THROW(rx.receive_and_reconstruct(wide), ProtocolError);
  EXPECT_THROW(rx.receive_and_reconstruct(control(MsgType::more_info_request)), ProtocolError);

  tx.transmit_round(fixed_decision(tx.analysis(), 0), ch);
  rx.receive_and_reconstruct(ch.receive(Direction::downlink));
  EXPECT_THROW(rx.region_request({4, 4, 4, 8}), ArgumentError);
  EXPECT_THROW(rx.region_request({0, 0, 33, 8}), ArgumentError);
  EXPECT_THROW(rx.region_request({-1, 0, 4, 8}), ArgumentError);
  SemMessage mismatched = patch;
  mismatched.grid_h = 4;
  EXPECT_THROW(rx.receive_and_reconstruct(mismatched), ProtocolError);
  EXPECT_THROW(tx.respond(control(MsgType::context_only), ch), ProtocolError);
  SemMessage empty_box = control(MsgType::region_request);
  EXPECT_THROW(tx.respond(empty_box, ch), ProtocolError);
}
