#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "semcast/classifier.hpp"
#include "semcast/codec.hpp"
#include "semcast/harness/config.hpp"
#include "semcast/metrics.hpp"
#include "semcast/protocol.hpp"
#include "semcast/saliency.hpp"
#include "semcast/semcom.hpp"

namespace semcast::harness {

using Log = std::function<void(const std::string&)>;

struct MetricsRow {
  std::string scenario;
  std::string mode;
  int images = 0;
  double accuracy = 0.0;      // percent
  double psnr = 0.0;          // dB, NaN when not applicable
  double ssim = 0.0;          // NaN when not applicable
  double bandwidth_kb = 0.0;  // mean downlink payload per image
  double uplink_kb = 0.0;     // mean uplink payload per image
  double rounds = 0.0;        // mean downlink messages per image
  double wall_seconds = 0.0;  // JSON only
};

/// Per-image LSF outcome, kept for soundness checks.
struct LsfRecord {
  int percent = 0;
  int first_compatible = -1;
  LsfMode mode = LsfMode::context_only;
  long rate_bits = 0;
  long channel_bits = 0;
  bool fused_match = false;  // transmitter z_r == receiver z_r
  bool correct = false;
  int gate_rounds = 0;
  bool gate_complete = false;
};

/// Per-image new-task feedback outcome.
struct FeedbackRecord {
  bool correct_before = false;
  bool correct_after = false;
  bool requested = false;
  long request_bytes = 0;   // uplink payload bytes
  long feedback_bits = 0;   // downlink payload of the reply
  long initial_bits = 0;    // R of the LSF transmission
  long image_bits = 0;      // R_i
  PixelBox box;
};

struct ScenarioResult {
  std::string name;
  std::vector<MetricsRow> rows;
  std::vector<LsfRecord> lsf;
  std::vector<FeedbackRecord> feedback;
  std::optional<SignTest> sign;
  std::map<std::string, double> extra;

  const MetricsRow& row(const std::string& mode) const {
    for (const auto& r : rows) {
      if (r.mode == mode) return r;
    }
    throw ArgumentError("no row for mode " + mode);
  }
};

inline std::string fixed_mode_name(int percent) { return "ctx_p" + std::to_string(percent); }

namespace detail {

class ModeStats {
 public:
  void add(bool correct, const Image& x, const Image& x_hat, const Channel& ch) {
    ++n_;
    correct_ += correct ? 1 : 0;
    psnr_ += std::min(psnr(x, x_hat), 100.0);
    ssim_ += ssim(x, x_hat);
    add_channel(ch);
  }

  void add_channel(const Channel& ch) {
    down_bits_ += ch.counters(Direction::downlink).delivered_payload_bits;
    up_bits_ += ch.counters(Direction::uplink).delivered_payload_bits;
    rounds_ += ch.counters(Direction::downlink).delivered_messages;
  }

  void add_time(double s) { seconds_ += s; }

  MetricsRow row(const std::string& scenario, const std::string& mode) const {
    MetricsRow r;
    r.scenario = scenario;
    r.mode = mode;
    r.images = n_;
    const double n = n_ > 0 ? n_ : 1;
    r.accuracy = 100.0 * correct_ / n;
    r.psnr = psnr_ / n;
    r.ssim = ssim_ / n;
    r.bandwidth_kb = bits_to_kb(down_bits_) / n;
    r.uplink_kb = bits_to_kb(up_bits_) / n;
    r.rounds = static_cast<double>(rounds_) / n;
    r.wall_seconds = seconds_;
    return r;
  }

 private:
  int n_ = 0;
  long correct_ = 0;
  double psnr_ = 0.0;
  double ssim_ = 0.0;
  long down_bits_ = 0;
  long up_bits_ = 0;
  long rounds_ = 0;
  double seconds_ = 0.0;
};

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline void dump(const RunConfig& cfg, const Channel& ch, const std::string& scenario, const std::string& mode,
                 std::size_t index) {
  if (static_cast<int>(index) >= cfg.transcripts) return;
  const auto dir = cfg.output_dir / "transcripts";
  std::filesystem::create_directories(dir);
  write_transcript(dir / (scenario + "_" + mode + "_" + std::to_string(index) + ".bin"), ch.transcript());
}

inline std::vector<LabeledImage> limit(const std::vector<LabeledImage>& test, int n) {
  if (n <= 0 || n >= static_cast<int>(test.size())) return test;
  return {test.begin(), test.begin() + n};
}

}  // namespace detail

/// Context-only, each fixed p of the search set below 100, full latent, and the
/// raw original for reference. No feedback anywhere.
inline ScenarioResult run_scenario1(const RunConfig& cfg, const Codec& codec, const TaskModel& task,
                                    const std::vector<LabeledImage>& test_split, const Log& log = {}) {
  const auto test = detail::limit(test_split, cfg.eval_limit);
  if (test.empty()) throw ArgumentError("scenario1 needs a non-empty test split");
  const auto session = cfg.session();
  std::vector<int> percents;
  for (int p : cfg.search_set) {
    if (p < 100 && std::find(percents.begin(), percents.end(), p) == percents.end()) percents.push_back(p);
  }
  std::sort(percents.begin(), percents.end());

  std::vector<std::string> modes{"ctx"};
  for (int p : percents) modes.push_back(fixed_mode_name(p));
  modes.push_back("full");
  std::map<std::string, detail::ModeStats> stats;
  long original_correct = 0;

  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto& item = test[i];
    original_correct += task.predict(item.image) == item.label ? 1 : 0;
    const auto analysis = analyze(codec, task, item.image, cfg.f_ctx);
    for (const auto& mode : modes) {
      const auto t0 = std::chrono::steady_clock::now();
      LsfDecision d;
      if (mode == "ctx") d = fixed_decision(analysis, 0);
      else if (mode == "full") d = full_latent_decision(analysis);
      else d = fixed_decision(analysis, std::stoi(mode.substr(5)));
      Transmitter tx(codec, task, session);
      tx.load(analysis);
      Receiver rx(codec, session);
      Channel ch(static_cast<int>(i) < cfg.transcripts);
      tx.transmit_round(d, ch);
      const Image x_hat = rx.receive_and_reconstruct(ch.receive(Direction::downlink));
      stats[mode].add(task.predict(x_hat) == item.label, item.image, x_hat, ch);
      stats[mode].add_time(detail::seconds_since(t0));
      detail::dump(cfg, ch, "scenario1", mode, i);
    }
    if (log && (i + 1) % 50 == 0) log("scenario1: " + std::to_string(i + 1) + "/" + std::to_string(test.size()));
  }

  ScenarioResult r;
  r.name = "scenario1";
  MetricsRow original;
  original.scenario = r.name;
  original.mode = "original";
  original.images = static_cast<int>(test.size());
  original.accuracy = 100.0 * original_correct / static_cast<double>(test.size());
  original.psnr = std::numeric_limits<double>::quiet_NaN();
  original.ssim = std::numeric_limits<double>::quiet_NaN();
  original.bandwidth_kb = bits_to_kb(cfg.geometry().raw_bits());  // raw C·H·W·8, not sent over the channel
  original.rounds = 0;
  r.rows.push_back(original);
  for (const auto& mode : modes) r.rows.push_back(stats[mode].row(r.name, mode));
  return r;
}

/// LSF per image, plus an LSF start followed by receiver confidence gating.
/// The fixed-p rows of scenario 1 are included for comparison.
inline ScenarioResult run_scenario2(const RunConfig& cfg, const Codec& codec, const TaskModel& task,
                                    const std::vector<LabeledImage>& test_split, const Log& log = {}) {
  const auto test = detail::limit(test_split, cfg.eval_limit);
  ScenarioResult r = run_scenario1(cfg, codec, task, test, log);
  r.name = "scenario2";
  for (auto& row : r.rows) row.scenario = r.name;
  const auto session = cfg.session();
  detail::ModeStats lsf_stats, gate_stats;

  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto& item = test[i];
    auto t0 = std::chrono::steady_clock::now();
    const auto analysis = analyze(codec, task, item.image, cfg.f_ctx);
    const LsfDecision d = lsf_select(codec, task, analysis, session.lsf);

    Transmitter tx(codec, task, session);
    tx.load(analysis);
    Receiver rx(codec, session);
    Channel ch(static_cast<int>(i) < cfg.transcripts);
    tx.transmit_round(d, ch);
    const Image x_hat = rx.receive_and_reconstruct(ch.receive(Direction::downlink));

    LsfRecord rec;
    rec.percent = d.percent;
    rec.first_compatible = d.first_compatible;
    rec.mode = d.mode;
    rec.rate_bits = d.rate_bits;
    rec.channel_bits = ch.counters(Direction::downlink).delivered_payload_bits;
    rec.fused_match = rx.fused() == d.fused;
    rec.correct = task.predict(x_hat) == item.label;
    lsf_stats.add(rec.correct, item.image, x_hat, ch);
    lsf_stats.add_time(detail::seconds_since(t0));
    detail::dump(cfg, ch, r.name, "lsf", i);

    t0 = std::chrono::steady_clock::now();
    Transmitter gtx(codec, task, session);
    gtx.load(analysis);
    Receiver grx(codec, session);
    Channel gch(static_cast<int>(i) < cfg.transcripts);
    const auto s = run_session(gtx, grx, task, d, gch);
    rec.gate_rounds = s.rounds;
    rec.gate_complete = s.complete;
    gate_stats.add(task.predict(s.x_hat) == item.label, item.image, s.x_hat, gch);
    gate_stats.add_time(detail::seconds_since(t0));
    detail::dump(cfg, gch, r.name, "lsf_gate", i);

    r.lsf.push_back(rec);
    if (log && (i + 1) % 50 == 0) log("scenario2: " + std::to_string(i + 1) + "/" + std::to_string(test.size()));
  }
  r.rows.push_back(lsf_stats.row(r.name, "lsf"));
  r.rows.push_back(gate_stats.row(r.name, "lsf_gate"));
  return r;
}

/// Task switch: LSF tuned to task A; the receiver runs task B on x̂ and, when
/// B is not confident, requests the box around B's strongest GradCAM region.
inline ScenarioResult run_scenario3(const RunConfig& cfg, const Codec& codec, const TaskModel& task_a,
                                    const TaskModel& task_b, const std::vector<LabeledImage>& test_split_b,
                                    const Log& log = {}) {
  const auto test = detail::limit(test_split_b, cfg.eval_limit);
  if (test.empty()) throw ArgumentError("scenario3 needs a non-empty test split");
  const auto session = cfg.session();
  detail::ModeStats before, after, full;
  ScenarioResult r;
  r.name = "scenario3";
  std::vector<double> diffs;

  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto& item = test[i];
    auto t0 = std::chrono::steady_clock::now();
    const auto analysis = analyze(codec, task_a, item.image, cfg.f_ctx);
    const LsfDecision d = lsf_select(codec, task_a, analysis, session.lsf);

    Transmitter tx(codec, task_a, session);
    tx.load(analysis);
    Receiver rx(codec, session);
    Channel ch(static_cast<int>(i) < cfg.transcripts);
    tx.transmit_round(d, ch);
    const Image x_hat = rx.receive_and_reconstruct(ch.receive(Direction::downlink));
    const auto initial_bits = ch.counters(Direction::downlink).delivered_payload_bits;

    FeedbackRecord rec;
    rec.initial_bits = initial_bits;
    rec.image_bits = analysis.geometry.image_bits();
    rec.correct_before = task_b.predict(x_hat) == item.label;
    before.add(rec.correct_before, item.image, x_hat, ch);
    before.add_time(detail::seconds_since(t0));

    t0 = std::chrono::steady_clock::now();
    Image x_after = x_hat;
    const auto probs = task_b.probabilities(x_hat);
    if (!rx.complete() && *std::max_element(probs.begin(), probs.end()) < cfg.theta) {
      rec.box = top_region_box(gradcam(task_b, x_hat), static_cast<float>(cfg.region_cut));
      if (!rec.box.empty()) {
        x_after = region_request_round(rx, tx, rec.box, ch);
        rec.requested = true;
        rec.request_bytes = ch.counters(Direction::uplink).delivered_payload_bits / 8;
        rec.feedback_bits = ch.counters(Direction::downlink).delivered_payload_bits - initial_bits;
      }
    }
    rec.correct_after = task_b.predict(x_after) == item.label;
    after.add(rec.correct_after, item.image, x_after, ch);
    after.add_time(detail::seconds_since(t0));
    detail::dump(cfg, ch, r.name, "feedback", i);

    // Reference: task B on the full-latent reconstruction.
    Channel fch;
    Receiver frx(codec, session);
    tx.load(analysis);
    tx.transmit_round(full_latent_decision(analysis), fch);
    const Image x_full = frx.receive_and_reconstruct(fch.receive(Direction::downlink));
    full.add(task_b.predict(x_full) == item.label, item.image, x_full, fch);

    diffs.push_back(static_cast<double>(rec.correct_after) - static_cast<double>(rec.correct_before));
    r.feedback.push_back(rec);
    if (log && (i + 1) % 50 == 0) log("scenario3: " + std::to_string(i + 1) + "/" + std::to_string(test.size()));
  }
  r.rows.push_back(before.row(r.name, "taskb_before"));
  r.rows.push_back(after.row(r.name, "taskb_after"));
  r.rows.push_back(full.row(r.name, "taskb_full"));
  r.sign = sign_test(diffs);
  long requests = 0;
  for (const auto& f : r.feedback) requests += f.requested ? 1 : 0;
  r.extra["requests"] = static_cast<double>(requests);
  r.extra["mean_improvement_points"] = 100.0 * mean(diffs);
  r.extra["sign_test_p"] = r.sign->p_value;
  return r;
}

}  // namespace semcast::harness
