#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "semcast/errors.hpp"
#include "semcast/harness/config.hpp"
#include "semcast/harness/scenarios.hpp"

namespace semcast::harness {

namespace detail {

inline std::string fmt(double v, int precision) {
  if (std::isnan(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

inline nlohmann::json number_or_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

inline void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
}

}  // namespace detail

inline const char* kCsvHeader = "scenario,mode,images,accuracy_pct,psnr_db,ssim,bandwidth_kb,uplink_kb,rounds";

/// CSV without timing columns, so reruns with the same seed are byte-identical.
inline std::string to_csv(const std::vector<MetricsRow>& rows) {
  std::string out = std::string(kCsvHeader) + "\n";
  for (const auto& r : rows) {
    out += r.scenario + "," + r.mode + "," + std::to_string(r.images) + "," + detail::fmt(r.accuracy, 4) + "," +
           detail::fmt(r.psnr, 4) + "," + detail::fmt(r.ssim, 6) + "," + detail::fmt(r.bandwidth_kb, 6) + "," +
           detail::fmt(r.uplink_kb, 6) + "," + detail::fmt(r.rounds, 4) + "\n";
  }
  return out;
}

inline void write_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows) {
  if (rows.empty()) throw ArgumentError("no metrics rows to write");
  if (path.has_parent_path()) detail::ensure_dir(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_csv(rows);
  if (!out) throw IoError("short write on " + path.string());
}

inline nlohmann::json to_json(const MetricsRow& r) {
  return {{"scenario", r.scenario},
          {"mode", r.mode},
          {"images", r.images},
          {"accuracy_pct", r.accuracy},
          {"psnr_db", detail::number_or_null(r.psnr)},
          {"ssim", detail::number_or_null(r.ssim)},
          {"bandwidth_kb", r.bandwidth_kb},
          {"uplink_kb", r.uplink_kb},
          {"rounds", r.rounds},
          {"wall_seconds", r.wall_seconds}};
}

inline nlohmann::json to_json(const ScenarioResult& s) {
  nlohmann::json j;
  j["name"] = s.name;
  j["rows"] = nlohmann::json::array();
  for (const auto& r : s.rows) j["rows"].push_back(to_json(r));
  for (const auto& [k, v] : s.extra) j["extra"][k] = detail::number_or_null(v);
  if (!s.lsf.empty()) {
    nlohmann::json hist = nlohmann::json::object();
    for (const auto& rec : s.lsf) {
      const std::string key = rec.mode == LsfMode::context_plus_task ? std::to_string(rec.percent) : mode_name(rec.mode);
      hist[key] = hist.value(key, 0) + 1;
    }
    j["lsf_choice_histogram"] = hist;
  }
  if (s.sign) {
    j["sign_test"] = {{"positive", s.sign->positive},
                      {"negative", s.sign->negative},
                      {"ties", s.sign->ties},
                      {"p_value", s.sign->p_value}};
  }
  return j;
}

inline void write_json(const std::filesystem::path& path, const RunConfig& cfg,
                       const std::vector<ScenarioResult>& results) {
  if (path.has_parent_path()) detail::ensure_dir(path.parent_path());
  nlohmann::json j;
  j["config"] = cfg.to_string();
  const auto g = cfg.geometry();
  j["geometry"] = {{"context_bits", g.context_bits()},
                   {"image_bits", g.image_bits()},
                   {"raw_bits", g.raw_bits()},
                   {"bits_per_kb", kBitsPerKB}};
  j["scenarios"] = nlohmann::json::array();
  for (const auto& s : results) j["scenarios"].push_back(to_json(s));
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

/// Accuracy against bandwidth, one marker per row (raw original excluded).
inline void plot_rate_accuracy(const std::filesystem::path& path, const std::vector<MetricsRow>& rows,
                               const std::string& title) {
  std::vector<const MetricsRow*> pts;
  for (const auto& r : rows) {
    if (r.mode != "original") pts.push_back(&r);
  }
  if (pts.empty()) return;
  if (path.has_parent_path()) detail::ensure_dir(path.parent_path());
  constexpr int W = 640, H = 440, L = 70, R = 20, T = 40, B = 60;
  cv::Mat img(H, W, CV_8UC3, cv::Scalar(255, 255, 255));
  double xmax = 0.0;
  for (auto* p : pts) xmax = std::max(xmax, p->bandwidth_kb);
  xmax = xmax > 0 ? xmax * 1.1 : 1.0;
  auto px = [&](double kb) { return L + static_cast<int>((W - L - R) * kb / xmax); };
  auto py = [&](double acc) { return H - B - static_cast<int>((H - T - B) * acc / 100.0); };
  const cv::Scalar black(0, 0, 0), grey(200, 200, 200);
  for (int a = 0; a <= 100; a += 20) {
    cv::line(img, {L, py(a)}, {W - R, py(a)}, grey, 1);
    cv::putText(img, std::to_string(a), {L - 35, py(a) + 5}, cv::FONT_HERSHEY_SIMPLEX, 0.45, black, 1, cv::LINE_AA);
  }
  for (int k = 0; k <= 5; ++k) {
    const double kb = xmax * k / 5.0;
    cv::line(img, {px(kb), H - B}, {px(kb), H - B + 5}, black, 1);
    cv::putText(img, detail::fmt(kb, 3), {px(kb) - 18, H - B + 22}, cv::FONT_HERSHEY_SIMPLEX, 0.4, black, 1,
                cv::LINE_AA);
  }
  cv::line(img, {L, H - B}, {W - R, H - B}, black, 1);
  cv::line(img, {L, T}, {L, H - B}, black, 1);
  cv::putText(img, "bandwidth (KB / image)", {W / 2 - 90, H - 15}, cv::FONT_HERSHEY_SIMPLEX, 0.5, black, 1,
              cv::LINE_AA);
  cv::putText(img, "accuracy %", {5, T - 12}, cv::FONT_HERSHEY_SIMPLEX, 0.5, black, 1, cv::LINE_AA);
  cv::putText(img, title, {W / 2 - 60, T - 12}, cv::FONT_HERSHEY_SIMPLEX, 0.55, black, 1, cv::LINE_AA);

  std::vector<cv::Point> fixed;
  for (auto* p : pts) {
    if (p->mode == "ctx" || p->mode.rfind("ctx_p", 0) == 0 || p->mode == "full") {
      fixed.push_back({px(p->bandwidth_kb), py(p->accuracy)});
    }
  }
  std::sort(fixed.begin(), fixed.end(), [](const cv::Point& a, const cv::Point& b) { return a.x < b.x; });
  if (fixed.size() > 1) cv::polylines(img, fixed, false, cv::Scalar(180, 120, 40), 1, cv::LINE_AA);
  for (auto* p : pts) {
    const cv::Point c{px(p->bandwidth_kb), py(p->accuracy)};
    const bool fixed_mode = p->mode == "ctx" || p->mode.rfind("ctx_p", 0) == 0 || p->mode == "full";
    const cv::Scalar colour = fixed_mode ? cv::Scalar(180, 120, 40) : cv::Scalar(40, 40, 220);
    cv::circle(img, c, 4, colour, cv::FILLED, cv::LINE_AA);
    cv::putText(img, p->mode, {c.x + 6, c.y - 6}, cv::FONT_HERSHEY_SIMPLEX, 0.38, colour, 1, cv::LINE_AA);
  }
  if (!cv::imwrite(path.string(), img)) throw IoError("cannot write plot " + path.string());
}

/// metrics.csv, report.json and plots/<scenario>.png under cfg.output_dir.
inline void emit_report(const RunConfig& cfg, const std::vector<ScenarioResult>& results) {
  std::vector<MetricsRow> rows;
  for (const auto& s : results) rows.insert(rows.end(), s.rows.begin(), s.rows.end());
  if (rows.empty()) throw ArgumentError("no metrics rows to report");
  detail::ensure_dir(cfg.output_dir);
  write_csv(cfg.output_dir / "metrics.csv", rows);
  write_json(cfg.output_dir / "report.json", cfg, results);
  for (const auto& s : results) plot_rate_accuracy(cfg.output_dir / "plots" / (s.name + ".png"), s.rows, s.name);
}

}  // namespace semcast::harness
