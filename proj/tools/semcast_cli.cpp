#include <cstdio>
#include <fstream>
#include <iostream>
#include <iterator>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "semcast/alloc_tuning.hpp"
#include "semcast/harness/config.hpp"
#include "semcast/harness/report.hpp"
#include "semcast/harness/scenarios.hpp"
#include "semcast/harness/training.hpp"
#include "semcast/synth.hpp"
#include "semcast/wire.hpp"

namespace {

using namespace semcast;
using namespace semcast::harness;

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  long seed = -1;
};

void add_common(CLI::App* sub, Common& c, bool seed_required) {
  sub->add_option("-c,--config", c.config_path, "key=value config file");
  sub->add_option("-s,--set", c.overrides, "override a config key (key=value), repeatable");
  auto* seed = sub->add_option("--seed", c.seed, "random seed");
  if (seed_required) seed->required();
}

RunConfig resolve(const Common& c) {
  KeyValueConfig kv;
  if (!c.config_path.empty()) kv = KeyValueConfig::load(c.config_path);
  for (const auto& o : c.overrides) kv.apply_override(o);
  if (c.seed >= 0) kv.set("seed", std::to_string(c.seed));
  return RunConfig::from(kv);
}

void log_line(const std::string& s) { std::cerr << s << std::endl; }

nlohmann::json describe(const SemMessage& m) {
  nlohmann::json j;
  j["type"] = msg_type_name(m.type);
  j["grid"] = {m.grid_h, m.grid_w};
  j["bits_per_index"] = m.bits;
  j["payload_bits"] = m.payload_bits();
  switch (m.type) {
    case MsgType::context_only: j["context_cells"] = m.context.size(); break;
    case MsgType::context_plus_task:
      j["context_grid"] = {m.context_h, m.context_w};
      j["context_cells"] = m.context.size();
      [[fallthrough]];
    case MsgType::task_patch:
      j["position_mode"] = m.position_mode() == PositionMode::list ? "list" : "bitmap";
      j["patch_cells"] = m.positions.size();
      break;
    case MsgType::full_latent: j["latent_cells"] = m.latent.size(); break;
    case MsgType::region_request: j["box"] = {m.box.top, m.box.left, m.box.bottom, m.box.right}; break;
    case MsgType::more_info_request: break;
  }
  return j;
}

int inspect(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  nlohmann::json out;
  if (bytes.size() >= 4 && std::string(bytes.begin(), bytes.begin() + 4) == "SCTR") {
    out = nlohmann::json::array();
    for (const auto& e : read_transcript(path)) {
      auto j = describe(deserialize(e.bytes));
      j["direction"] = e.direction == Direction::downlink ? "downlink" : "uplink";
      j["wire_bytes"] = e.bytes.size();
      out.push_back(j);
    }
  } else {
    out = describe(deserialize(bytes));
    out["wire_bytes"] = bytes.size();
  }
  std::cout << out.dump(2) << std::endl;
  return 0;
}

void print_rows(const ScenarioResult& r) { std::cout << to_csv(r.rows); }

}  // namespace

int main(int argc, char** argv) {
  semcast::tune_allocator();
  CLI::App app{"Task-adaptive semantic communication simulator"};
  app.require_subcommand(1);

  Common common;
  auto* make = app.add_subcommand("make-dataset", "render the synthetic shapes dataset");
  synth::Config sc;
  std::string out_dir = "data";
  make->add_option("-o,--out", out_dir, "output directory");
  make->add_option("--train", sc.train, "training images");
  make->add_option("--val", sc.val, "validation images");
  make->add_option("--test", sc.test, "test images");
  make->add_option("--size", sc.size, "image side in pixels");
  make->add_option("--seed", sc.seed, "random seed");

  auto* tcodec = app.add_subcommand("train-codec", "train the VQ codec");
  add_common(tcodec, common, false);

  auto* ttask = app.add_subcommand("train-task", "train a downstream classifier");
  add_common(ttask, common, false);
  std::string which = "a";
  ttask->add_option("--task", which, "a: fine labels, b: grouped labels")->check(CLI::IsMember({"a", "b"}));

  auto* s1 = app.add_subcommand("scenario1", "fixed-percentage transmission");
  add_common(s1, common, true);
  auto* s2 = app.add_subcommand("scenario2", "local semantic feedback");
  add_common(s2, common, true);
  auto* s3 = app.add_subcommand("scenario3", "task switch with region requests");
  add_common(s3, common, true);

  auto* insp = app.add_subcommand("inspect-message", "decode a serialized message or transcript");
  std::string msg_path;
  insp->add_option("file", msg_path, "message or transcript file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*make) {
      synth::write_dataset(out_dir, sc);
      std::cerr << "wrote " << sc.train + sc.val + sc.test << " images to " << out_dir << std::endl;
      return 0;
    }
    if (*insp) return inspect(msg_path);

    const RunConfig cfg = resolve(common);
    if (*tcodec) {
      train_codec_stage(cfg, log_line);
      return 0;
    }
    if (*ttask) {
      train_task_stage(cfg, which[0], log_line);
      return 0;
    }

    std::filesystem::create_directories(cfg.output_dir);
    const Codec codec = load_codec(cfg);
    const TaskModel task_a = load_task(cfg.task_path());
    std::vector<ScenarioResult> results;
    if (*s1) results.push_back(run_scenario1(cfg, codec, task_a, load_split(cfg, Split::test), log_line));
    if (*s2) results.push_back(run_scenario2(cfg, codec, task_a, load_split(cfg, Split::test), log_line));
    if (*s3) {
      const TaskModel task_b = load_task(cfg.task_b_path());
      results.push_back(
          run_scenario3(cfg, codec, task_a, task_b, load_split(cfg, Split::test, cfg.task_b_groups), log_line));
    }
    emit_report(cfg, results);
    for (const auto& r : results) print_rows(r);
    return 0;
  } catch (const semcast::Error& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  }
}
