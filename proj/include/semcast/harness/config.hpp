#pragma once

#include <cstdint>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "semcast/classifier.hpp"
#include "semcast/codec.hpp"
#include "semcast/dataset.hpp"
#include "semcast/errors.hpp"
#include "semcast/image_io.hpp"
#include "semcast/kv_config.hpp"
#include "semcast/protocol.hpp"
#include "semcast/rate.hpp"

namespace semcast::harness {

struct RunConfig {
  std::filesystem::path dataset_dir = "data";  // holds train.csv, val.csv, test.csv
  int image_size = 64;
  int K = 512;
  int d_c = 64;
  int f_model = 4;
  int codec_width = 16;
  double gamma = 0.25;
  int f_ctx = 4;

  int codec_epochs = 20;
  int codec_batch = 16;
  double codec_lr = 1e-3;

  int task_width = 16;
  int task_kernel = 5;
  int task_epochs = 20;
  int task_batch = 32;
  double task_lr = 2e-3;
  std::vector<int> task_b_groups{0, 0, 1, 1, 2, 2, 3, 3, 4, 4};

  std::vector<int> search_set{10, 20, 30, 50, 70, 90, 100};
  double theta = 0.8;
  double region_cut = 0.3;  // fraction of the CAM peak bounding the region box
  int compat_topk = 1;
  std::uint64_t seed = 1;
  int eval_limit = 0;   // 0: whole test split
  int transcripts = 2;  // sessions dumped per scenario

  std::filesystem::path output_dir = "out";
  std::filesystem::path codec_checkpoint;   // default: output_dir/codec.ckpt
  std::filesystem::path task_checkpoint;    // default: output_dir/task_a.ckpt
  std::filesystem::path task_b_checkpoint;  // default: output_dir/task_b.ckpt

  void validate() const {
    Geometry{image_size, image_size, f_model, f_ctx, K}.validate();
    CodecConfig c = codec();
    c.validate();
    if (search_set.empty()) throw ArgumentError("search_set is empty");
    for (int p : search_set) {
      if (p < 1 || p > 100) throw ArgumentError("search_set entries must lie in [1, 100]");
    }
    if (theta < 0.0 || theta > 1.0) throw ArgumentError("theta must lie in [0, 1]");
    if (region_cut <= 0.0 || region_cut > 1.0) throw ArgumentError("region_cut must lie in (0, 1]");
    if (compat_topk < 1) throw ArgumentError("compat_topk must be >= 1");
  }

  Geometry geometry() const { return {image_size, image_size, f_model, f_ctx, K}; }

  CodecConfig codec() const {
    CodecConfig c;
    c.K = K;
    c.d_c = d_c;
    c.f_model = f_model;
    c.width = codec_width;
    c.gamma = gamma;
    return c;
  }

  CodecTrainConfig codec_training() const {
    CodecTrainConfig t;
    t.epochs = codec_epochs;
    t.batch = codec_batch;
    t.lr = codec_lr;
    t.seed = seed;
    t.context_factor = f_ctx;
    return t;
  }

  ClassifierTrainConfig task_training(std::uint64_t salt) const {
    ClassifierTrainConfig t;
    t.epochs = task_epochs;
    t.batch = task_batch;
    t.lr = task_lr;
    t.seed = seed * 1000003ULL + salt;
    return t;
  }

  SessionOptions session() const {
    SessionOptions s;
    s.f_ctx = f_ctx;
    s.lsf.search_set = search_set;
    s.lsf.top_k = compat_topk;
    s.theta = theta;
    return s;
  }

  std::filesystem::path codec_path() const {
    return codec_checkpoint.empty() ? output_dir / "codec.ckpt" : codec_checkpoint;
  }
  std::filesystem::path task_path() const {
    return task_checkpoint.empty() ? output_dir / "task_a.ckpt" : task_checkpoint;
  }
  std::filesystem::path task_b_path() const {
    return task_b_checkpoint.empty() ? output_dir / "task_b.ckpt" : task_b_checkpoint;
  }

  static RunConfig from(const KeyValueConfig& kv) {
    RunConfig c;
    c.dataset_dir = kv.get_string("dataset_dir", c.dataset_dir.string());
    c.image_size = kv.get_int("image_size", c.image_size);
    c.K = kv.get_int("K", c.K);
    c.d_c = kv.get_int("d_c", c.d_c);
    c.f_model = kv.get_int("f_model", c.f_model);
    c.codec_width = kv.get_int("codec_width", c.codec_width);
    c.gamma = kv.get_double("gamma", c.gamma);
    c.f_ctx = kv.get_int("f_ctx", c.f_ctx);
    c.codec_epochs = kv.get_int("codec_epochs", c.codec_epochs);
    c.codec_batch = kv.get_int("codec_batch", c.codec_batch);
    c.codec_lr = kv.get_double("codec_lr", c.codec_lr);
    c.task_width = kv.get_int("task_width", c.task_width);
    c.task_kernel = kv.get_int("task_kernel", c.task_kernel);
    c.task_epochs = kv.get_int("task_epochs", c.task_epochs);
    c.task_batch = kv.get_int("task_batch", c.task_batch);
    c.task_lr = kv.get_double("task_lr", c.task_lr);
    c.task_b_groups = kv.get_int_list("task_b_groups", c.task_b_groups);
    c.search_set = kv.get_int_list("search_set", c.search_set);
    c.theta = kv.get_double("theta", c.theta);
    c.region_cut = kv.get_double("region_cut", c.region_cut);
    c.compat_topk = kv.get_int("compat_topk", c.compat_topk);
    const int seed = kv.get_int("seed", static_cast<int>(c.seed));
    if (seed < 0) throw ArgumentError("seed must be non-negative");
    c.seed = static_cast<std::uint64_t>(seed);
    c.eval_limit = kv.get_int("eval_limit", c.eval_limit);
    c.transcripts = kv.get_int("transcripts", c.transcripts);
    c.output_dir = kv.get_string("output_dir", c.output_dir.string());
    c.codec_checkpoint = kv.get_string("codec_checkpoint", "");
    c.task_checkpoint = kv.get_string("task_checkpoint", "");
    c.task_b_checkpoint = kv.get_string("task_b_checkpoint", "");
    c.validate();
    return c;
  }

  /// Canonical key=value dump; also the input of fingerprint().
  std::string to_string() const {
    auto list = [](const std::vector<int>& v) {
      std::string s;
      for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
      return s;
    };
    std::ostringstream o;
    o.precision(17);
    o << "dataset_dir=" << dataset_dir.string() << "\nimage_size=" << image_size << "\nK=" << K
      << "\nd_c=" << d_c << "\nf_model=" << f_model << "\ncodec_width=" << codec_width << "\ngamma=" << gamma
      << "\nf_ctx=" << f_ctx << "\ncodec_epochs=" << codec_epochs << "\ncodec_batch=" << codec_batch
      << "\ncodec_lr=" << codec_lr << "\ntask_width=" << task_width << "\ntask_kernel=" << task_kernel << "\ntask_epochs=" << task_epochs
      << "\ntask_batch=" << task_batch << "\ntask_lr=" << task_lr << "\ntask_b_groups=" << list(task_b_groups)
      << "\nsearch_set=" << list(search_set) << "\ntheta=" << theta << "\nregion_cut=" << region_cut << "\ncompat_topk=" << compat_topk
      << "\nseed=" << seed << "\neval_limit=" << eval_limit << "\ntranscripts=" << transcripts
      << "\noutput_dir=" << output_dir.string() << "\ncodec_checkpoint=" << codec_path().string()
      << "\ntask_checkpoint=" << task_path().string() << "\ntask_b_checkpoint=" << task_b_path().string() << '\n';
    return o.str();
  }
};

/// 64-bit FNV-1a, used to key cached artifacts on their configuration.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (const unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::vector<LabeledImage> load_split(const RunConfig& cfg, Split split,
                                            const std::vector<int>& groups = {}) {
  auto ds = read_manifest(cfg.dataset_dir / (std::string(split_name(split)) + ".csv"), split);
  if (!groups.empty()) ds = remap_labels(ds, groups);
  std::vector<LabeledImage> out;
  out.reserve(ds.size());
  const int multiple = cfg.f_model * cfg.f_ctx;
  for (const auto& item : ds.items) {
    out.push_back({load_image(item.path, cfg.image_size, cfg.image_size, multiple), item.label});
  }
  return out;
}

inline std::vector<Image> images_of(const std::vector<LabeledImage>& data) {
  std::vector<Image> out;
  out.reserve(data.size());
  for (const auto& d : data) out.push_back(d.image);
  return out;
}

inline int class_count(const std::vector<LabeledImage>& data) {
  int m = -1;
  for (const auto& d : data) m = std::max(m, d.label);
  return m + 1;
}

inline Codec load_codec(const RunConfig& cfg) {
  if (!std::filesystem::exists(cfg.codec_path())) {
    throw IoError("codec checkpoint " + cfg.codec_path().string() + " is missing; run train-codec first");
  }
  auto codec = Codec::from_checkpoint(read_checkpoint(cfg.codec_path()));
  if (codec.config().f_model != cfg.f_model || codec.config().K != cfg.K) {
    throw ArgumentError("codec checkpoint geometry (K=" + std::to_string(codec.config().K) + ", f_model=" +
                        std::to_string(codec.config().f_model) + ") does not match the configuration");
  }
  return codec;
}

inline TaskModel load_task(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw IoError("task checkpoint " + path.string() + " is missing; run train-task first");
  }
  return TaskModel::from_checkpoint(read_checkpoint(path));
}

}  // namespace semcast::harness
