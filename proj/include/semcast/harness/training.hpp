#pragma once

#include <filesystem>
#include <sstream>
#include <string>

#include "semcast/checkpoint.hpp"
#include "semcast/classifier.hpp"
#include "semcast/codec.hpp"
#include "semcast/harness/config.hpp"
#include "semcast/harness/scenarios.hpp"

namespace semcast::harness {

/// Trains the codec on the train split, reports validation PSNR and usage,
/// and writes the checkpoint.
inline CodecTrainResult train_codec_stage(const RunConfig& cfg, const Log& log = {}) {
  const auto train = images_of(load_split(cfg, Split::train));
  const auto val = images_of(load_split(cfg, Split::val));
  Codec codec(cfg.codec(), cfg.seed);
  const auto result = train_codec(codec, std::span<const Image>(train), std::span<const Image>(val),
                                  cfg.codec_training(), log);
  if (cfg.codec_path().has_parent_path()) std::filesystem::create_directories(cfg.codec_path().parent_path());
  write_checkpoint(cfg.codec_path(), codec.to_checkpoint());
  if (log) {
    std::ostringstream msg;
    msg << "codec: val PSNR " << result.val_psnr << " dB, val codebook usage " << 100.0 * result.val_usage
        << "%, saved " << cfg.codec_path().string();
    log(msg.str());
  }
  return result;
}

/// Trains task A (fine labels) or task B (labels grouped by task_b_groups).
inline ClassifierTrainResult train_task_stage(const RunConfig& cfg, char which, const Log& log = {}) {
  if (which != 'a' && which != 'b') throw ArgumentError("task must be 'a' or 'b'");
  const std::vector<int> groups = which == 'b' ? cfg.task_b_groups : std::vector<int>{};
  const auto train = load_split(cfg, Split::train, groups);
  const auto val = load_split(cfg, Split::val, groups);
  ClassifierConfig mc;
  mc.classes = std::max(class_count(train), 2);
  mc.width = cfg.task_width;
  mc.final_kernel = cfg.task_kernel;
  mc.input_h = cfg.image_size;
  mc.input_w = cfg.image_size;
  TaskModel model(mc, cfg.seed * 7919ULL + static_cast<std::uint64_t>(which));
  const auto result = train_classifier(model, std::span<const LabeledImage>(train), std::span<const LabeledImage>(val),
                                       cfg.task_training(static_cast<std::uint64_t>(which)), log);
  const auto path = which == 'a' ? cfg.task_path() : cfg.task_b_path();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  write_checkpoint(path, model.to_checkpoint());
  if (log) {
    std::ostringstream msg;
    msg << "task " << which << ": " << mc.classes << " classes, val accuracy " << 100.0 * result.val_accuracy
        << "%, saved " << path.string();
    log(msg.str());
  }
  return result;
}

}  // namespace semcast::harness
