#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "semcast/errors.hpp"

namespace semcast {

enum class Split { train, val, test };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

struct LabeledItem {
  std::filesystem::path path;
  int label = 0;
};

struct LabeledDataset {
  std::vector<LabeledItem> items;
  int class_count = 0;
  Split split = Split::train;

  std::size_t size() const { return items.size(); }
  bool empty() const { return items.empty(); }
};

/// Reads a `path,label` CSV manifest. Relative paths resolve against the
/// manifest's directory. When class_count is 0 it is inferred as max label + 1.
inline LabeledDataset read_manifest(const std::filesystem::path& manifest, Split split,
                                    int class_count = 0) {
  std::ifstream in(manifest);
  if (!in) throw IngestionError("cannot open manifest " + manifest.string());

  LabeledDataset ds;
  ds.split = split;
  std::string line;
  if (!std::getline(in, line)) throw IngestionError("empty manifest " + manifest.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "path,label") {
    throw IngestionError("manifest " + manifest.string() + " must start with header 'path,label'");
  }
  const auto base = manifest.parent_path();
  int max_label = -1;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) {
      throw IngestionError(manifest.string() + ":" + std::to_string(lineno) + ": missing label");
    }
    LabeledItem item;
    item.path = line.substr(0, comma);
    if (item.path.is_relative()) item.path = base / item.path;
    if (!std::filesystem::is_regular_file(item.path)) {
      throw IngestionError(manifest.string() + ":" + std::to_string(lineno) + ": no such image " +
                           item.path.string());
    }
    try {
      std::size_t used = 0;
      item.label = std::stoi(line.substr(comma + 1), &used);
    } catch (const std::exception&) {
      throw IngestionError(manifest.string() + ":" + std::to_string(lineno) + ": bad label");
    }
    if (item.label < 0) {
      throw IngestionError(manifest.string() + ":" + std::to_string(lineno) + ": negative label");
    }
    max_label = std::max(max_label, item.label);
    ds.items.push_back(std::move(item));
  }
  ds.class_count = class_count > 0 ? class_count : max_label + 1;
  if (max_label >= ds.class_count) {
    throw IngestionError(manifest.string() + ": label " + std::to_string(max_label) +
                         " outside [0, " + std::to_string(ds.class_count) + ")");
  }
  return ds;
}

inline void write_manifest(const std::filesystem::path& manifest, const LabeledDataset& ds) {
  std::ofstream out(manifest);
  if (!out) throw IoError("cannot write manifest " + manifest.string());
  out << "path,label\n";
  const auto base = manifest.parent_path();
  for (const auto& item : ds.items) {
    out << std::filesystem::relative(item.path, base).generic_string() << ',' << item.label << '\n';
  }
}

/// Relabels a dataset through a fine→coarse class map.
inline LabeledDataset remap_labels(const LabeledDataset& ds, const std::vector<int>& groups) {
  if (groups.empty()) return ds;
  LabeledDataset out = ds;
  int max_group = -1;
  for (int g : groups) max_group = std::max(max_group, g);
  out.class_count = max_group + 1;
  for (auto& item : out.items) {
    if (item.label >= static_cast<int>(groups.size())) {
      throw ArgumentError("label " + std::to_string(item.label) + " has no coarse group");
    }
    item.label = groups[item.label];
  }
  return out;
}

}  // namespace semcast
