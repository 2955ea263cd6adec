#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "semcast/errors.hpp"

namespace semcast {

inline constexpr const char* kCheckpointMagic = "SEMCAST-CKPT-1";

/// Versioned model archive.
///
/// Layout: the magic line, `kind=<kind>`, any number of `key=value` metadata
/// lines, then `arrays=<n>` followed by n binary records
/// (u32 name length, name bytes, u64 element count, little-endian float32 data).
struct Checkpoint {
  std::string kind;
  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, std::vector<float>>> arrays;

  const std::vector<float>& array(const std::string& name) const {
    for (const auto& [n, a] : arrays) {
      if (n == name) return a;
    }
    throw FormatError("checkpoint has no array '" + name + "'");
  }

  const std::string& meta_value(const std::string& key) const {
    const auto it = meta.find(key);
    if (it == meta.end()) throw FormatError("checkpoint is missing metadata '" + key + "'");
    return it->second;
  }
};

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes little-endian");

inline void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out << kCheckpointMagic << '\n' << "kind=" << ckpt.kind << '\n';
  for (const auto& [k, v] : ckpt.meta) {
    if (k.find('=') != std::string::npos || v.find('\n') != std::string::npos) {
      throw FormatError("checkpoint metadata must be single-line key=value");
    }
    out << k << '=' << v << '\n';
  }
  out << "arrays=" << ckpt.arrays.size() << '\n';
  for (const auto& [name, data] : ckpt.arrays) {
    const auto len = static_cast<std::uint32_t>(name.size());
    const auto count = static_cast<std::uint64_t>(data.size());
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(name.data(), len);
    out.write(reinterpret_cast<const char*>(&count), sizeof count);
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(float)));
  }
  if (!out) throw IoError("short write on checkpoint " + path.string());
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kCheckpointMagic) {
    throw FormatError(path.string() + " is not a " + kCheckpointMagic + " archive");
  }
  Checkpoint ckpt;
  std::size_t n_arrays = 0;
  bool have_count = false;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("bad checkpoint header line: " + line);
    const auto key = line.substr(0, eq);
    const auto value = line.substr(eq + 1);
    if (key == "kind") {
      ckpt.kind = value;
    } else if (key == "arrays") {
      n_arrays = std::stoul(value);
      have_count = true;
      break;
    } else {
      ckpt.meta[key] = value;
    }
  }
  if (!have_count) throw FormatError("checkpoint " + path.string() + " is truncated");
  for (std::size_t i = 0; i < n_arrays; ++i) {
    std::uint32_t len = 0;
    std::uint64_t count = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof len);
    std::string name(len, '\0');
    in.read(name.data(), len);
    in.read(reinterpret_cast<char*>(&count), sizeof count);
    if (!in || count > (1ull << 32)) throw FormatError("corrupt array record in " + path.string());
    std::vector<float> data(count);
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(count * sizeof(float)));
    if (!in) throw FormatError("truncated array '" + name + "' in " + path.string());
    ckpt.arrays.emplace_back(std::move(name), std::move(data));
  }
  return ckpt;
}

}  // namespace semcast
