#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "semcast/classifier.hpp"
#include "semcast/codec.hpp"
#include "semcast/errors.hpp"
#include "semcast/image.hpp"
#include "semcast/latent.hpp"
#include "semcast/rate.hpp"
#include "semcast/saliency.hpp"

namespace semcast {

/// Latent of the f_ctx-downsampled image (the context ζ).
struct ContextBundle {
  LatentGrid z_c;
  int f_ctx = 1;
  long rate_bits = 0;  // R_c
};

template <class T>
ContextBundle make_context(const BasicCodec<T>& codec, const Image& x, int f_ctx) {
  const int m = codec.config().f_model * f_ctx;
  if (f_ctx < 1 || x.height % m != 0 || x.width % m != 0) {
    throw DimensionError("image " + std::to_string(x.height) + "x" + std::to_string(x.width) +
                         " is not divisible by f_model*f_ctx=" + std::to_string(m));
  }
  ContextBundle ctx;
  ctx.f_ctx = f_ctx;
  ctx.z_c = codec.encode(downsample(x, f_ctx));
  ctx.rate_bits = static_cast<long>(ctx.z_c.cells()) * codec.bits();
  return ctx;
}

/// z_u = E(U(D(z_c))): the context re-expressed on the full-resolution grid.
/// Transmitter and receiver run this identical procedure.
template <class T>
LatentGrid reproject_context(const BasicCodec<T>& codec, const LatentGrid& z_c, int f_ctx) {
  return codec.encode(upsample(codec.decode(z_c), f_ctx));
}

/// Binary h×w mask with M(a,b) = 1 exactly for (a,b) in I_s.
struct FusionMask {
  int h = 0;
  int w = 0;
  std::vector<std::uint8_t> bits;
  std::vector<Cell> cells;

  bool at(int a, int b) const { return bits[static_cast<std::size_t>(a) * w + b] != 0; }
  std::size_t count() const { return cells.size(); }
};

inline FusionMask build_mask(const std::vector<Cell>& selected, int h, int w) {
  FusionMask m;
  m.h = h;
  m.w = w;
  m.bits.assign(static_cast<std::size_t>(h) * w, 0);
  for (const Cell& c : selected) {
    if (c.row < 0 || c.row >= h || c.col < 0 || c.col >= w) {
      throw ArgumentError("cell (" + std::to_string(c.row) + "," + std::to_string(c.col) + ") outside " +
                          std::to_string(h) + "x" + std::to_string(w) + " grid");
    }
    auto& bit = m.bits[static_cast<std::size_t>(c.row) * w + c.col];
    if (!bit) m.cells.push_back(c);
    bit = 1;
  }
  return m;
}

/// Image-latent indices for a set of cells (z_i restricted to I_s).
struct LatentPatch {
  std::vector<Cell> cells;
  std::vector<std::uint32_t> indices;

  std::size_t size() const { return cells.size(); }
};

inline LatentPatch extract_patch(const LatentGrid& z, const std::vector<Cell>& cells) {
  LatentPatch p;
  p.cells = cells;
  p.indices.reserve(cells.size());
  for (const Cell& c : cells) {
    if (!z.contains(c)) throw ArgumentError("patch cell outside latent grid");
    p.indices.push_back(z.at(c));
  }
  return p;
}

/// z_r = (1 − M) ⊙ z_u + M ⊙ z_i, applied to codeword indices.
inline LatentGrid fuse(const LatentGrid& z_u, const LatentPatch& patch, const FusionMask& mask) {
  if (mask.h != z_u.h || mask.w != z_u.w) throw DimensionError("mask and context latent differ in shape");
  constexpr std::uint32_t kMissing = UINT32_MAX;
  std::vector<std::uint32_t> supplied(z_u.cells(), kMissing);
  for (std::size_t i = 0; i < patch.cells.size(); ++i) {
    if (!z_u.contains(patch.cells[i])) throw ProtocolError("patch cell outside the latent grid");
    supplied[z_u.flat(patch.cells[i])] = patch.indices[i];
  }
  LatentGrid z_r = z_u;
  for (std::size_t i = 0; i < z_r.cells(); ++i) {
    if (!mask.bits[i]) continue;
    if (supplied[i] == kMissing) {
      const Cell c = z_r.cell(i);
      throw ProtocolError("no patch index for masked cell (" + std::to_string(c.row) + "," +
                          std::to_string(c.col) + ")");
    }
    z_r.indices[i] = supplied[i];
  }
  return z_r;
}

/// Downstream compatibility: the task's prediction on x_hat agrees with its
/// prediction on x. With top_k > 1, x's prediction only has to appear among
/// the top_k classes of x_hat.
template <class T>
bool compatibility(const BasicTaskModel<T>& task, const Image& x, const Image& x_hat, int top_k = 1) {
  const int reference = task.predict(x);
  const auto l = task.logits(x_hat);
  if (top_k <= 1) {
    return static_cast<int>(std::max_element(l.begin(), l.end()) - l.begin()) == reference;
  }
  int better = 0;
  for (const T v : l) better += v > l[reference] ? 1 : 0;
  return better < top_k;
}

enum class LsfMode { context_only, context_plus_task, full_latent };

inline const char* mode_name(LsfMode m) {
  switch (m) {
    case LsfMode::context_only: return "context_only";
    case LsfMode::context_plus_task: return "context_plus_task";
    case LsfMode::full_latent: return "full_latent";
  }
  return "?";
}

struct LsfDecision {
  LsfMode mode = LsfMode::context_only;
  int percent = 0;            // p for context_plus_task, 100 for full_latent
  long rate_bits = 0;         // payload bits R
  bool compatible = false;
  int first_compatible = -1;  // smallest passing p found by the search (-1: none / not searched)
  std::vector<Cell> selected; // I_s for context_plus_task
  LatentGrid fused;           // transmitter-side z_r
};

/// Everything the transmitter derives from x once, before any rate decision.
struct TransmitterAnalysis {
  Image x;
  LatentGrid z;       // E(x)
  ContextBundle context;
  LatentGrid z_u;     // E(U(D(z_c)))
  ImportanceGrid importance;
  std::vector<Cell> ranking;
  Geometry geometry;
};

template <class T>
TransmitterAnalysis analyze(const BasicCodec<T>& codec, const BasicTaskModel<T>& task, const Image& x,
                            int f_ctx) {
  TransmitterAnalysis a;
  a.geometry = {x.height, x.width, codec.config().f_model, f_ctx, codec.config().K};
  a.geometry.validate();
  a.x = x;
  a.z = codec.encode(x);
  a.context = make_context(codec, x, f_ctx);
  a.z_u = reproject_context(codec, a.context.z_c, f_ctx);
  a.importance = pool_to_latent(gradcam(task, x), codec.config().f_model);
  a.ranking = a.importance.ranking();
  return a;
}

/// Payload bits of context + top-p% patch.
inline long context_plus_task_bits(const Geometry& g, int percent) {
  const long n = static_cast<long>(selection_count(percent, static_cast<std::size_t>(g.image_cells())));
  return g.context_bits() + patch_bits(g.image_cells(), n, g.bits());
}

/// Builds z_r for the top-p% cells on the transmitter side.
inline LatentGrid fused_for_percent(const TransmitterAnalysis& a, int percent, std::vector<Cell>* cells = nullptr) {
  const auto n = selection_count(percent, a.z.cells());
  std::vector<Cell> sel(a.ranking.begin(), a.ranking.begin() + static_cast<std::ptrdiff_t>(n));
  const auto mask = build_mask(sel, a.z.h, a.z.w);
  auto z_r = fuse(a.z_u, extract_patch(a.z, sel), mask);
  if (cells) *cells = std::move(sel);
  return z_r;
}

/// A fixed-percentage decision with no feedback (the backbone system).
/// p = 0 means context only; the rate is not capped at R_i.
inline LsfDecision fixed_decision(const TransmitterAnalysis& a, int percent) {
  LsfDecision d;
  d.percent = percent;
  if (percent == 0) {
    d.mode = LsfMode::context_only;
    d.rate_bits = a.geometry.context_bits();
    d.fused = a.z_u;
    return d;
  }
  d.mode = LsfMode::context_plus_task;
  d.fused = fused_for_percent(a, percent, &d.selected);
  d.rate_bits = context_plus_task_bits(a.geometry, percent);
  return d;
}

inline LsfDecision full_latent_decision(const TransmitterAnalysis& a) {
  LsfDecision d;
  d.mode = LsfMode::full_latent;
  d.percent = 100;
  d.rate_bits = a.geometry.image_bits();
  d.fused = a.z;
  return d;
}

struct LsfOptions {
  std::vector<int> search_set{10, 20, 30, 50, 70, 90, 100};
  int top_k = 1;
};

/// Local semantic feedback: the smallest p in the search set whose simulated
/// receiver reconstruction keeps the task prediction; falls back to the full
/// latent when that costs less, and to context only when nothing passes.
template <class T>
LsfDecision lsf_select(const BasicCodec<T>& codec, const BasicTaskModel<T>& task, const TransmitterAnalysis& a,
                       const LsfOptions& opt = {}) {
  auto set = opt.search_set;
  std::sort(set.begin(), set.end());
  set.erase(std::unique(set.begin(), set.end()), set.end());
  for (const int p : set) {
    LsfDecision d = fixed_decision(a, p);
    if (!compatibility(task, a.x, codec.decode(d.fused), opt.top_k)) continue;
    d.compatible = true;
    d.first_compatible = p;
    if (d.rate_bits > a.geometry.image_bits()) {
      LsfDecision full = full_latent_decision(a);
      full.compatible = true;
      full.first_compatible = p;
      return full;
    }
    return d;
  }
  LsfDecision d = fixed_decision(a, 0);
  d.compatible = false;
  return d;
}

template <class T>
LsfDecision lsf_select(const BasicCodec<T>& codec, const BasicTaskModel<T>& task, const Image& x, int f_ctx,
                       const LsfOptions& opt = {}) {
  return lsf_select(codec, task, analyze(codec, task, x, f_ctx), opt);
}

/// Rate summary in bits and KB (payload only).
struct RateReport {
  long context_bits = 0;  // R_c
  long image_bits = 0;    // R_i
  long rate_bits = 0;     // R
  double context_kb() const { return bits_to_kb(context_bits); }
  double image_kb() const { return bits_to_kb(image_bits); }
  double rate_kb() const { return bits_to_kb(rate_bits); }
};

inline RateReport rate_report(const LsfDecision& d, const Geometry& g) {
  g.validate();
  return {g.context_bits(), g.image_bits(), d.rate_bits};
}

}  // namespace semcast
