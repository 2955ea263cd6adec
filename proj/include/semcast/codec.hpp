#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "semcast/checkpoint.hpp"
#include "semcast/errors.hpp"
#include "semcast/image.hpp"
#include "semcast/latent.hpp"
#include "semcast/nn/adam.hpp"
#include "semcast/nn/layers.hpp"

namespace semcast {

struct CodecConfig {
  int K = 512;         // codebook size
  int d_c = 64;        // embedding dimension
  int f_model = 4;     // encoder spatial stride, power of two
  int channels = 3;
  int width = 16;      // channels of the full-resolution conv stage
  double gamma = 0.25; // commitment weight

  void validate() const {
    if (K < 2) throw ArgumentError("codebook size K must be >= 2");
    if (d_c < 1) throw ArgumentError("embedding dimension d_c must be >= 1");
    if (f_model < 1 || (f_model & (f_model - 1)) != 0) {
      throw ArgumentError("f_model must be a power of two, got " + std::to_string(f_model));
    }
    if (channels < 1 || width < 1) throw ArgumentError("channels and width must be positive");
    if (!(gamma >= 0.0)) throw ArgumentError("gamma must be non-negative");
  }
};

/// K codewords of dimension d, row-major.
template <class T>
class Codebook {
 public:
  Codebook() = default;
  Codebook(int K, int d) : K_(K), d_(d) { vectors.resize(static_cast<std::size_t>(K) * d); }

  int size() const { return K_; }
  int dim() const { return d_; }
  std::span<const T> vector(int k) const {
    return {vectors.value.data() + static_cast<std::size_t>(k) * d_, static_cast<std::size_t>(d_)};
  }
  T* mutable_vector(int k) { return vectors.value.data() + static_cast<std::size_t>(k) * d_; }

  nn::Param<T> vectors;

 private:
  int K_ = 0;
  int d_ = 0;
};

/// Nearest codeword by squared Euclidean distance; the lowest index wins ties.
template <class T>
int quantize_cell(const Codebook<T>& codebook, std::span<const T> e) {
  if (static_cast<int>(e.size()) != codebook.dim()) {
    throw DimensionError("embedding has dimension " + std::to_string(e.size()) + ", codebook uses " +
                         std::to_string(codebook.dim()));
  }
  const int d = codebook.dim();
  int best = 0;
  T best_dist = std::numeric_limits<T>::infinity();
  const T* c = codebook.vectors.value.data();
  for (int k = 0; k < codebook.size(); ++k, c += d) {
    T dist = T(0);
    for (int j = 0; j < d; ++j) {
      const T diff = e[j] - c[j];
      dist += diff * diff;
    }
    if (dist < best_dist) {
      best_dist = dist;
      best = k;
    }
  }
  return best;
}

/// The terms of the VQ training objective for one image.
struct VqLoss {
  double total = 0.0;
  double recon = 0.0;     // mean squared pixel error
  double codebook = 0.0;  // mean over cells of ||sg[e] - c||^2
  double commit = 0.0;    // mean over cells of ||e - sg[c]||^2 (unweighted)
};

template <class T>
nn::Tensor<T> to_tensor(const Image& x) {
  nn::Tensor<T> t(x.channels, x.height, x.width);
  std::transform(x.pixels.begin(), x.pixels.end(), t.data.begin(),
                 [](float v) { return static_cast<T>(v); });
  return t;
}

template <class T>
Image to_image(const nn::Tensor<T>& t) {
  Image x(t.c, t.h, t.w);
  std::transform(t.data.begin(), t.data.end(), x.pixels.begin(), [](T v) {
    return std::clamp(static_cast<float>(v), -1.0f, 1.0f);
  });
  return x;
}

/// Convolutional VQ autoencoder shared by the context and image paths.
///
/// The encoder is a 3×3 stem followed by log2(f_model) stride-2 4×4 convs and
/// a 1×1 projection to d_c; the decoder mirrors it with transposed convs. Both
/// are fully convolutional, so any grid size decodes.
template <class T>
class BasicCodec {
 public:
  explicit BasicCodec(CodecConfig cfg, std::uint64_t seed = 1) : cfg_(cfg) {
    cfg_.validate();
    build();
    std::mt19937_64 rng(seed);
    encoder.init(rng);
    decoder.init(rng);
    std::uniform_real_distribution<double> u(-1.0 / cfg_.K, 1.0 / cfg_.K);
    for (auto& v : codebook.vectors.value) v = static_cast<T>(u(rng));
  }

  const CodecConfig& config() const { return cfg_; }
  int bits() const { return bits_per_index(cfg_.K); }

  void check_input(const Image& x) const {
    if (x.channels != cfg_.channels) {
      throw DimensionError("codec expects " + std::to_string(cfg_.channels) + " channels");
    }
    if (x.height % cfg_.f_model != 0 || x.width % cfg_.f_model != 0) {
      throw DimensionError("image " + std::to_string(x.height) + "x" + std::to_string(x.width) +
                           " is not divisible by f_model=" + std::to_string(cfg_.f_model));
    }
  }

  /// Pre-quantization embedding E(x), shape d_c × H/f × W/f.
  nn::Tensor<T> embed(const Image& x) const {
    check_input(x);
    return encoder.forward(to_tensor<T>(x));
  }

  /// Nearest codeword per cell. Same arithmetic as quantize_cell, laid out
  /// codeword-minor so the distance loop vectorizes across codewords.
  LatentGrid quantize(const nn::Tensor<T>& e, int source_h, int source_w) const {
    if (e.c != cfg_.d_c) throw DimensionError("embedding has " + std::to_string(e.c) + " channels");
    LatentGrid z(e.h, e.w, source_h, source_w);
    const int K = cfg_.K, d = cfg_.d_c;
    std::vector<T> ct(static_cast<std::size_t>(K) * d);
    for (int k = 0; k < K; ++k) {
      for (int j = 0; j < d; ++j) ct[static_cast<std::size_t>(j) * K + k] = codebook.vectors.value[k * d + j];
    }
    std::vector<T> dist(K);
    const std::size_t plane = e.plane();
    for (std::size_t p = 0; p < plane; ++p) {
      std::fill(dist.begin(), dist.end(), T(0));
      for (int j = 0; j < d; ++j) {
        const T v = e.data[j * plane + p];
        const T* row = &ct[static_cast<std::size_t>(j) * K];
        for (int k = 0; k < K; ++k) {
          const T diff = v - row[k];
          dist[k] += diff * diff;
        }
      }
      int best = 0;
      for (int k = 1; k < K; ++k) {
        if (dist[k] < dist[best]) best = k;
      }
      z.indices[p] = static_cast<std::uint32_t>(best);
    }
    return z;
  }

  /// Q(E(x)).
  LatentGrid encode(const Image& x) const { return quantize(embed(x), x.height, x.width); }

  /// Codeword lookup, d_c × h × w.
  nn::Tensor<T> lookup(const LatentGrid& z) const {
    if (z.h <= 0 || z.w <= 0 || z.cells() != static_cast<std::size_t>(z.h) * z.w) {
      throw CorruptLatentError("latent grid has inconsistent shape");
    }
    nn::Tensor<T> q(cfg_.d_c, z.h, z.w);
    const std::size_t plane = q.plane();
    for (std::size_t p = 0; p < plane; ++p) {
      const auto k = z.indices[p];
      if (k >= static_cast<std::uint32_t>(cfg_.K)) {
        throw CorruptLatentError("latent index " + std::to_string(k) + " at cell " + std::to_string(p) +
                                 " exceeds codebook size " + std::to_string(cfg_.K));
      }
      const auto c = codebook.vector(static_cast<int>(k));
      for (int j = 0; j < cfg_.d_c; ++j) q.data[j * plane + p] = c[j];
    }
    return q;
  }

  /// D(z), clamped to [-1, 1].
  Image decode(const LatentGrid& z) const { return to_image(decoder.forward(lookup(z))); }

  /// Objective terms without gradients.
  VqLoss loss(const Image& x) const {
    const auto e = embed(x);
    const auto z = quantize(e, x.height, x.width);
    const auto q = lookup(z);
    const auto xr = decoder.forward(q);
    return terms(to_tensor<T>(x), xr, e, q);
  }

  /// Forward + backward for one image; parameter gradients are accumulated
  /// with weight `scale` (1/batch for mean-over-batch). Reconstruction
  /// gradients reach the encoder through the straight-through estimator.
  VqLoss accumulate_gradients(const Image& x, T scale) {
    check_input(x);
    const auto xt = to_tensor<T>(x);
    std::vector<nn::Tensor<T>> enc_acts, dec_acts;
    const auto e = encoder.forward_train(xt, enc_acts);
    const auto z = quantize(e, x.height, x.width);
    const auto q = lookup(z);
    const auto xr = decoder.forward_train(q, dec_acts);
    const VqLoss l = terms(xt, xr, e, q);
    if (!std::isfinite(l.total)) {
      std::ostringstream msg;
      msg << "VQ loss diverged: recon=" << l.recon << " codebook=" << l.codebook
          << " commit=" << l.commit;
      throw DivergenceError(msg.str());
    }

    nn::Tensor<T> g_xr(xr.c, xr.h, xr.w);
    const T rscale = scale * T(2) / static_cast<T>(xr.size());
    for (std::size_t i = 0; i < xr.size(); ++i) g_xr.data[i] = rscale * (xr.data[i] - xt.data[i]);
    nn::Tensor<T> g_e = decoder.backward(dec_acts, std::move(g_xr));

    const std::size_t plane = e.plane();
    const T cscale = scale * T(2) / static_cast<T>(plane);
    const T gamma = static_cast<T>(cfg_.gamma);
    for (std::size_t p = 0; p < plane; ++p) {
      T* cg = codebook.vectors.grad.data() + static_cast<std::size_t>(z.indices[p]) * cfg_.d_c;
      for (int j = 0; j < cfg_.d_c; ++j) {
        const std::size_t i = j * plane + p;
        const T diff = e.data[i] - q.data[i];
        g_e.data[i] += gamma * cscale * diff;
        cg[j] -= cscale * diff;
      }
    }
    encoder.backward(enc_acts, std::move(g_e));
    return l;
  }

  std::vector<std::pair<std::string, nn::Param<T>*>> named_params() {
    auto out = encoder.named_params("encoder");
    auto dec = decoder.named_params("decoder");
    out.insert(out.end(), dec.begin(), dec.end());
    out.emplace_back("codebook", &codebook.vectors);
    return out;
  }

  std::vector<nn::Param<T>*> params() {
    std::vector<nn::Param<T>*> out;
    for (auto& [name, p] : named_params()) out.push_back(p);
    return out;
  }

  void zero_grad() {
    for (auto* p : params()) p->zero_grad();
  }

  Checkpoint to_checkpoint() const {
    Checkpoint ckpt;
    ckpt.kind = "codec";
    ckpt.meta["K"] = std::to_string(cfg_.K);
    ckpt.meta["d_c"] = std::to_string(cfg_.d_c);
    ckpt.meta["f_model"] = std::to_string(cfg_.f_model);
    ckpt.meta["channels"] = std::to_string(cfg_.channels);
    ckpt.meta["width"] = std::to_string(cfg_.width);
    std::ostringstream g;
    g.precision(17);
    g << cfg_.gamma;
    ckpt.meta["gamma"] = g.str();
    ckpt.meta["normalization"] = "-1,1";
    auto& self = const_cast<BasicCodec&>(*this);
    for (auto& [name, p] : self.named_params()) {
      ckpt.arrays.emplace_back(name, std::vector<float>(p->value.begin(), p->value.end()));
    }
    return ckpt;
  }

  static BasicCodec from_checkpoint(const Checkpoint& ckpt) {
    if (ckpt.kind != "codec") throw FormatError("checkpoint kind is '" + ckpt.kind + "', expected codec");
    if (ckpt.meta.count("normalization") && ckpt.meta.at("normalization") != "-1,1") {
      throw FormatError("unsupported pixel normalization " + ckpt.meta.at("normalization"));
    }
    CodecConfig cfg;
    cfg.K = std::stoi(ckpt.meta_value("K"));
    cfg.d_c = std::stoi(ckpt.meta_value("d_c"));
    cfg.f_model = std::stoi(ckpt.meta_value("f_model"));
    cfg.channels = std::stoi(ckpt.meta_value("channels"));
    cfg.width = std::stoi(ckpt.meta_value("width"));
    cfg.gamma = std::stod(ckpt.meta_value("gamma"));
    BasicCodec model(cfg);
    for (auto& [name, p] : model.named_params()) {
      const auto& a = ckpt.array(name);
      if (a.size() != p->size()) throw FormatError("array '" + name + "' has the wrong size");
      std::transform(a.begin(), a.end(), p->value.begin(), [](float v) { return static_cast<T>(v); });
    }
    return model;
  }

  Codebook<T> codebook;
  nn::Sequential<T> encoder;
  nn::Sequential<T> decoder;

 private:
  void build() {
    int ch = cfg_.width;
    encoder.add(nn::Conv2d<T>(cfg_.channels, ch, 3, 1, 1));
    encoder.add(nn::Relu{});
    for (int f = cfg_.f_model; f > 1; f /= 2) {
      encoder.add(nn::Conv2d<T>(ch, ch * 2, 4, 2, 1));
      encoder.add(nn::Relu{});
      ch *= 2;
    }
    encoder.add(nn::Conv2d<T>(ch, cfg_.d_c, 1, 1, 0));

    decoder.add(nn::Conv2d<T>(cfg_.d_c, ch, 3, 1, 1));
    decoder.add(nn::Relu{});
    for (int f = cfg_.f_model; f > 1; f /= 2) {
      decoder.add(nn::ConvTranspose2d<T>(ch, ch / 2, 4, 2, 1));
      decoder.add(nn::Relu{});
      ch /= 2;
    }
    decoder.add(nn::Conv2d<T>(ch, cfg_.channels, 3, 1, 1));
    codebook = Codebook<T>(cfg_.K, cfg_.d_c);
  }

  VqLoss terms(const nn::Tensor<T>& x, const nn::Tensor<T>& xr, const nn::Tensor<T>& e,
               const nn::Tensor<T>& q) const {
    VqLoss l;
    double se = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = static_cast<double>(xr.data[i]) - static_cast<double>(x.data[i]);
      se += d * d;
    }
    l.recon = se / static_cast<double>(x.size());
    double ce = 0.0;
    for (std::size_t i = 0; i < e.size(); ++i) {
      const double d = static_cast<double>(e.data[i]) - static_cast<double>(q.data[i]);
      ce += d * d;
    }
    l.codebook = ce / static_cast<double>(e.plane());
    l.commit = l.codebook;
    l.total = l.recon + l.codebook + cfg_.gamma * l.commit;
    return l;
  }

  CodecConfig cfg_;
};

using Codec = BasicCodec<float>;

/// Fraction of codewords used at least once when encoding `images`.
template <class T>
double codebook_usage(const BasicCodec<T>& model, std::span<const Image> images,
                      std::vector<long>* histogram = nullptr) {
  std::vector<long> counts(model.config().K, 0);
  for (const auto& x : images) {
    for (auto k : model.encode(x).indices) ++counts[k];
  }
  const auto used = std::count_if(counts.begin(), counts.end(), [](long c) { return c > 0; });
  if (histogram) *histogram = std::move(counts);
  return static_cast<double>(used) / model.config().K;
}

struct CodecTrainConfig {
  int epochs = 20;
  int batch = 16;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  int context_factor = 4;  // also train on x downsampled by this factor (0 disables)
};

struct CodecTrainResult {
  std::vector<double> epoch_loss;  // mean total loss per epoch
  double val_psnr = 0.0;
  double val_usage = 0.0;
  std::vector<std::string> warnings;
};

/// Mean-squared-error PSNR for images in [-1, 1] (peak-to-peak 2).
inline double psnr(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw DimensionError("psnr needs images of equal shape");
  double se = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a.pixels[i]) - b.pixels[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(4.0 / mse);
}

/// Minibatch Adam on the VQ objective. Deterministic for a fixed seed.
template <class T>
CodecTrainResult train_codec(BasicCodec<T>& model, std::span<const Image> train, std::span<const Image> val,
                             const CodecTrainConfig& tc,
                             const std::function<void(const std::string&)>& log = {}) {
  if (train.empty()) throw ArgumentError("codec training split is empty");
  CodecTrainResult result;
  auto params = model.params();
  nn::Adam<T> opt(params, tc.lr);
  std::mt19937_64 rng(tc.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  std::vector<Image> context_inputs;
  if (tc.context_factor > 1) {
    const int need = tc.context_factor * model.config().f_model;
    context_inputs.resize(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) {
      const auto& x = train[i];
      if (x.height % need == 0 && x.width % need == 0) context_inputs[i] = downsample(x, tc.context_factor);
    }
  }

  const long cells_per_epoch = [&] {
    long n = 0;
    for (const auto& x : train) n += static_cast<long>(x.height / model.config().f_model) * (x.width / model.config().f_model);
    return n;
  }();

  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    // cosine decay to 10% of the base rate
    const double progress = tc.epochs > 1 ? static_cast<double>(epoch) / (tc.epochs - 1) : 0.0;
    opt.set_lr(tc.lr * (0.1 + 0.9 * 0.5 * (1.0 + std::cos(M_PI * progress))));
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    long n = 0;
    std::vector<long> usage(model.config().K, 0);
    for (std::size_t start = 0; start < order.size(); start += tc.batch) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(tc.batch));
      opt.zero_grad();
      const T scale = T(1) / static_cast<T>(end - start);
      for (std::size_t i = start; i < end; ++i) {
        const auto idx = order[i];
        const VqLoss l = model.accumulate_gradients(train[idx], scale);
        sum += l.total;
        ++n;
        if (!context_inputs.empty() && context_inputs[idx].size() > 0) {
          model.accumulate_gradients(context_inputs[idx], scale / T(4));
        }
      }
      opt.step();
    }
    result.epoch_loss.push_back(sum / static_cast<double>(n));
    if (log) {
      std::ostringstream msg;
      msg << "codec epoch " << epoch + 1 << "/" << tc.epochs << " loss=" << result.epoch_loss.back()
          << " lr=" << opt.lr();
      log(msg.str());
    }
    if (epoch + 1 < tc.epochs) continue;
    for (const auto& x : train) {
      for (auto k : model.encode(x).indices) ++usage[k];
    }
    const long floor_count = std::max<long>(1, cells_per_epoch / 10000);  // 0.01% of cells
    const auto dead = std::count_if(usage.begin(), usage.end(), [&](long c) { return c < floor_count; });
    if (dead > 0) {
      std::ostringstream msg;
      msg << "codebook usage warning: " << dead << " of " << model.config().K
          << " codewords used by <0.01% of cells; usage histogram:";
      for (std::size_t k = 0; k < usage.size(); ++k) {
        if (usage[k] > 0) msg << ' ' << k << ':' << usage[k];
      }
      result.warnings.push_back(msg.str());
      if (log) log(result.warnings.back());
    }
  }

  if (!val.empty()) {
    double total = 0.0;
    for (const auto& x : val) total += std::min(psnr(x, model.decode(model.encode(x))), 100.0);
    result.val_psnr = total / static_cast<double>(val.size());
    result.val_usage = codebook_usage(model, val);
  }
  return result;
}

}  // namespace semcast
