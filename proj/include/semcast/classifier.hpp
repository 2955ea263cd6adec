#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "semcast/checkpoint.hpp"
#include "semcast/codec.hpp"
#include "semcast/errors.hpp"
#include "semcast/image.hpp"
#include "semcast/nn/adam.hpp"
#include "semcast/nn/layers.hpp"

namespace semcast {

struct ClassifierConfig {
  int classes = 10;
  int channels = 3;
  int width = 16;
  int input_h = 64;
  int input_w = 64;
  int final_kernel = 3;  // kernel of the GradCAM layer
};

/// Final conv activations A^k and dy^c/dA^k for one image.
template <class T>
struct CamInputs {
  nn::Tensor<T> activations;
  nn::Tensor<T> gradients;
  int target_class = 0;
};

/// Downstream task model: four conv blocks (the last one is the GradCAM
/// layer), global average pooling and a linear head.
template <class T>
class BasicTaskModel {
 public:
  explicit BasicTaskModel(ClassifierConfig cfg, std::uint64_t seed = 1)
      : cfg_(cfg), head_(cfg.width * 4, cfg.classes) {
    if (cfg_.classes < 2) throw ArgumentError("a classifier needs at least two classes");
    const int w = cfg_.width;
    features_.add(nn::Conv2d<T>(cfg_.channels, w, 3, 1, 1));
    features_.add(nn::Relu{});
    features_.add(nn::Conv2d<T>(w, 2 * w, 3, 2, 1));
    features_.add(nn::Relu{});
    features_.add(nn::Conv2d<T>(2 * w, 4 * w, 3, 2, 1));
    features_.add(nn::Relu{});
    if (cfg_.final_kernel < 1 || cfg_.final_kernel % 2 == 0) throw ArgumentError("final_kernel must be odd");
    features_.add(nn::Conv2d<T>(4 * w, 4 * w, cfg_.final_kernel, 1, cfg_.final_kernel / 2));
    features_.add(nn::Relu{});
    std::mt19937_64 rng(seed);
    features_.init(rng);
    head_.init(rng);
  }

  const ClassifierConfig& config() const { return cfg_; }
  int class_count() const { return cfg_.classes; }

  void check_input(const Image& x) const {
    if (x.channels != cfg_.channels || x.height != cfg_.input_h || x.width != cfg_.input_w) {
      throw DimensionError("task model expects " + std::to_string(cfg_.channels) + "x" +
                           std::to_string(cfg_.input_h) + "x" + std::to_string(cfg_.input_w) + " input, got " +
                           std::to_string(x.channels) + "x" + std::to_string(x.height) + "x" +
                           std::to_string(x.width));
    }
  }

  std::vector<T> logits(const Image& x) const {
    check_input(x);
    return head_.forward(pool(features_.forward(to_tensor<T>(x))));
  }

  std::vector<double> probabilities(const Image& x) const { return softmax(logits(x)); }

  int predict(const Image& x) const {
    const auto l = logits(x);
    return static_cast<int>(std::max_element(l.begin(), l.end()) - l.begin());
  }

  /// Activations of the final conv layer and the gradient of the target
  /// class score with respect to them. target_class < 0 selects the argmax.
  CamInputs<T> cam_inputs(const Image& x, int target_class = -1) const {
    check_input(x);
    if (target_class >= cfg_.classes) {
      throw ArgumentError("target class " + std::to_string(target_class) + " outside [0, " +
                          std::to_string(cfg_.classes) + ")");
    }
    CamInputs<T> out;
    out.activations = features_.forward(to_tensor<T>(x));
    const auto l = head_.forward(pool(out.activations));
    out.target_class = target_class >= 0
                           ? target_class
                           : static_cast<int>(std::max_element(l.begin(), l.end()) - l.begin());
    // y^c = sum_k W[c,k] * mean(A^k) + b_c
    out.gradients = nn::Tensor<T>(out.activations.c, out.activations.h, out.activations.w);
    const std::size_t plane = out.activations.plane();
    const T* wrow = &head_.weight.value[static_cast<std::size_t>(out.target_class) * head_.in_features()];
    for (int k = 0; k < out.activations.c; ++k) {
      const T g = wrow[k] / static_cast<T>(plane);
      std::fill_n(&out.gradients.data[k * plane], plane, g);
    }
    return out;
  }

  /// Cross-entropy forward/backward for one labelled image. Returns the loss.
  double accumulate_gradients(const Image& x, int label, T scale) {
    check_input(x);
    std::vector<nn::Tensor<T>> acts;
    const auto a = features_.forward_train(to_tensor<T>(x), acts);
    const auto pooled = pool(a);
    const auto l = head_.forward(pooled);
    const auto p = softmax(l);
    const double loss = -std::log(std::max(p[label], 1e-30));
    if (!std::isfinite(loss)) throw DivergenceError("classifier loss diverged");
    std::vector<T> gl(l.size());
    for (std::size_t i = 0; i < l.size(); ++i) {
      gl[i] = scale * static_cast<T>(p[i] - (static_cast<int>(i) == label ? 1.0 : 0.0));
    }
    const auto gpool = head_.backward(pooled, gl);
    nn::Tensor<T> ga(a.c, a.h, a.w);
    const std::size_t plane = a.plane();
    for (int k = 0; k < a.c; ++k) std::fill_n(&ga.data[k * plane], plane, gpool[k] / static_cast<T>(plane));
    features_.backward(acts, std::move(ga));
    return loss;
  }

  std::vector<std::pair<std::string, nn::Param<T>*>> named_params() {
    auto out = features_.named_params("features");
    out.emplace_back("head.weight", &head_.weight);
    out.emplace_back("head.bias", &head_.bias);
    return out;
  }

  std::vector<nn::Param<T>*> params() {
    std::vector<nn::Param<T>*> out;
    for (auto& [n, p] : named_params()) out.push_back(p);
    return out;
  }

  Checkpoint to_checkpoint() const {
    Checkpoint ckpt;
    ckpt.kind = "classifier";
    ckpt.meta["classes"] = std::to_string(cfg_.classes);
    ckpt.meta["channels"] = std::to_string(cfg_.channels);
    ckpt.meta["width"] = std::to_string(cfg_.width);
    ckpt.meta["input_h"] = std::to_string(cfg_.input_h);
    ckpt.meta["input_w"] = std::to_string(cfg_.input_w);
    ckpt.meta["final_kernel"] = std::to_string(cfg_.final_kernel);
    ckpt.meta["normalization"] = "-1,1";
    for (auto& [name, p] : const_cast<BasicTaskModel&>(*this).named_params()) {
      ckpt.arrays.emplace_back(name, std::vector<float>(p->value.begin(), p->value.end()));
    }
    return ckpt;
  }

  static BasicTaskModel from_checkpoint(const Checkpoint& ckpt) {
    if (ckpt.kind != "classifier") {
      throw FormatError("checkpoint kind is '" + ckpt.kind + "', expected classifier");
    }
    ClassifierConfig cfg;
    cfg.classes = std::stoi(ckpt.meta_value("classes"));
    cfg.channels = std::stoi(ckpt.meta_value("channels"));
    cfg.width = std::stoi(ckpt.meta_value("width"));
    cfg.input_h = std::stoi(ckpt.meta_value("input_h"));
    cfg.input_w = std::stoi(ckpt.meta_value("input_w"));
    cfg.final_kernel = std::stoi(ckpt.meta_value("final_kernel"));
    BasicTaskModel model(cfg);
    for (auto& [name, p] : model.named_params()) {
      const auto& a = ckpt.array(name);
      if (a.size() != p->size()) throw FormatError("array '" + name + "' has the wrong size");
      std::transform(a.begin(), a.end(), p->value.begin(), [](float v) { return static_cast<T>(v); });
    }
    return model;
  }

  static std::vector<double> softmax(const std::vector<T>& l) {
    const double m = static_cast<double>(*std::max_element(l.begin(), l.end()));
    std::vector<double> p(l.size());
    double s = 0.0;
    for (std::size_t i = 0; i < l.size(); ++i) {
      p[i] = std::exp(static_cast<double>(l[i]) - m);
      s += p[i];
    }
    for (auto& v : p) v /= s;
    return p;
  }

 private:
  static std::vector<T> pool(const nn::Tensor<T>& a) {
    std::vector<T> out(a.c);
    const std::size_t plane = a.plane();
    for (int k = 0; k < a.c; ++k) {
      T s = T(0);
      for (std::size_t i = 0; i < plane; ++i) s += a.data[k * plane + i];
      out[k] = s / static_cast<T>(plane);
    }
    return out;
  }

  ClassifierConfig cfg_;
  nn::Sequential<T> features_;
  nn::Linear<T> head_;
};

using TaskModel = BasicTaskModel<float>;

struct LabeledImage {
  Image image;
  int label = 0;
};

struct ClassifierTrainConfig {
  int epochs = 12;
  int batch = 32;
  double lr = 2e-3;
  std::uint64_t seed = 1;
  bool flip_augment = true;
};

struct ClassifierTrainResult {
  std::vector<double> epoch_loss;
  double val_accuracy = 0.0;
};

template <class T>
double accuracy(const BasicTaskModel<T>& model, std::span<const LabeledImage> data) {
  if (data.empty()) return 0.0;
  long correct = 0;
  for (const auto& item : data) correct += model.predict(item.image) == item.label ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

inline Image flip_horizontal(const Image& x) {
  Image out = x;
  for (int c = 0; c < x.channels; ++c) {
    for (int y = 0; y < x.height; ++y) {
      for (int i = 0; i < x.width; ++i) out.at(c, y, i) = x.at(c, y, x.width - 1 - i);
    }
  }
  return out;
}

template <class T>
ClassifierTrainResult train_classifier(BasicTaskModel<T>& model, std::span<const LabeledImage> train,
                                       std::span<const LabeledImage> val, const ClassifierTrainConfig& tc,
                                       const std::function<void(const std::string&)>& log = {}) {
  if (train.empty() && tc.epochs > 0) throw ArgumentError("classifier training split is empty");
  for (const auto& item : train) {
    if (item.label < 0 || item.label >= model.class_count()) {
      throw ArgumentError("label " + std::to_string(item.label) + " outside the model's classes");
    }
  }
  ClassifierTrainResult result;
  nn::Adam<T> opt(model.params(), tc.lr);
  std::mt19937_64 rng(tc.seed);
  std::bernoulli_distribution coin(0.5);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    const double progress = tc.epochs > 1 ? static_cast<double>(epoch) / (tc.epochs - 1) : 0.0;
    opt.set_lr(tc.lr * (0.1 + 0.9 * 0.5 * (1.0 + std::cos(M_PI * progress))));
    std::shuffle(order.begin(), order.end(), rng);
    double sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += tc.batch) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(tc.batch));
      opt.zero_grad();
      const T scale = T(1) / static_cast<T>(end - start);
      for (std::size_t i = start; i < end; ++i) {
        const auto& item = train[order[i]];
        if (tc.flip_augment && coin(rng)) {
          sum += model.accumulate_gradients(flip_horizontal(item.image), item.label, scale);
        } else {
          sum += model.accumulate_gradients(item.image, item.label, scale);
        }
      }
      opt.step();
    }
    result.epoch_loss.push_back(sum / static_cast<double>(train.size()));
    if (log) {
      std::ostringstream msg;
      msg << "classifier epoch " << epoch + 1 << "/" << tc.epochs << " loss=" << result.epoch_loss.back();
      log(msg.str());
    }
  }
  result.val_accuracy = accuracy(model, val);
  return result;
}

}  // namespace semcast
