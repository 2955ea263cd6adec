#pragma once

#include <cmath>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "semcast/nn/tensor.hpp"

namespace semcast::nn {

namespace detail {
template <class T>
void init_uniform(std::vector<T>& v, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& x : v) x = static_cast<T>(dist(rng));
}
}  // namespace detail

/// 2-D convolution, square kernel, zero padding.
template <class T>
class Conv2d {
 public:
  Conv2d(int in_ch, int out_ch, int kernel, int stride = 1, int pad = 0)
      : in_(in_ch), out_(out_ch), k_(kernel), stride_(stride), pad_(pad) {
    weight.resize(static_cast<std::size_t>(out_) * in_ * k_ * k_);
    bias.resize(out_);
  }

  void init(std::mt19937_64& rng, double gain = std::sqrt(2.0)) {
    const double fan_in = static_cast<double>(in_) * k_ * k_;
    detail::init_uniform(weight.value, gain * std::sqrt(3.0 / fan_in), rng);
    std::fill(bias.value.begin(), bias.value.end(), T(0));
  }

  int out_h(int h) const { return (h + 2 * pad_ - k_) / stride_ + 1; }
  int out_w(int w) const { return (w + 2 * pad_ - k_) / stride_ + 1; }

  Tensor<T> forward(const Tensor<T>& x) const {
    check_input(x);
    const int oh = out_h(x.h), ow = out_w(x.w);
    Tensor<T> y(out_, oh, ow);
    const Eigen::Index kk = static_cast<Eigen::Index>(in_) * k_ * k_;
    const Eigen::Index p = static_cast<Eigen::Index>(oh) * ow;
    ConstMatMap<T> W(weight.value.data(), out_, kk);
    MatMap<T> Y(y.data.data(), out_, p);
    if (is_pointwise()) {
      Y.noalias() = W * ConstMatMap<T>(x.data.data(), kk, p);
    } else {
      const auto cols = im2col(x, k_, stride_, pad_, oh, ow);
      Y.noalias() = W * ConstMatMap<T>(cols.data(), kk, p);
    }
    for (int o = 0; o < out_; ++o) Y.row(o).array() += bias.value[o];
    return y;
  }

  /// Accumulates parameter gradients and returns dL/dx.
  Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& gy) {
    const int oh = out_h(x.h), ow = out_w(x.w);
    const Eigen::Index kk = static_cast<Eigen::Index>(in_) * k_ * k_;
    const Eigen::Index p = static_cast<Eigen::Index>(oh) * ow;
    ConstMatMap<T> W(weight.value.data(), out_, kk);
    MatMap<T> dW(weight.grad.data(), out_, kk);
    ConstMatMap<T> G(gy.data.data(), out_, p);
    for (int o = 0; o < out_; ++o) bias.grad[o] += G.row(o).sum();
    if (is_pointwise()) {
      dW.noalias() += G * ConstMatMap<T>(x.data.data(), kk, p).transpose();
      Tensor<T> gx(x.c, x.h, x.w);
      MatMap<T>(gx.data.data(), kk, p).noalias() = W.transpose() * G;
      return gx;
    }
    const auto cols = im2col(x, k_, stride_, pad_, oh, ow);
    dW.noalias() += G * ConstMatMap<T>(cols.data(), kk, p).transpose();
    RowMat<T> dcols = W.transpose() * G;
    return col2im(dcols.data(), x.c, x.h, x.w, k_, stride_, pad_, oh, ow);
  }

  std::vector<Param<T>*> params() { return {&weight, &bias}; }
  std::vector<const Param<T>*> params() const { return {&weight, &bias}; }

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  int kernel() const { return k_; }
  int stride() const { return stride_; }

  Param<T> weight;
  Param<T> bias;

 private:
  bool is_pointwise() const { return k_ == 1 && stride_ == 1 && pad_ == 0; }
  void check_input(const Tensor<T>& x) const {
    if (x.c != in_) {
      throw DimensionError("conv expects " + std::to_string(in_) + " channels, got " + x.shape_str());
    }
  }

  int in_, out_, k_, stride_, pad_;
};

/// Transposed convolution (the adjoint of Conv2d with the same geometry).
template <class T>
class ConvTranspose2d {
 public:
  ConvTranspose2d(int in_ch, int out_ch, int kernel, int stride = 1, int pad = 0)
      : in_(in_ch), out_(out_ch), k_(kernel), stride_(stride), pad_(pad) {
    weight.resize(static_cast<std::size_t>(in_) * out_ * k_ * k_);
    bias.resize(out_);
  }

  void init(std::mt19937_64& rng, double gain = std::sqrt(2.0)) {
    const double fan_in = static_cast<double>(in_) * k_ * k_ / (stride_ * stride_);
    detail::init_uniform(weight.value, gain * std::sqrt(3.0 / fan_in), rng);
    std::fill(bias.value.begin(), bias.value.end(), T(0));
  }

  int out_h(int h) const { return (h - 1) * stride_ - 2 * pad_ + k_; }
  int out_w(int w) const { return (w - 1) * stride_ - 2 * pad_ + k_; }

  Tensor<T> forward(const Tensor<T>& x) const {
    if (x.c != in_) {
      throw DimensionError("conv-transpose expects " + std::to_string(in_) + " channels, got " +
                           x.shape_str());
    }
    const Eigen::Index kk = static_cast<Eigen::Index>(out_) * k_ * k_;
    const Eigen::Index p = static_cast<Eigen::Index>(x.h) * x.w;
    ConstMatMap<T> W(weight.value.data(), in_, kk);
    RowMat<T> cols = W.transpose() * ConstMatMap<T>(x.data.data(), in_, p);
    Tensor<T> y = col2im(cols.data(), out_, out_h(x.h), out_w(x.w), k_, stride_, pad_, x.h, x.w);
    const std::size_t plane = y.plane();
    for (int o = 0; o < out_; ++o) {
      T* d = &y.data[o * plane];
      for (std::size_t i = 0; i < plane; ++i) d[i] += bias.value[o];
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& gy) {
    const Eigen::Index kk = static_cast<Eigen::Index>(out_) * k_ * k_;
    const Eigen::Index p = static_cast<Eigen::Index>(x.h) * x.w;
    const std::size_t plane = gy.plane();
    for (int o = 0; o < out_; ++o) {
      T s = T(0);
      const T* g = &gy.data[o * plane];
      for (std::size_t i = 0; i < plane; ++i) s += g[i];
      bias.grad[o] += s;
    }
    const auto dcols = im2col(gy, k_, stride_, pad_, x.h, x.w);
    ConstMatMap<T> D(dcols.data(), kk, p);
    ConstMatMap<T> X(x.data.data(), in_, p);
    MatMap<T>(weight.grad.data(), in_, kk).noalias() += X * D.transpose();
    Tensor<T> gx(x.c, x.h, x.w);
    MatMap<T>(gx.data.data(), in_, p).noalias() = ConstMatMap<T>(weight.value.data(), in_, kk) * D;
    return gx;
  }

  std::vector<Param<T>*> params() { return {&weight, &bias}; }
  std::vector<const Param<T>*> params() const { return {&weight, &bias}; }

  Param<T> weight;
  Param<T> bias;

 private:
  int in_, out_, k_, stride_, pad_;
};

struct Relu {
  template <class T>
  Tensor<T> forward(const Tensor<T>& x) const {
    Tensor<T> y = x;
    for (auto& v : y.data) v = v > T(0) ? v : T(0);
    return y;
  }
  template <class T>
  Tensor<T> backward(const Tensor<T>& x, const Tensor<T>& gy) const {
    Tensor<T> gx = gy;
    for (std::size_t i = 0; i < gx.size(); ++i) {
      if (!(x.data[i] > T(0))) gx.data[i] = T(0);
    }
    return gx;
  }
};

/// Fully connected layer on a flat vector.
template <class T>
class Linear {
 public:
  Linear(int in, int out) : in_(in), out_(out) {
    weight.resize(static_cast<std::size_t>(out) * in);
    bias.resize(out);
  }

  void init(std::mt19937_64& rng) {
    detail::init_uniform(weight.value, std::sqrt(1.0 / in_), rng);
    std::fill(bias.value.begin(), bias.value.end(), T(0));
  }

  std::vector<T> forward(const std::vector<T>& x) const {
    if (static_cast<int>(x.size()) != in_) throw DimensionError("linear input size mismatch");
    std::vector<T> y(out_);
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>(y.data(), out_).noalias() =
        ConstMatMap<T>(weight.value.data(), out_, in_) *
            Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>(x.data(), in_) +
        Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>(bias.value.data(), out_);
    return y;
  }

  std::vector<T> backward(const std::vector<T>& x, const std::vector<T>& gy) {
    std::vector<T> gx(in_, T(0));
    for (int o = 0; o < out_; ++o) {
      bias.grad[o] += gy[o];
      T* dw = &weight.grad[static_cast<std::size_t>(o) * in_];
      const T* w = &weight.value[static_cast<std::size_t>(o) * in_];
      for (int i = 0; i < in_; ++i) {
        dw[i] += gy[o] * x[i];
        gx[i] += w[i] * gy[o];
      }
    }
    return gx;
  }

  std::vector<Param<T>*> params() { return {&weight, &bias}; }
  std::vector<const Param<T>*> params() const { return {&weight, &bias}; }

  int in_features() const { return in_; }
  int out_features() const { return out_; }

  Param<T> weight;
  Param<T> bias;

 private:
  int in_, out_;
};

/// Ordered stack of conv / transposed-conv / ReLU layers.
template <class T>
class Sequential {
 public:
  using Layer = std::variant<Conv2d<T>, ConvTranspose2d<T>, Relu>;

  void add(Layer layer) { layers_.push_back(std::move(layer)); }

  void init(std::mt19937_64& rng) {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      // a layer followed by ReLU gets He gain, otherwise unit gain
      const bool relu_next = i + 1 < layers_.size() && std::holds_alternative<Relu>(layers_[i + 1]);
      const double gain = relu_next ? std::sqrt(2.0) : 1.0;
      std::visit(
          [&](auto& l) {
            if constexpr (!std::is_same_v<std::decay_t<decltype(l)>, Relu>) l.init(rng, gain);
          },
          layers_[i]);
    }
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    Tensor<T> cur = x;
    for (const auto& layer : layers_) {
      cur = std::visit([&](const auto& l) { return l.forward(cur); }, layer);
    }
    return cur;
  }

  /// Forward pass that keeps every layer input (acts[i] feeds layer i);
  /// acts.back() is the output.
  Tensor<T> forward_train(const Tensor<T>& x, std::vector<Tensor<T>>& acts) const {
    acts.clear();
    acts.reserve(layers_.size() + 1);
    acts.push_back(x);
    for (const auto& layer : layers_) {
      acts.push_back(std::visit([&](const auto& l) { return l.forward(acts.back()); }, layer));
    }
    return acts.back();
  }

  Tensor<T> backward(const std::vector<Tensor<T>>& acts, Tensor<T> gy) {
    for (std::size_t i = layers_.size(); i-- > 0;) {
      gy = std::visit([&](auto& l) { return l.backward(acts[i], gy); }, layers_[i]);
    }
    return gy;
  }

  /// Named parameters in a stable order ("<prefix>.<layer>.weight").
  std::vector<std::pair<std::string, Param<T>*>> named_params(const std::string& prefix) {
    std::vector<std::pair<std::string, Param<T>*>> out;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      std::visit(
          [&](auto& l) {
            if constexpr (!std::is_same_v<std::decay_t<decltype(l)>, Relu>) {
              const std::string base = prefix + "." + std::to_string(i);
              out.emplace_back(base + ".weight", &l.weight);
              out.emplace_back(base + ".bias", &l.bias);
            }
          },
          layers_[i]);
    }
    return out;
  }

  std::size_t size() const { return layers_.size(); }
  const Layer& operator[](std::size_t i) const { return layers_[i]; }

 private:
  std::vector<Layer> layers_;
};

}  // namespace semcast::nn
