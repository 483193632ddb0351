#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "pugan/autograd.hpp"
#include "pugan/ops.hpp"

namespace pugan::nn {

using Rng = std::mt19937_64;

/// Hierarchical container of named parameters, buffers and child modules.
/// Modules are address-stable (non-copyable, non-movable); owners hold them by
/// value or unique_ptr and children are registered by pointer.
template <typename T>
class Module {
 public:
  Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;
  virtual ~Module() = default;

  void train(bool on = true) {
    training_ = on;
    for (auto& [name, child] : children_) child->train(on);
  }
  void eval() { train(false); }
  bool is_training() const { return training_; }

  /// Parameters keyed by dotted path, e.g. "depth.rbd.cbr1.conv.weight".
  std::vector<std::pair<std::string, Var<T>>> named_parameters(const std::string& prefix = "") const {
    std::vector<std::pair<std::string, Var<T>>> out;
    collect_parameters(prefix, out);
    return out;
  }

  std::vector<std::pair<std::string, Tensor<T>*>> named_buffers(const std::string& prefix = "") {
    std::vector<std::pair<std::string, Tensor<T>*>> out;
    collect_buffers(prefix, out);
    return out;
  }

  std::vector<Var<T>> parameters() const {
    std::vector<Var<T>> out;
    for (auto& [name, p] : named_parameters()) out.push_back(p);
    return out;
  }

  void set_requires_grad(bool on) {
    for (auto& p : parameters()) p.set_requires_grad(on);
  }

  void zero_grad() {
    for (auto& p : parameters()) p.zero_grad();
  }

 protected:
  Var<T> register_parameter(std::string name, Tensor<T> init) {
    params_.emplace_back(std::move(name), Var<T>(std::move(init), true));
    return params_.back().second;
  }

  Tensor<T>& register_buffer(std::string name, Tensor<T> init) {
    buffers_.emplace_back(std::move(name), std::make_unique<Tensor<T>>(std::move(init)));
    return *buffers_.back().second;
  }

  template <typename M>
  M& register_module(std::string name, std::unique_ptr<M> module) {
    M& ref = *module;
    children_.emplace_back(std::move(name), std::move(module));
    return ref;
  }

 private:
  static std::string join(const std::string& prefix, const std::string& name) {
    return prefix.empty() ? name : prefix + "." + name;
  }

  void collect_parameters(const std::string& prefix, std::vector<std::pair<std::string, Var<T>>>& out) const {
    for (auto& [name, p] : params_) out.emplace_back(join(prefix, name), p);
    for (auto& [name, child] : children_) child->collect_parameters(join(prefix, name), out);
  }

  void collect_buffers(const std::string& prefix, std::vector<std::pair<std::string, Tensor<T>*>>& out) {
    for (auto& [name, b] : buffers_) out.emplace_back(join(prefix, name), b.get());
    for (auto& [name, child] : children_) child->collect_buffers(join(prefix, name), out);
  }

  std::vector<std::pair<std::string, Var<T>>> params_;
  std::vector<std::pair<std::string, std::unique_ptr<Tensor<T>>>> buffers_;
  std::vector<std::pair<std::string, std::unique_ptr<Module>>> children_;
  bool training_ = true;
};

/// He-normal initialisation: N(0, 2 / fan_in).
template <typename T>
Tensor<T> he_normal(Shape shape, int fan_in, Rng& rng) {
  Tensor<T> t(std::move(shape));
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  for (auto& v : t.values()) v = static_cast<T>(dist(rng));
  return t;
}

template <typename T>
class Conv2d : public Module<T> {
 public:
  Conv2d(int in_channels, int out_channels, int kernel, int stride, int padding, Rng& rng, bool bias = true)
      : stride_(stride), padding_(padding) {
    weight_ = this->register_parameter(
        "weight", he_normal<T>(Shape{out_channels, in_channels, kernel, kernel}, in_channels * kernel * kernel, rng));
    if (bias) bias_ = this->register_parameter("bias", Tensor<T>(Shape{out_channels}));
  }

  Var<T> forward(const Var<T>& x) const { return ops::conv2d(x, weight_, bias_, stride_, padding_); }

  int out_channels() const { return weight_.dim(0); }

 private:
  Var<T> weight_;
  Var<T> bias_;
  int stride_;
  int padding_;
};

template <typename T>
class BatchNorm2d : public Module<T> {
 public:
  explicit BatchNorm2d(int channels, T momentum = T(0.1), T eps = T(1e-5))
      : momentum_(momentum),
        eps_(eps),
        gamma_(this->register_parameter("gamma", Tensor<T>(Shape{channels}, T(1)))),
        beta_(this->register_parameter("beta", Tensor<T>(Shape{channels}))),
        running_mean_(this->register_buffer("running_mean", Tensor<T>(Shape{channels}))),
        running_var_(this->register_buffer("running_var", Tensor<T>(Shape{channels}, T(1)))) {}

  Var<T> forward(const Var<T>& x) {
    return ops::batch_norm(x, gamma_, beta_, running_mean_, running_var_, this->is_training(), momentum_, eps_);
  }

 private:
  T momentum_;
  T eps_;
  Var<T> gamma_;
  Var<T> beta_;
  Tensor<T>& running_mean_;
  Tensor<T>& running_var_;
};

template <typename T>
class Linear : public Module<T> {
 public:
  Linear(int in_features, int out_features, Rng& rng)
      : weight_(this->register_parameter("weight", he_normal<T>(Shape{out_features, in_features}, in_features, rng))),
        bias_(this->register_parameter("bias", Tensor<T>(Shape{out_features}))) {}

  Var<T> forward(const Var<T>& x) const { return ops::linear(x, weight_, bias_); }

 private:
  Var<T> weight_;
  Var<T> bias_;
};

enum class Activation { kReLU, kLeakyReLU };

/// conv 3x3 -> batch norm -> ReLU (or LeakyReLU).
template <typename T>
class ConvBnAct : public Module<T> {
 public:
  ConvBnAct(int in_channels, int out_channels, Rng& rng, int stride = 1, Activation act = Activation::kReLU,
            T slope = T(0.2))
      : conv_(this->register_module("conv", std::make_unique<Conv2d<T>>(in_channels, out_channels, 3, stride, 1, rng, false))),
        bn_(this->register_module("bn", std::make_unique<BatchNorm2d<T>>(out_channels))),
        act_(act),
        slope_(slope) {}

  Var<T> forward(const Var<T>& x) {
    auto y = bn_.forward(conv_.forward(x));
    return act_ == Activation::kReLU ? ops::relu(y) : ops::leaky_relu(y, slope_);
  }

 private:
  Conv2d<T>& conv_;
  BatchNorm2d<T>& bn_;
  Activation act_;
  T slope_;
};

/// x + cbr2(cbr1(x)).
template <typename T>
class ResidualBlock : public Module<T> {
 public:
  ResidualBlock(int channels, Rng& rng)
      : first_(this->register_module("cbr1", std::make_unique<ConvBnAct<T>>(channels, channels, rng))),
        second_(this->register_module("cbr2", std::make_unique<ConvBnAct<T>>(channels, channels, rng))) {}

  Var<T> forward(const Var<T>& x) { return ops::add(x, second_.forward(first_.forward(x))); }

 private:
  ConvBnAct<T>& first_;
  ConvBnAct<T>& second_;
};

}  // namespace pugan::nn
