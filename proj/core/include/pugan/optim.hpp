#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "pugan/autograd.hpp"

namespace pugan {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const {
    if (!(lr > 0.0)) throw std::invalid_argument("adam: lr must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
      throw std::invalid_argument("adam: moment coefficients must lie in [0,1)");
    if (!(eps > 0.0)) throw std::invalid_argument("adam: eps must be > 0");
  }
};

/// Adam with bias-corrected moments. Only the parameters handed to the
/// constructor are ever written; parameters without a gradient are skipped.
template <typename T>
class Adam {
 public:
  Adam(std::vector<Var<T>> params, AdamOptions opts) : params_(std::move(params)), opts_(opts) {
    opts_.validate();
    for (auto& p : params_) {
      m_.emplace_back(p.shape());
      v_.emplace_back(p.shape());
    }
  }

  void set_lr(double lr) { opts_.lr = lr; }
  double lr() const { return opts_.lr; }
  long steps() const { return t_; }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
    const T b1 = static_cast<T>(opts_.beta1), b2 = static_cast<T>(opts_.beta2);
    const T step_size = static_cast<T>(opts_.lr / c1);
    const T inv_sqrt_c2 = static_cast<T>(1.0 / std::sqrt(c2));
    const T eps = static_cast<T>(opts_.eps);
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& p = params_[k];
      if (!p.has_grad()) continue;
      const T* g = p.grad().data();
      T* w = p.mutable_value().data();
      T* m = m_[k].data();
      T* v = v_[k].data();
      const std::size_t n = p.value().size();
      for (std::size_t i = 0; i < n; ++i) {
        m[i] = b1 * m[i] + (T(1) - b1) * g[i];
        v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
        w[i] -= step_size * m[i] / (std::sqrt(v[i]) * inv_sqrt_c2 + eps);
      }
    }
  }

  const std::vector<Var<T>>& parameters() const { return params_; }

 private:
  std::vector<Var<T>> params_;
  AdamOptions opts_;
  std::vector<Tensor<T>> m_;
  std::vector<Tensor<T>> v_;
  long t_ = 0;
};

}  // namespace pugan
