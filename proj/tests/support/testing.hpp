#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "pugan/autograd.hpp"
#include "pugan/tensor.hpp"

namespace pugan::testing {

using Gen = std::mt19937_64;

template <typename T>
Tensor<T> uniform(const Shape& shape, Gen& g, double lo = 0.0, double hi = 1.0) {
  Tensor<T> t(shape);
  std::uniform_real_distribution<double> d(lo, hi);
  for (auto& v : t.values()) v = static_cast<T>(d(g));
  return t;
}

template <typename T>
Tensor<T> constant(const Shape& shape, double v) {
  return Tensor<T>(shape, static_cast<T>(v));
}

inline int uniform_int(Gen& g, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(g); }

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  return m;
}

/// Unique scratch directory, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "pugan") {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            (tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

struct GradCheckResult {
  int checked = 0;
  int skipped = 0;  // non-smooth probes (a step mask or ReLU kink inside +-h)
  double worst_rel = 0.0;
  std::string worst_where;
};

/// Compares the autodiff gradient of `loss` with central differences on
/// `samples` random coordinates drawn from `params`. A probe whose one-sided
/// slopes disagree sits on a kink and is redrawn.
inline GradCheckResult grad_check(const std::function<Var<double>()>& loss, std::vector<Var<double>> params,
                                  int samples, Gen& g, double h = 1e-5, double floor = 1e-6,
                                  double loss_scale = 0) {
  for (auto& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  Var<double> l = loss();
  l.backward();
  std::vector<Tensor<double>> analytic;
  std::size_t total = 0;
  for (auto& p : params) {
    analytic.push_back(p.has_grad() ? p.grad() : Tensor<double>(p.shape()));
    total += p.value().size();
  }

  GradCheckResult r;
  const int max_tries = samples * 20;
  for (int tries = 0; r.checked < samples && tries < max_tries; ++tries) {
    std::size_t flat = std::uniform_int_distribution<std::size_t>(0, total - 1)(g);
    std::size_t pi = 0;
    while (flat >= params[pi].value().size()) flat -= params[pi++].value().size();
    double& x = params[pi].mutable_value()[flat];
    const double x0 = x;
    double f0, fp, fm;
    {
      NoGradGuard ng;
      f0 = loss().value().item();
      x = x0 + h;
      fp = loss().value().item();
      x = x0 - h;
      fm = loss().value().item();
      x = x0;
    }
    const double right = (fp - f0) / h, left = (f0 - fm) / h;
    if (std::abs(right - left) > 1e-3 * std::max({std::abs(right), std::abs(left), 1e-3})) {
      ++r.skipped;
      continue;
    }
    const double numeric = (fp - fm) / (2 * h);
    const double a = analytic[pi][flat];
    // Cancellation in fp - fm leaves about eps * scale / h of noise in the
    // difference quotient. For a sum of many signed terms the scale is the sum
    // of magnitudes, which the caller has to supply.
    const double scale = std::max({std::abs(f0), loss_scale, 1.0});
    const double noise = 64 * std::numeric_limits<double>::epsilon() * scale / h;
    const double err = std::max(0.0, std::abs(a - numeric) - noise);
    const double rel = err / std::max({std::abs(a), std::abs(numeric), floor});
    if (rel > r.worst_rel) {
      r.worst_rel = rel;
      r.worst_where = "param " + std::to_string(pi) + "[" + std::to_string(flat) + "] analytic=" + std::to_string(a) +
                      " numeric=" + std::to_string(numeric);
    }
    ++r.checked;
  }
  return r;
}

}  // namespace pugan::testing
