#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "pugan/autograd.hpp"

// Underwater image formation I = J t + A (1 - t) with t = exp(-beta d), and
// the color-correcting inversion J' = I / t that ignores the background term.
//
// Layouts: images and transmission maps are (N,3,H,W), depth maps (N,1,H,W),
// attenuation and background light (N,3) with channel order r,g,b.
namespace pugan::physics {

/// Floor on t when dividing by it in the inversion.
inline constexpr double kMinTransmission = 0.1;
/// t is clamped into [eps, 1 - eps] before taking its logarithm.
inline constexpr double kLogClampEps = 1e-4;

class PhysicsError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Per-channel attenuation coefficient of a single image.
struct Attenuation {
  std::array<double, 3> rgb{};

  /// Throws PhysicsError unless every component is strictly positive.
  void validate() const;
};

struct BackgroundLight {
  std::array<double, 3> rgb{};

  /// Throws PhysicsError unless every component lies in [0,1].
  void validate() const;
};

// Scalar kernels shared by the tensor and differentiable entry points so both
// produce bit-identical results.
template <typename T>
inline T degrade_pixel(T j, T t, T a) {
  return std::clamp(j * t + a * (T(1) - t), T(0), T(1));
}

template <typename T>
inline T invert_pixel(T i, T t) {
  return std::clamp(i / std::max(t, T(kMinTransmission)), T(0), T(1));
}

template <typename T>
inline T depth_from_channel(T t, T beta) {
  return -std::log(std::clamp(t, T(kLogClampEps), T(1) - T(kLogClampEps))) / beta;
}

/// Broadcasts one (r,g,b) triple to an (n,3) tensor.
template <typename T>
Tensor<T> per_batch(const std::array<double, 3>& rgb, int n);

template <typename T>
Tensor<T> synthesize_degraded(const Tensor<T>& clean, const Tensor<T>& transmission, const Tensor<T>& background);

template <typename T>
Tensor<T> transmission_from_depth(const Tensor<T>& depth, const Tensor<T>& beta);

/// Mean over the three per-channel depth estimates -ln(t^c) / beta^c.
template <typename T>
Tensor<T> depth_from_transmission(const Tensor<T>& transmission, const Tensor<T>& beta);

template <typename T>
Tensor<T> invert_color_enhanced(const Tensor<T>& observed, const Tensor<T>& transmission);

// Differentiable counterparts used inside the parameter-estimation network.
template <typename T>
Var<T> depth_from_transmission(const Var<T>& transmission, const Var<T>& beta);

template <typename T>
Var<T> invert_color_enhanced(const Var<T>& observed, const Var<T>& transmission);

}  // namespace pugan::physics
