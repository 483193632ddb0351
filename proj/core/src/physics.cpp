#include "pugan/physics.hpp"

#include <string>

namespace pugan::physics {
namespace {

const char* kChannelNames[3] = {"r", "g", "b"};

void require_image_like(const Shape& s, int channels, const char* what) {
  if (s.size() != 4 || s[1] != channels)
    throw ShapeError(std::string(what) + ": expected (N," + std::to_string(channels) + ",H,W), got " + to_string(s));
}

void require_beta(const Shape& s, int batch, const char* what) {
  if (s.size() != 2 || s[0] != batch || s[1] != 3)
    throw ShapeError(std::string(what) + ": expected attenuation of shape (" + std::to_string(batch) + ",3), got " +
                     to_string(s));
}

template <typename T>
void require_positive_beta(const Tensor<T>& beta) {
  for (std::size_t i = 0; i < beta.size(); ++i)
    if (!(beta[i] > T(0)))
      throw PhysicsError("attenuation coefficient " + std::string(kChannelNames[i % 3]) + " of sample " +
                         std::to_string(i / 3) + " must be > 0, got " + std::to_string(beta[i]));
}

}  // namespace

void Attenuation::validate() const {
  for (int c = 0; c < 3; ++c)
    if (!(rgb[c] > 0.0))
      throw PhysicsError("attenuation coefficient " + std::string(kChannelNames[c]) + " must be > 0, got " +
                         std::to_string(rgb[c]));
}

void BackgroundLight::validate() const {
  for (int c = 0; c < 3; ++c)
    if (!(rgb[c] >= 0.0 && rgb[c] <= 1.0))
      throw PhysicsError("background light " + std::string(kChannelNames[c]) + " must lie in [0,1], got " +
                         std::to_string(rgb[c]));
}

template <typename T>
Tensor<T> per_batch(const std::array<double, 3>& rgb, int n) {
  Tensor<T> out(Shape{n, 3});
  for (int b = 0; b < n; ++b)
    for (int c = 0; c < 3; ++c) out[b * 3 + c] = static_cast<T>(rgb[c]);
  return out;
}

template <typename T>
Tensor<T> synthesize_degraded(const Tensor<T>& clean, const Tensor<T>& transmission, const Tensor<T>& background) {
  require_image_like(clean.shape(), 3, "synthesize_degraded");
  require_same_shape(clean.shape(), transmission.shape(), "synthesize_degraded");
  const int n = clean.dim(0);
  require_beta(background.shape(), n, "synthesize_degraded background");
  const std::size_t plane = static_cast<std::size_t>(clean.dim(2)) * clean.dim(3);
  Tensor<T> out(clean.shape());
  for (int b = 0; b < n; ++b)
    for (int c = 0; c < 3; ++c) {
      const std::size_t off = (static_cast<std::size_t>(b) * 3 + c) * plane;
      const T a = background[b * 3 + c];
      for (std::size_t i = 0; i < plane; ++i) out[off + i] = degrade_pixel(clean[off + i], transmission[off + i], a);
    }
  return out;
}

template <typename T>
Tensor<T> transmission_from_depth(const Tensor<T>& depth, const Tensor<T>& beta) {
  require_image_like(depth.shape(), 1, "transmission_from_depth");
  const int n = depth.dim(0), h = depth.dim(2), w = depth.dim(3);
  require_beta(beta.shape(), n, "transmission_from_depth");
  require_positive_beta(beta);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  Tensor<T> out(Shape{n, 3, h, w});
  for (int b = 0; b < n; ++b)
    for (int c = 0; c < 3; ++c) {
      const T bc = beta[b * 3 + c];
      const T* d = depth.data() + static_cast<std::size_t>(b) * plane;
      T* t = out.data() + (static_cast<std::size_t>(b) * 3 + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) t[i] = std::exp(-bc * d[i]);
    }
  return out;
}

template <typename T>
Tensor<T> depth_from_transmission(const Tensor<T>& transmission, const Tensor<T>& beta) {
  require_image_like(transmission.shape(), 3, "depth_from_transmission");
  const int n = transmission.dim(0), h = transmission.dim(2), w = transmission.dim(3);
  require_beta(beta.shape(), n, "depth_from_transmission");
  require_positive_beta(beta);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  Tensor<T> out(Shape{n, 1, h, w});
  for (int b = 0; b < n; ++b) {
    const T* t = transmission.data() + static_cast<std::size_t>(b) * 3 * plane;
    const T br = beta[b * 3], bg = beta[b * 3 + 1], bb = beta[b * 3 + 2];
    T* d = out.data() + static_cast<std::size_t>(b) * plane;
    for (std::size_t i = 0; i < plane; ++i)
      d[i] = (depth_from_channel(t[i], br) + depth_from_channel(t[plane + i], bg) +
              depth_from_channel(t[2 * plane + i], bb)) /
             T(3);
  }
  return out;
}

template <typename T>
Tensor<T> invert_color_enhanced(const Tensor<T>& observed, const Tensor<T>& transmission) {
  require_image_like(observed.shape(), 3, "invert_color_enhanced");
  require_same_shape(observed.shape(), transmission.shape(), "invert_color_enhanced");
  Tensor<T> out(observed.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = invert_pixel(observed[i], transmission[i]);
  return out;
}

template <typename T>
Var<T> depth_from_transmission(const Var<T>& transmission, const Var<T>& beta) {
  Tensor<T> out = depth_from_transmission(transmission.value(), beta.value());
  const int n = transmission.dim(0);
  const std::size_t plane = static_cast<std::size_t>(transmission.dim(2)) * transmission.dim(3);
  return make_result<T>(std::move(out), {transmission, beta}, [n, plane](Node<T>& self) {
    auto& nt = self.inputs[0];
    auto& nb = self.inputs[1];
    const T lo = T(kLogClampEps), hi = T(1) - T(kLogClampEps);
    for (int b = 0; b < n; ++b) {
      const T* g = self.grad.data() + static_cast<std::size_t>(b) * plane;
      for (int c = 0; c < 3; ++c) {
        const T bc = nb->value[b * 3 + c];
        const std::size_t off = (static_cast<std::size_t>(b) * 3 + c) * plane;
        const T* t = nt->value.data() + off;
        T* gt = nt->requires_grad ? nt->grad_buffer().data() + off : nullptr;
        T gbeta = T(0);
        for (std::size_t i = 0; i < plane; ++i) {
          const T tc = std::clamp(t[i], lo, hi);
          if (gt && t[i] >= lo && t[i] <= hi) gt[i] += -g[i] / (T(3) * bc * tc);
          gbeta += g[i] * std::log(tc) / (T(3) * bc * bc);
        }
        if (nb->requires_grad) nb->grad_buffer()[b * 3 + c] += gbeta;
      }
    }
  });
}

template <typename T>
Var<T> invert_color_enhanced(const Var<T>& observed, const Var<T>& transmission) {
  Tensor<T> out = invert_color_enhanced(observed.value(), transmission.value());
  return make_result<T>(std::move(out), {observed, transmission}, [](Node<T>& self) {
    auto& ni = self.inputs[0];
    auto& nt = self.inputs[1];
    const T tmin = T(kMinTransmission);
    for (std::size_t k = 0; k < self.grad.size(); ++k) {
      const T i = ni->value[k], t = nt->value[k];
      const T ratio = i / std::max(t, tmin);
      if (ratio <= T(0) || ratio >= T(1)) continue;
      const T denom = std::max(t, tmin);
      if (ni->requires_grad) ni->grad_buffer()[k] += self.grad[k] / denom;
      if (nt->requires_grad && t > tmin) nt->grad_buffer()[k] += -self.grad[k] * i / (t * t);
    }
  });
}

#define PUGAN_INSTANTIATE_PHYSICS(T)                                                           \
  template Tensor<T> per_batch<T>(const std::array<double, 3>&, int);                          \
  template Tensor<T> synthesize_degraded(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&); \
  template Tensor<T> transmission_from_depth(const Tensor<T>&, const Tensor<T>&);              \
  template Tensor<T> depth_from_transmission(const Tensor<T>&, const Tensor<T>&);              \
  template Tensor<T> invert_color_enhanced(const Tensor<T>&, const Tensor<T>&);                \
  template Var<T> depth_from_transmission(const Var<T>&, const Var<T>&);                       \
  template Var<T> invert_color_enhanced(const Var<T>&, const Var<T>&);

PUGAN_INSTANTIATE_PHYSICS(float)
PUGAN_INSTANTIATE_PHYSICS(double)

}  // namespace pugan::physics
