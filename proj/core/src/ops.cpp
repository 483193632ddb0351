#include "pugan/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>

namespace pugan {

namespace {
thread_local bool grad_mode_enabled = true;
}  // namespace

bool GradMode::enabled() { return grad_mode_enabled; }
void GradMode::set_enabled(bool on) { grad_mode_enabled = on; }

namespace ops {
namespace {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
bool wants_grad(const std::shared_ptr<Node<T>>& n) {
  return n && n->requires_grad;
}

void require_rank(const Shape& s, int rank, const char* op) {
  if (static_cast<int>(s.size()) != rank)
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + " input, got " + to_string(s));
}

template <typename T, typename F, typename D>
Var<T> unary(const Var<T>& x, F f, D deriv) {
  const Tensor<T>& xv = x.value();
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  return make_result<T>(std::move(out), {x}, [deriv](Node<T>& self) {
    auto& in = self.inputs[0];
    if (!wants_grad(in)) return;
    Tensor<T>& g = in->grad_buffer();
    const Tensor<T>& xv = in->value;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * deriv(xv[i], self.value[i]);
  });
}

template <typename T, typename F, typename DA, typename DB>
Var<T> binary(const Var<T>& a, const Var<T>& b, const char* name, F f, DA da, DB db) {
  require_same_shape(a.shape(), b.shape(), name);
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i], bv[i]);
  return make_result<T>(std::move(out), {a, b}, [da, db](Node<T>& self) {
    auto& na = self.inputs[0];
    auto& nb = self.inputs[1];
    const Tensor<T>& av = na->value;
    const Tensor<T>& bv = nb->value;
    if (wants_grad(na)) {
      Tensor<T>& g = na->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * da(av[i], bv[i]);
    }
    if (wants_grad(nb)) {
      Tensor<T>& g = nb->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * db(av[i], bv[i]);
    }
  });
}

template <typename T>
void im2col(const T* x, int channels, int height, int width, int kernel, int stride, int pad, int out_h, int out_w,
            T* col) {
  const std::size_t plane = static_cast<std::size_t>(out_h) * out_w;
  for (int c = 0; c < channels; ++c) {
    for (int kh = 0; kh < kernel; ++kh) {
      for (int kw = 0; kw < kernel; ++kw) {
        T* row = col + ((static_cast<std::size_t>(c) * kernel + kh) * kernel + kw) * plane;
        for (int oh = 0; oh < out_h; ++oh) {
          T* dst = row + static_cast<std::size_t>(oh) * out_w;
          const int ih = oh * stride - pad + kh;
          if (ih < 0 || ih >= height) {
            std::fill(dst, dst + out_w, T(0));
            continue;
          }
          const T* src = x + (static_cast<std::size_t>(c) * height + ih) * width;
          if (stride == 1) {
            const int lo = std::clamp(pad - kw, 0, out_w);
            const int hi = std::clamp(width + pad - kw, lo, out_w);
            std::fill(dst, dst + lo, T(0));
            std::memcpy(dst + lo, src + lo - pad + kw, sizeof(T) * (hi - lo));
            std::fill(dst + hi, dst + out_w, T(0));
          } else {
            for (int ow = 0; ow < out_w; ++ow) {
              const int iw = ow * stride - pad + kw;
              dst[ow] = (iw >= 0 && iw < width) ? src[iw] : T(0);
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, int channels, int height, int width, int kernel, int stride, int pad, int out_h, int out_w,
            T* x) {
  const std::size_t plane = static_cast<std::size_t>(out_h) * out_w;
  for (int c = 0; c < channels; ++c) {
    for (int kh = 0; kh < kernel; ++kh) {
      for (int kw = 0; kw < kernel; ++kw) {
        const T* row = col + ((static_cast<std::size_t>(c) * kernel + kh) * kernel + kw) * plane;
        for (int oh = 0; oh < out_h; ++oh) {
          const int ih = oh * stride - pad + kh;
          if (ih < 0 || ih >= height) continue;
          const T* src = row + static_cast<std::size_t>(oh) * out_w;
          T* dst = x + (static_cast<std::size_t>(c) * height + ih) * width;
          for (int ow = 0; ow < out_w; ++ow) {
            const int iw = ow * stride - pad + kw;
            if (iw >= 0 && iw < width) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  return binary(a, b, "add", [](T x, T y) { return x + y; }, [](T, T) { return T(1); }, [](T, T) { return T(1); });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  return binary(a, b, "sub", [](T x, T y) { return x - y; }, [](T, T) { return T(1); }, [](T, T) { return T(-1); });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  return binary(a, b, "mul", [](T x, T y) { return x * y; }, [](T, T y) { return y; }, [](T x, T) { return x; });
}

template <typename T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
  return binary(
      a, b, "div", [](T x, T y) { return x / y; }, [](T, T y) { return T(1) / y; },
      [](T x, T y) { return -x / (y * y); });
}

template <typename T>
Var<T> add_scalar(const Var<T>& x, T s) {
  return unary(x, [s](T v) { return v + s; }, [](T, T) { return T(1); });
}

template <typename T>
Var<T> mul_scalar(const Var<T>& x, T s) {
  return unary(x, [s](T v) { return v * s; }, [s](T, T) { return s; });
}

template <typename T>
Var<T> rsub_scalar(T s, const Var<T>& x) {
  return unary(x, [s](T v) { return s - v; }, [](T, T) { return T(-1); });
}

template <typename T>
Var<T> abs(const Var<T>& x) {
  return unary(
      x, [](T v) { return std::abs(v); }, [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  return unary(x, [](T v) { return v > T(0) ? v : T(0); }, [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope) {
  return unary(
      x, [slope](T v) { return v > T(0) ? v : slope * v; }, [slope](T v, T) { return v > T(0) ? T(1) : slope; });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  return unary(
      x,
      [](T v) {
        if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var<T> softplus(const Var<T>& x) {
  return unary(
      x, [](T v) { return v > T(0) ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); },
      [](T v, T) {
        if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
      });
}

template <typename T>
Var<T> exp(const Var<T>& x) {
  return unary(x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
Var<T> log(const Var<T>& x) {
  return unary(x, [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

template <typename T>
Var<T> clamp(const Var<T>& x, T lo, T hi) {
  return unary(
      x, [lo, hi](T v) { return std::clamp(v, lo, hi); },
      [lo, hi](T v, T) { return (v >= lo && v <= hi) ? T(1) : T(0); });
}

template <typename T>
Var<T> broadcast_to(const Var<T>& x, const Shape& shape) {
  const Shape& in = x.shape();
  if (in.size() != shape.size()) throw ShapeError("broadcast_to: rank mismatch " + to_string(in) + " -> " + to_string(shape));
  const int rank = static_cast<int>(shape.size());
  std::vector<std::size_t> in_stride(rank, 0);
  std::size_t acc = 1;
  for (int i = rank - 1; i >= 0; --i) {
    if (in[i] != shape[i] && in[i] != 1)
      throw ShapeError("broadcast_to: axis " + std::to_string(i) + " of " + to_string(in) + " cannot expand to " +
                       to_string(shape));
    in_stride[i] = in[i] == 1 ? 0 : acc;
    acc *= in[i];
  }
  // Flat output index -> flat input index.
  const std::size_t total = numel(shape);
  std::vector<std::size_t> index(total);
  std::vector<int> counter(rank, 0);
  std::size_t src = 0;
  for (std::size_t i = 0; i < total; ++i) {
    index[i] = src;
    for (int ax = rank - 1; ax >= 0; --ax) {
      if (++counter[ax] < shape[ax]) {
        src += in_stride[ax];
        break;
      }
      src -= in_stride[ax] * (shape[ax] - 1);
      counter[ax] = 0;
    }
  }
  Tensor<T> out(shape);
  const Tensor<T>& xv = x.value();
  for (std::size_t i = 0; i < total; ++i) out[i] = xv[index[i]];
  return make_result<T>(std::move(out), {x}, [index = std::move(index)](Node<T>& self) {
    auto& in = self.inputs[0];
    if (!wants_grad(in)) return;
    Tensor<T>& g = in->grad_buffer();
    for (std::size_t i = 0; i < index.size(); ++i) g[index[i]] += self.grad[i];
  });
}

template <typename T>
Var<T> reshape(const Var<T>& x, const Shape& shape) {
  Tensor<T> out = x.value().reshaped(shape);
  return make_result<T>(std::move(out), {x}, [](Node<T>& self) {
    auto& in = self.inputs[0];
    if (!wants_grad(in)) return;
    Tensor<T>& g = in->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  T s = T(0);
  for (T v : x.value().values()) s += v;
  return make_result<T>(Tensor<T>::scalar(s), {x}, [](Node<T>& self) {
    auto& in = self.inputs[0];
    if (!wants_grad(in)) return;
    Tensor<T>& g = in->grad_buffer();
    const T gs = self.grad[0];
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += gs;
  });
}

template <typename T>
Var<T> mean(const Var<T>& x) {
  const std::size_t n = x.value().size();
  if (n == 0) throw ShapeError("mean of empty tensor");
  return mul_scalar(sum(x), T(1) / static_cast<T>(n));
}

template <typename T>
Var<T> mean_channels(const Var<T>& x) {
  require_rank(x.shape(), 4, "mean_channels");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  Tensor<T> out(Shape{n, 1, h, w});
  const T* xv = x.value().data();
  for (int b = 0; b < n; ++b) {
    T* dst = out.data() + b * plane;
    for (int ch = 0; ch < c; ++ch) {
      const T* src = xv + (static_cast<std::size_t>(b) * c + ch) * plane;
      for (std::size_t i = 0; i < plane; ++i) dst[i] += src[i];
    }
    for (std::size_t i = 0; i < plane; ++i) dst[i] /= static_cast<T>(c);
  }
  return make_result<T>(std::move(out), {x}, [n, c, plane](Node<T>& self) {
    auto& in = self.inputs[0];
    if (!wants_grad(in)) return;
    T* g = in->grad_buffer().data();
    const T scale = T(1) / static_cast<T>(c);
    for (int b = 0; b < n; ++b) {
      const T* src = self.grad.data() + b * plane;
      for (int ch = 0; ch < c; ++ch) {
        T* dst = g + (static_cast<std::size_t>(b) * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) dst[i] += src[i] * scale;
      }
    }
  });
}

template <typename T>
Var<T> mean_per_sample(const Var<T>& x) {
  const int n = x.dim(0);
  const std::size_t per = x.value().size() / static_cast<std::size_t>(n);
  Tensor<T> out(Shape{n});
  for (int b = 0; b < n; ++b) {
    T s = T(0);
    for (std::size_t i = 0; i < per; ++i) s += x.value()[b * per + i];
    out[b] = s / static_cast<T>(per);
  }
  return make_result<T>(std::move(out), {x}, [n, per](Node<T>& self) {
    auto& in = self.inputs[0];
    if (!wants_grad(in)) return;
    Tensor<T>& g = in->grad_buffer();
    for (int b = 0; b < n; ++b) {
      const T gs = self.grad[b] / static_cast<T>(per);
      for (std::size_t i = 0; i < per; ++i) g[b * per + i] += gs;
    }
  });
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride, int padding) {
  require_rank(x.shape(), 4, "conv2d");
  require_rank(weight.shape(), 4, "conv2d weight");
  const int n = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int cout = weight.dim(0), k = weight.dim(2);
  if (weight.dim(1) != cin)
    throw ShapeError("conv2d: input has " + std::to_string(cin) + " channels, weight expects " +
                     std::to_string(weight.dim(1)) + " (axis 1)");
  if (bias.defined() && bias.value().size() != static_cast<std::size_t>(cout))
    throw ShapeError("conv2d: bias size does not match output channels");
  const int oh = (h + 2 * padding - k) / stride + 1;
  const int ow = (w + 2 * padding - k) / stride + 1;
  if (oh <= 0 || ow <= 0) throw ShapeError("conv2d: input " + to_string(x.shape()) + " too small for kernel");

  const std::size_t ckk = static_cast<std::size_t>(cin) * k * k;
  const std::size_t plane = static_cast<std::size_t>(oh) * ow;
  Tensor<T> out(Shape{n, cout, oh, ow});
  AlignedVector<T> col(ckk * plane);
  Eigen::Map<const MatR<T>> wm(weight.value().data(), cout, static_cast<Eigen::Index>(ckk));
  for (int b = 0; b < n; ++b) {
    im2col(x.value().data() + static_cast<std::size_t>(b) * cin * h * w, cin, h, w, k, stride, padding, oh, ow,
           col.data());
    Eigen::Map<const MatR<T>> cm(col.data(), static_cast<Eigen::Index>(ckk), static_cast<Eigen::Index>(plane));
    Eigen::Map<MatR<T>> om(out.data() + static_cast<std::size_t>(b) * cout * plane, cout,
                           static_cast<Eigen::Index>(plane));
    om.noalias() = wm * cm;
    if (bias.defined()) om.colwise() += Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>(bias.value().data(), cout);
  }

  std::vector<Var<T>> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result<T>(std::move(out), std::move(inputs),
                        [=](Node<T>& self) {
                          auto& nx = self.inputs[0];
                          auto& nw = self.inputs[1];
                          const bool gx = wants_grad(nx), gw = wants_grad(nw);
                          const bool gb = self.inputs.size() > 2 && wants_grad(self.inputs[2]);
                          AlignedVector<T> col(ckk * plane);
                          Eigen::Map<const MatR<T>> wm(nw->value.data(), cout, static_cast<Eigen::Index>(ckk));
                          for (int b = 0; b < n; ++b) {
                            Eigen::Map<const MatR<T>> gm(self.grad.data() + static_cast<std::size_t>(b) * cout * plane,
                                                         cout, static_cast<Eigen::Index>(plane));
                            if (gb) {
                              Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> gbm(
                                  self.inputs[2]->grad_buffer().data(), cout);
                              gbm += gm.rowwise().sum();
                            }
                            if (gw) {
                              im2col(nx->value.data() + static_cast<std::size_t>(b) * cin * h * w, cin, h, w, k,
                                     stride, padding, oh, ow, col.data());
                              Eigen::Map<const MatR<T>> cm(col.data(), static_cast<Eigen::Index>(ckk),
                                                           static_cast<Eigen::Index>(plane));
                              Eigen::Map<MatR<T>> gwm(nw->grad_buffer().data(), cout, static_cast<Eigen::Index>(ckk));
                              gwm.noalias() += gm * cm.transpose();
                            }
                            if (gx) {
                              Eigen::Map<MatR<T>> dcol(col.data(), static_cast<Eigen::Index>(ckk),
                                                       static_cast<Eigen::Index>(plane));
                              dcol.noalias() = wm.transpose() * gm;
                              col2im(col.data(), cin, h, w, k, stride, padding, oh, ow,
                                     nx->grad_buffer().data() + static_cast<std::size_t>(b) * cin * h * w);
                            }
                          }
                        });
}

template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, Tensor<T>& running_mean,
                  Tensor<T>& running_var, bool training, T momentum, T eps) {
  require_rank(x.shape(), 4, "batch_norm");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (gamma.value().size() != static_cast<std::size_t>(c) || running_mean.size() != static_cast<std::size_t>(c))
    throw ShapeError("batch_norm: parameter size does not match channel axis of " + to_string(x.shape()));
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const std::size_t count = plane * n;

  std::vector<T> mu(c), invstd(c);
  const T* xv = x.value().data();
  for (int ch = 0; ch < c; ++ch) {
    if (training) {
      double s = 0.0;
      for (int b = 0; b < n; ++b) {
        const T* p = xv + (static_cast<std::size_t>(b) * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) s += p[i];
      }
      const double m = s / static_cast<double>(count);
      double v = 0.0;
      for (int b = 0; b < n; ++b) {
        const T* p = xv + (static_cast<std::size_t>(b) * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) v += (p[i] - m) * (p[i] - m);
      }
      const double var = v / static_cast<double>(count);
      mu[ch] = static_cast<T>(m);
      invstd[ch] = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
      const double unbiased = count > 1 ? v / static_cast<double>(count - 1) : var;
      running_mean[ch] = static_cast<T>((1.0 - momentum) * running_mean[ch] + momentum * m);
      running_var[ch] = static_cast<T>((1.0 - momentum) * running_var[ch] + momentum * unbiased);
    } else {
      mu[ch] = running_mean[ch];
      invstd[ch] = T(1) / std::sqrt(running_var[ch] + eps);
    }
  }

  Tensor<T> xhat(x.shape());
  Tensor<T> out(x.shape());
  for (int b = 0; b < n; ++b) {
    for (int ch = 0; ch < c; ++ch) {
      const std::size_t off = (static_cast<std::size_t>(b) * c + ch) * plane;
      const T g = gamma.value()[ch], bt = beta.value()[ch];
      for (std::size_t i = 0; i < plane; ++i) {
        const T xh = (xv[off + i] - mu[ch]) * invstd[ch];
        xhat[off + i] = xh;
        out[off + i] = g * xh + bt;
      }
    }
  }

  return make_result<T>(std::move(out), {x, gamma, beta},
                        [=, xhat = std::move(xhat), invstd = std::move(invstd)](Node<T>& self) {
                          auto& nx = self.inputs[0];
                          auto& ng = self.inputs[1];
                          auto& nb = self.inputs[2];
                          const T* gy = self.grad.data();
                          for (int ch = 0; ch < c; ++ch) {
                            T sum_g = T(0), sum_gx = T(0);
                            for (int b = 0; b < n; ++b) {
                              const std::size_t off = (static_cast<std::size_t>(b) * c + ch) * plane;
                              for (std::size_t i = 0; i < plane; ++i) {
                                sum_g += gy[off + i];
                                sum_gx += gy[off + i] * xhat[off + i];
                              }
                            }
                            if (wants_grad(ng)) ng->grad_buffer()[ch] += sum_gx;
                            if (wants_grad(nb)) nb->grad_buffer()[ch] += sum_g;
                            if (!wants_grad(nx)) continue;
                            T* gx = nx->grad_buffer().data();
                            const T gam = ng->value[ch];
                            if (training) {
                              const T scale = gam * invstd[ch] / static_cast<T>(count);
                              const T m = static_cast<T>(count);
                              for (int b = 0; b < n; ++b) {
                                const std::size_t off = (static_cast<std::size_t>(b) * c + ch) * plane;
                                for (std::size_t i = 0; i < plane; ++i)
                                  gx[off + i] += scale * (m * gy[off + i] - sum_g - xhat[off + i] * sum_gx);
                              }
                            } else {
                              const T scale = gam * invstd[ch];
                              for (int b = 0; b < n; ++b) {
                                const std::size_t off = (static_cast<std::size_t>(b) * c + ch) * plane;
                                for (std::size_t i = 0; i < plane; ++i) gx[off + i] += scale * gy[off + i];
                              }
                            }
                          }
                        });
}

template <typename T>
Var<T> max_pool2d(const Var<T>& x) {
  require_rank(x.shape(), 4, "max_pool2d");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int oh = h / 2, ow = w / 2;
  if (oh == 0 || ow == 0) throw ShapeError("max_pool2d: input " + to_string(x.shape()) + " smaller than 2x2");
  Tensor<T> out(Shape{n, c, oh, ow});
  std::vector<std::uint32_t> arg(out.size());
  const T* xv = x.value().data();
  std::size_t o = 0;
  for (int p = 0; p < n * c; ++p) {
    const std::size_t base = static_cast<std::size_t>(p) * h * w;
    for (int i = 0; i < oh; ++i) {
      for (int j = 0; j < ow; ++j, ++o) {
        std::size_t best = base + static_cast<std::size_t>(2 * i) * w + 2 * j;
        for (int di = 0; di < 2; ++di)
          for (int dj = 0; dj < 2; ++dj) {
            const std::size_t idx = base + static_cast<std::size_t>(2 * i + di) * w + 2 * j + dj;
            if (xv[idx] > xv[best]) best = idx;
          }
        out[o] = xv[best];
        arg[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return make_result<T>(std::move(out), {x}, [arg = std::move(arg)](Node<T>& self) {
    auto& in = self.inputs[0];
    if (!wants_grad(in)) return;
    Tensor<T>& g = in->grad_buffer();
    for (std::size_t i = 0; i < arg.size(); ++i) g[arg[i]] += self.grad[i];
  });
}

template <typename T>
Var<T> adaptive_avg_pool2d(const Var<T>& x, int out_h, int out_w) {
  require_rank(x.shape(), 4, "adaptive_avg_pool2d");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  auto lo = [](int i, int in, int out) { return (i * in) / out; };
  auto hi = [](int i, int in, int out) { return ((i + 1) * in + out - 1) / out; };
  Tensor<T> out(Shape{n, c, out_h, out_w});
  const T* xv = x.value().data();
  for (int p = 0; p < n * c; ++p) {
    const std::size_t base = static_cast<std::size_t>(p) * h * w;
    for (int i = 0; i < out_h; ++i)
      for (int j = 0; j < out_w; ++j) {
        const int h0 = lo(i, h, out_h), h1 = hi(i, h, out_h), w0 = lo(j, w, out_w), w1 = hi(j, w, out_w);
        T s = T(0);
        for (int a = h0; a < h1; ++a)
          for (int b = w0; b < w1; ++b) s += xv[base + static_cast<std::size_t>(a) * w + b];
        out[(static_cast<std::size_t>(p) * out_h + i) * out_w + j] = s / static_cast<T>((h1 - h0) * (w1 - w0));
      }
  }
  return make_result<T>(std::move(out), {x}, [=](Node<T>& self) {
    auto& in = self.inputs[0];
    if (!wants_grad(in)) return;
    T* g = in->grad_buffer().data();
    for (int p = 0; p < n * c; ++p) {
      const std::size_t base = static_cast<std::size_t>(p) * h * w;
      for (int i = 0; i < out_h; ++i)
        for (int j = 0; j < out_w; ++j) {
          const int h0 = lo(i, h, out_h), h1 = hi(i, h, out_h), w0 = lo(j, w, out_w), w1 = hi(j, w, out_w);
          const T gv =
              self.grad[(static_cast<std::size_t>(p) * out_h + i) * out_w + j] / static_cast<T>((h1 - h0) * (w1 - w0));
          for (int a = h0; a < h1; ++a)
            for (int b = w0; b < w1; ++b) g[base + static_cast<std::size_t>(a) * w + b] += gv;
        }
    }
  });
}

template <typename T>
Var<T> upsample_nearest2x(const Var<T>& x) {
  require_rank(x.shape(), 4, "upsample_nearest2x");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int oh = 2 * h, ow = 2 * w;
  Tensor<T> out(Shape{n, c, oh, ow});
  const T* xv = x.value().data();
  for (int p = 0; p < n * c; ++p) {
    const T* src = xv + static_cast<std::size_t>(p) * h * w;
    T* dst = out.data() + static_cast<std::size_t>(p) * oh * ow;
    for (int i = 0; i < oh; ++i)
      for (int j = 0; j < ow; ++j) dst[static_cast<std::size_t>(i) * ow + j] = src[static_cast<std::size_t>(i / 2) * w + j / 2];
  }
  return make_result<T>(std::move(out), {x}, [=](Node<T>& self) {
    auto& in = self.inputs[0];
    if (!wants_grad(in)) return;
    T* g = in->grad_buffer().data();
    for (int p = 0; p < n * c; ++p) {
      const T* src = self.grad.data() + static_cast<std::size_t>(p) * oh * ow;
      T* dst = g + static_cast<std::size_t>(p) * h * w;
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) dst[static_cast<std::size_t>(i / 2) * w + j / 2] += src[static_cast<std::size_t>(i) * ow + j];
    }
  });
}

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& xs) {
  if (xs.empty()) throw ShapeError("concat_channels: no inputs");
  const Shape& s0 = xs[0].shape();
  require_rank(s0, 4, "concat_channels");
  const int n = s0[0], h = s0[2], w = s0[3];
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<int> chans;
  int total = 0;
  for (const auto& v : xs) {
    const Shape& s = v.shape();
    require_rank(s, 4, "concat_channels");
    if (s[0] != n || s[2] != h || s[3] != w)
      throw ShapeError("concat_channels: " + to_string(s) + " does not match " + to_string(s0) + " on axes 0,2,3");
    chans.push_back(s[1]);
    total += s[1];
  }
  Tensor<T> out(Shape{n, total, h, w});
  for (int b = 0; b < n; ++b) {
    int offset = 0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
      const T* src = xs[k].value().data() + static_cast<std::size_t>(b) * chans[k] * plane;
      std::copy(src, src + chans[k] * plane, out.data() + (static_cast<std::size_t>(b) * total + offset) * plane);
      offset += chans[k];
    }
  }
  return make_result<T>(std::move(out), xs, [=](Node<T>& self) {
    for (int b = 0; b < n; ++b) {
      int offset = 0;
      for (std::size_t k = 0; k < self.inputs.size(); ++k) {
        auto& in = self.inputs[k];
        if (wants_grad(in)) {
          const T* src = self.grad.data() + (static_cast<std::size_t>(b) * total + offset) * plane;
          T* dst = in->grad_buffer().data() + static_cast<std::size_t>(b) * chans[k] * plane;
          for (std::size_t i = 0; i < chans[k] * plane; ++i) dst[i] += src[i];
        }
        offset += chans[k];
      }
    }
  });
}

template <typename T>
Var<T> slice_channels(const Var<T>& x, int begin, int end) {
  require_rank(x.shape(), 4, "slice_channels");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (begin < 0 || end > c || begin >= end) throw ShapeError("slice_channels: bad range on axis 1 of " + to_string(x.shape()));
  const int k = end - begin;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  Tensor<T> out(Shape{n, k, h, w});
  for (int b = 0; b < n; ++b) {
    const T* src = x.value().data() + (static_cast<std::size_t>(b) * c + begin) * plane;
    std::copy(src, src + k * plane, out.data() + static_cast<std::size_t>(b) * k * plane);
  }
  return make_result<T>(std::move(out), {x}, [=](Node<T>& self) {
    auto& in = self.inputs[0];
    if (!wants_grad(in)) return;
    T* g = in->grad_buffer().data();
    for (int b = 0; b < n; ++b) {
      const T* src = self.grad.data() + static_cast<std::size_t>(b) * k * plane;
      T* dst = g + (static_cast<std::size_t>(b) * c + begin) * plane;
      for (std::size_t i = 0; i < k * plane; ++i) dst[i] += src[i];
    }
  });
}

template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  require_rank(x.shape(), 2, "linear");
  const int n = x.dim(0), f = x.dim(1), o = weight.dim(0);
  if (weight.dim(1) != f) throw ShapeError("linear: input features " + std::to_string(f) + " vs weight " + to_string(weight.shape()));
  Tensor<T> out(Shape{n, o});
  Eigen::Map<const MatR<T>> xm(x.value().data(), n, f);
  Eigen::Map<const MatR<T>> wm(weight.value().data(), o, f);
  Eigen::Map<MatR<T>> om(out.data(), n, o);
  om.noalias() = xm * wm.transpose();
  om.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias.value().data(), o);
  return make_result<T>(std::move(out), {x, weight, bias}, [=](Node<T>& self) {
    auto& nx = self.inputs[0];
    auto& nw = self.inputs[1];
    auto& nb = self.inputs[2];
    Eigen::Map<const MatR<T>> gm(self.grad.data(), n, o);
    if (wants_grad(nx)) {
      Eigen::Map<MatR<T>> gx(nx->grad_buffer().data(), n, f);
      gx.noalias() += gm * Eigen::Map<const MatR<T>>(nw->value.data(), o, f);
    }
    if (wants_grad(nw)) {
      Eigen::Map<MatR<T>> gw(nw->grad_buffer().data(), o, f);
      gw.noalias() += gm.transpose() * Eigen::Map<const MatR<T>>(nx->value.data(), n, f);
    }
    if (wants_grad(nb)) {
      Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> gb(nb->grad_buffer().data(), o);
      gb += gm.colwise().sum();
    }
  });
}

template <typename T>
Var<T> minmax_normalize_channels(const Var<T>& x, T eps) {
  require_rank(x.shape(), 4, "minmax_normalize_channels");
  const int planes = x.dim(0) * x.dim(1);
  const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  std::vector<std::size_t> argmin(planes), argmax(planes);
  std::vector<T> inv_range(planes);
  Tensor<T> out(x.shape());
  const T* xv = x.value().data();
  for (int p = 0; p < planes; ++p) {
    const std::size_t base = static_cast<std::size_t>(p) * plane;
    std::size_t lo = base, hi = base;
    for (std::size_t i = base; i < base + plane; ++i) {
      if (xv[i] < xv[lo]) lo = i;
      if (xv[i] > xv[hi]) hi = i;
    }
    argmin[p] = lo;
    argmax[p] = hi;
    inv_range[p] = T(1) / (xv[hi] - xv[lo] + eps);
    for (std::size_t i = base; i < base + plane; ++i) out[i] = (xv[i] - xv[lo]) * inv_range[p];
  }
  return make_result<T>(std::move(out), {x},
                        [=, argmin = std::move(argmin), argmax = std::move(argmax),
                         inv_range = std::move(inv_range)](Node<T>& self) {
                          auto& in = self.inputs[0];
                          if (!wants_grad(in)) return;
                          Tensor<T>& g = in->grad_buffer();
                          for (int p = 0; p < planes; ++p) {
                            const std::size_t base = static_cast<std::size_t>(p) * plane;
                            const T r = inv_range[p];
                            T to_min = T(0), to_max = T(0);
                            for (std::size_t i = base; i < base + plane; ++i) {
                              const T gy = self.grad[i], y = self.value[i];
                              g[i] += gy * r;
                              to_min -= gy * r * (T(1) - y);
                              to_max -= gy * r * y;
                            }
                            g[argmin[p]] += to_min;
                            g[argmax[p]] += to_max;
                          }
                        });
}

template <typename T>
Tensor<T> step_mask(const Tensor<T>& x, T threshold) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] >= threshold ? T(1) : T(0);
  return out;
}

#define PUGAN_INSTANTIATE_OPS(T)                                                                              \
  template Var<T> add(const Var<T>&, const Var<T>&);                                                          \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                                          \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                                          \
  template Var<T> div(const Var<T>&, const Var<T>&);                                                          \
  template Var<T> add_scalar(const Var<T>&, T);                                                               \
  template Var<T> mul_scalar(const Var<T>&, T);                                                               \
  template Var<T> rsub_scalar(T, const Var<T>&);                                                              \
  template Var<T> abs(const Var<T>&);                                                                         \
  template Var<T> relu(const Var<T>&);                                                                        \
  template Var<T> leaky_relu(const Var<T>&, T);                                                               \
  template Var<T> sigmoid(const Var<T>&);                                                                     \
  template Var<T> softplus(const Var<T>&);                                                                    \
  template Var<T> exp(const Var<T>&);                                                                         \
  template Var<T> log(const Var<T>&);                                                                         \
  template Var<T> clamp(const Var<T>&, T, T);                                                                 \
  template Var<T> broadcast_to(const Var<T>&, const Shape&);                                                  \
  template Var<T> reshape(const Var<T>&, const Shape&);                                                       \
  template Var<T> sum(const Var<T>&);                                                                         \
  template Var<T> mean(const Var<T>&);                                                                        \
  template Var<T> mean_channels(const Var<T>&);                                                               \
  template Var<T> mean_per_sample(const Var<T>&);                                                             \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, int, int);                              \
  template Var<T> batch_norm(const Var<T>&, const Var<T>&, const Var<T>&, Tensor<T>&, Tensor<T>&, bool, T, T); \
  template Var<T> max_pool2d(const Var<T>&);                                                                  \
  template Var<T> adaptive_avg_pool2d(const Var<T>&, int, int);                                               \
  template Var<T> upsample_nearest2x(const Var<T>&);                                                          \
  template Var<T> concat_channels(const std::vector<Var<T>>&);                                                \
  template Var<T> slice_channels(const Var<T>&, int, int);                                                    \
  template Var<T> linear(const Var<T>&, const Var<T>&, const Var<T>&);                                        \
  template Var<T> minmax_normalize_channels(const Var<T>&, T);                                                \
  template Tensor<T> step_mask(const Tensor<T>&, T);

PUGAN_INSTANTIATE_OPS(float)
PUGAN_INSTANTIATE_OPS(double)

}  // namespace ops
}  // namespace pugan
