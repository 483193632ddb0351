#pragma once

#include <vector>

#include "pugan/autograd.hpp"

// Differentiable tensor operations. Each returns a Var recorded on the tape
// (see autograd.hpp). Binary elementwise ops require identical shapes; use
// broadcast_to() to expand singleton axes first.
namespace pugan::ops {

template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> div(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> add_scalar(const Var<T>& x, T s);
template <typename T> Var<T> mul_scalar(const Var<T>& x, T s);
/// s - x
template <typename T> Var<T> rsub_scalar(T s, const Var<T>& x);

template <typename T> Var<T> abs(const Var<T>& x);
template <typename T> Var<T> relu(const Var<T>& x);
template <typename T> Var<T> leaky_relu(const Var<T>& x, T slope);
template <typename T> Var<T> sigmoid(const Var<T>& x);
template <typename T> Var<T> softplus(const Var<T>& x);
template <typename T> Var<T> exp(const Var<T>& x);
template <typename T> Var<T> log(const Var<T>& x);
/// Gradient is zero where the input was clipped.
template <typename T> Var<T> clamp(const Var<T>& x, T lo, T hi);

/// Expands axes of size 1 to `shape` (same rank). Backward sums over expanded axes.
template <typename T> Var<T> broadcast_to(const Var<T>& x, const Shape& shape);
template <typename T> Var<T> reshape(const Var<T>& x, const Shape& shape);

template <typename T> Var<T> sum(const Var<T>& x);
template <typename T> Var<T> mean(const Var<T>& x);
/// (N,C,H,W) -> (N,1,H,W)
template <typename T> Var<T> mean_channels(const Var<T>& x);
/// Per-sample mean over every non-batch axis: (N,...) -> (N)
template <typename T> Var<T> mean_per_sample(const Var<T>& x);

/// 2-D convolution, NCHW input, weight (Cout,Cin,K,K), optional bias (Cout).
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride, int padding);

/// Batch normalisation over (N,H,W) per channel. In training mode batch
/// statistics are used and the running buffers are updated in place.
template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, Tensor<T>& running_mean,
                  Tensor<T>& running_var, bool training, T momentum, T eps);

/// 2x2 max pooling with stride 2 (floor on odd sizes).
template <typename T> Var<T> max_pool2d(const Var<T>& x);
template <typename T> Var<T> adaptive_avg_pool2d(const Var<T>& x, int out_h, int out_w);
/// Nearest-neighbour x2 upsampling.
template <typename T> Var<T> upsample_nearest2x(const Var<T>& x);

template <typename T> Var<T> concat_channels(const std::vector<Var<T>>& xs);
/// Channels [begin, end) of an NCHW tensor.
template <typename T> Var<T> slice_channels(const Var<T>& x, int begin, int end);

/// x (N,F), weight (O,F), bias (O) -> (N,O)
template <typename T> Var<T> linear(const Var<T>& x, const Var<T>& weight, const Var<T>& bias);

/// Per (sample, channel) min-max rescaling: (x - min) / (max - min + eps).
template <typename T> Var<T> minmax_normalize_channels(const Var<T>& x, T eps);

/// 1 where x >= threshold, else 0. Not differentiable; use as a constant mask.
template <typename T> Tensor<T> step_mask(const Tensor<T>& x, T threshold);

}  // namespace pugan::ops
