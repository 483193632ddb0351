#pragma once

#include <memory>
#include <vector>

#include "pugan/nn.hpp"

namespace pugan {

struct ParConfig {
  /// Channel width of every convolution inside the three estimators.
  int width = 32;
  /// Hidden size of the first linear layer in the attenuation head.
  int hidden = 64;
  /// Spatial size of the adaptive pooling in front of the attenuation head.
  int pooled = 4;

  void validate() const;
};

/// Everything the parameter-estimation network produces for one batch.
template <typename T>
struct ParOutputs {
  Var<T> beta;     // (N,3), > 0
  Var<T> d1;       // (N,1,H,W), directly estimated depth in (0,1)
  Var<T> t;        // (N,3,H,W), transmission in (0,1)
  Var<T> d2;       // (N,1,H,W), depth recovered from t and beta
  Var<T> j_prime;  // (N,3,H,W), color-enhanced image I / t
};

/// beta^c = softplus(linear(relu(linear(pool(relu(maxpool(conv(conv(I^c))))))))),
/// one independent branch per color channel.
template <typename T>
class AttenuationEstimator : public nn::Module<T> {
 public:
  AttenuationEstimator(const ParConfig& cfg, nn::Rng& rng);
  /// (N,3,H,W) -> (N,3)
  Var<T> forward(const Var<T>& image);

 private:
  struct Branch {
    nn::Conv2d<T>* conv1;
    nn::Conv2d<T>* conv2;
    nn::Linear<T>* fc1;
    nn::Linear<T>* fc2;
  };
  Var<T> branch_forward(const Branch& b, const Var<T>& channel) const;

  ParConfig cfg_;
  std::vector<Branch> branches_;
};

/// d1 = sigmoid(conv(cbr(residual(cbr(I))))).
template <typename T>
class DepthEstimator : public nn::Module<T> {
 public:
  DepthEstimator(const ParConfig& cfg, nn::Rng& rng);
  Var<T> forward(const Var<T>& image);

 private:
  nn::ConvBnAct<T>& stem_;
  nn::ResidualBlock<T>& rbd_;
  nn::ConvBnAct<T>& neck_;
  nn::Conv2d<T>& head_;
};

/// t = sigmoid(conv(cbr(d1 * beta))), where d1 * beta is the 3-channel product map.
template <typename T>
class TransmissionEstimator : public nn::Module<T> {
 public:
  TransmissionEstimator(const ParConfig& cfg, nn::Rng& rng);
  Var<T> forward(const Var<T>& depth, const Var<T>& beta);

 private:
  nn::ConvBnAct<T>& body_;
  nn::Conv2d<T>& head_;
};

template <typename T>
class ParSubnet : public nn::Module<T> {
 public:
  explicit ParSubnet(const ParConfig& cfg, nn::Rng& rng);

  ParOutputs<T> forward(const Var<T>& image);

  AttenuationEstimator<T>& attenuation() { return attenuation_; }
  DepthEstimator<T>& depth() { return depth_; }
  TransmissionEstimator<T>& transmission() { return transmission_; }
  const ParConfig& config() const { return cfg_; }

 private:
  ParConfig cfg_;
  AttenuationEstimator<T>& attenuation_;
  DepthEstimator<T>& depth_;
  TransmissionEstimator<T>& transmission_;
};

/// Individual terms of the parameter-estimation loss, each averaged over the batch.
template <typename T>
struct ParLossTerms {
  Var<T> depth_direct;     // mean |d - d1|
  Var<T> depth_recovered;  // mean |d - d2|
  Var<T> attenuation;      // mean over channels of |beta_gt - beta|
  Var<T> total;
};

/// L = mean|d - d1| + mean|d - d2| + (1/3) sum_c |beta_gt^c - beta^c|, averaged over the batch.
template <typename T>
ParLossTerms<T> par_loss_terms(const Var<T>& d1, const Var<T>& d2, const Var<T>& depth_gt, const Var<T>& beta,
                               const Var<T>& beta_gt);

template <typename T>
Var<T> par_loss(const Var<T>& d1, const Var<T>& d2, const Var<T>& depth_gt, const Var<T>& beta,
                const Var<T>& beta_gt) {
  return par_loss_terms(d1, d2, depth_gt, beta, beta_gt).total;
}

extern template class AttenuationEstimator<float>;
extern template class AttenuationEstimator<double>;
extern template class DepthEstimator<float>;
extern template class DepthEstimator<double>;
extern template class TransmissionEstimator<float>;
extern template class TransmissionEstimator<double>;
extern template class ParSubnet<float>;
extern template class ParSubnet<double>;

}  // namespace pugan
