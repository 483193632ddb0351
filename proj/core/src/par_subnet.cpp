#include "pugan/par_subnet.hpp"

#include <stdexcept>
#include <string>

#include "pugan/physics.hpp"

namespace pugan {

void ParConfig::validate() const {
  if (width <= 0 || hidden <= 0 || pooled <= 0)
    throw std::invalid_argument("par config: width, hidden and pooled must be positive");
}

template <typename T>
AttenuationEstimator<T>::AttenuationEstimator(const ParConfig& cfg, nn::Rng& rng) : cfg_(cfg) {
  const char* names[3] = {"r", "g", "b"};
  const int flat = cfg.width * cfg.pooled * cfg.pooled;
  for (int c = 0; c < 3; ++c) {
    const std::string p = names[c];
    Branch b{};
    b.conv1 = &this->register_module(p + ".conv1", std::make_unique<nn::Conv2d<T>>(1, cfg.width, 3, 1, 1, rng));
    b.conv2 = &this->register_module(p + ".conv2", std::make_unique<nn::Conv2d<T>>(cfg.width, cfg.width, 3, 1, 1, rng));
    b.fc1 = &this->register_module(p + ".fc1", std::make_unique<nn::Linear<T>>(flat, cfg.hidden, rng));
    b.fc2 = &this->register_module(p + ".fc2", std::make_unique<nn::Linear<T>>(cfg.hidden, 1, rng));
    branches_.push_back(b);
  }
}

template <typename T>
Var<T> AttenuationEstimator<T>::branch_forward(const Branch& b, const Var<T>& channel) const {
  auto x = b.conv2->forward(b.conv1->forward(channel));
  x = ops::relu(ops::max_pool2d(x));
  x = ops::adaptive_avg_pool2d(x, cfg_.pooled, cfg_.pooled);
  x = ops::reshape(x, Shape{x.dim(0), cfg_.width * cfg_.pooled * cfg_.pooled});
  x = b.fc2->forward(ops::relu(b.fc1->forward(x)));
  return ops::softplus(x);
}

template <typename T>
Var<T> AttenuationEstimator<T>::forward(const Var<T>& image) {
  const int n = image.dim(0);
  std::vector<Var<T>> per_channel;
  for (int c = 0; c < 3; ++c) {
    auto beta_c = branch_forward(branches_[c], ops::slice_channels(image, c, c + 1));
    per_channel.push_back(ops::reshape(beta_c, Shape{n, 1, 1, 1}));
  }
  return ops::reshape(ops::concat_channels(per_channel), Shape{n, 3});
}

template <typename T>
DepthEstimator<T>::DepthEstimator(const ParConfig& cfg, nn::Rng& rng)
    : stem_(this->register_module("stem", std::make_unique<nn::ConvBnAct<T>>(3, cfg.width, rng))),
      rbd_(this->register_module("rbd", std::make_unique<nn::ResidualBlock<T>>(cfg.width, rng))),
      neck_(this->register_module("neck", std::make_unique<nn::ConvBnAct<T>>(cfg.width, cfg.width, rng))),
      head_(this->register_module("head", std::make_unique<nn::Conv2d<T>>(cfg.width, 1, 3, 1, 1, rng))) {}

template <typename T>
Var<T> DepthEstimator<T>::forward(const Var<T>& image) {
  return ops::sigmoid(head_.forward(neck_.forward(rbd_.forward(stem_.forward(image)))));
}

template <typename T>
TransmissionEstimator<T>::TransmissionEstimator(const ParConfig& cfg, nn::Rng& rng)
    : body_(this->register_module("body", std::make_unique<nn::ConvBnAct<T>>(3, cfg.width, rng))),
      head_(this->register_module("head", std::make_unique<nn::Conv2d<T>>(cfg.width, 3, 3, 1, 1, rng))) {}

template <typename T>
Var<T> TransmissionEstimator<T>::forward(const Var<T>& depth, const Var<T>& beta) {
  const int n = depth.dim(0), h = depth.dim(2), w = depth.dim(3);
  const Shape full{n, 3, h, w};
  auto product = ops::mul(ops::broadcast_to(depth, full), ops::broadcast_to(ops::reshape(beta, Shape{n, 3, 1, 1}), full));
  return ops::sigmoid(head_.forward(body_.forward(product)));
}

template <typename T>
ParSubnet<T>::ParSubnet(const ParConfig& cfg, nn::Rng& rng)
    : cfg_(cfg),
      attenuation_(this->register_module("attenuation", std::make_unique<AttenuationEstimator<T>>(cfg, rng))),
      depth_(this->register_module("depth", std::make_unique<DepthEstimator<T>>(cfg, rng))),
      transmission_(this->register_module("transmission", std::make_unique<TransmissionEstimator<T>>(cfg, rng))) {
  cfg.validate();
}

template <typename T>
ParOutputs<T> ParSubnet<T>::forward(const Var<T>& image) {
  const Shape& s = image.shape();
  if (s.size() != 4 || s[1] != 3) throw ShapeError("par subnet expects an (N,3,H,W) image, got " + to_string(s));
  ParOutputs<T> out;
  out.beta = attenuation_.forward(image);
  out.d1 = depth_.forward(image);
  out.t = transmission_.forward(out.d1, out.beta);
  out.d2 = physics::depth_from_transmission(out.t, out.beta);
  out.j_prime = physics::invert_color_enhanced(image, out.t);
  return out;
}

template <typename T>
ParLossTerms<T> par_loss_terms(const Var<T>& d1, const Var<T>& d2, const Var<T>& depth_gt, const Var<T>& beta,
                               const Var<T>& beta_gt) {
  require_same_shape(d1.shape(), depth_gt.shape(), "par_loss d1");
  require_same_shape(d2.shape(), depth_gt.shape(), "par_loss d2");
  require_same_shape(beta.shape(), beta_gt.shape(), "par_loss beta");
  if (depth_gt.value().empty()) throw ShapeError("par_loss: empty depth map");
  ParLossTerms<T> terms;
  // With equal per-sample sizes, a global mean equals the batch average of per-sample means.
  terms.depth_direct = ops::mean(ops::abs(ops::sub(depth_gt, d1)));
  terms.depth_recovered = ops::mean(ops::abs(ops::sub(depth_gt, d2)));
  terms.attenuation = ops::mean(ops::abs(ops::sub(beta_gt, beta)));
  terms.total = ops::add(ops::add(terms.depth_direct, terms.depth_recovered), terms.attenuation);
  return terms;
}

template class AttenuationEstimator<float>;
template class AttenuationEstimator<double>;
template class DepthEstimator<float>;
template class DepthEstimator<double>;
template class TransmissionEstimator<float>;
template class TransmissionEstimator<double>;
template class ParSubnet<float>;
template class ParSubnet<double>;

template ParLossTerms<float> par_loss_terms(const Var<float>&, const Var<float>&, const Var<float>&, const Var<float>&,
                                            const Var<float>&);
template ParLossTerms<double> par_loss_terms(const Var<double>&, const Var<double>&, const Var<double>&,
                                             const Var<double>&, const Var<double>&);

}  // namespace pugan
