#include "pugan/discriminators.hpp"

#include <stdexcept>
#include <string>

namespace pugan {

void DiscriminatorConfig::validate() const {
  for (int w : widths)
    if (w <= 0) throw std::invalid_argument("discriminator config: widths must be positive");
  if (widths.back() != 1) throw std::invalid_argument("discriminator config: last width must be 1");
  if (leaky_slope < 0.0 || leaky_slope >= 1.0)
    throw std::invalid_argument("discriminator config: leaky_slope must lie in [0,1)");
}

template <typename T>
PatchDiscriminator<T>::PatchDiscriminator(int in_channels, const DiscriminatorConfig& cfg, nn::Rng& rng)
    : in_channels_(in_channels) {
  cfg.validate();
  const auto act = cfg.leaky_slope > 0.0 ? nn::Activation::kLeakyReLU : nn::Activation::kReLU;
  int in = in_channels;
  for (int i = 0; i < 3; ++i) {
    hidden_.push_back(&this->register_module(
        "layer" + std::to_string(i + 1),
        std::make_unique<nn::ConvBnAct<T>>(in, cfg.widths[i], rng, 2, act, static_cast<T>(cfg.leaky_slope))));
    in = cfg.widths[i];
  }
  head_ = &this->register_module("layer4", std::make_unique<nn::Conv2d<T>>(in, cfg.widths[3], 3, 2, 1, rng));
}

template <typename T>
PatchScores<T> PatchDiscriminator<T>::forward(const Var<T>& x) {
  if (x.shape().size() != 4 || x.dim(1) != in_channels_)
    throw ShapeError("discriminator expects " + std::to_string(in_channels_) + " input channels, got " +
                     to_string(x.shape()));
  Var<T> h = x;
  for (auto* layer : hidden_) h = layer->forward(h);
  PatchScores<T> s;
  s.map = ops::sigmoid(head_->forward(h));
  s.per_sample = ops::mean_per_sample(s.map);
  s.mean = ops::mean(s.map);
  return s;
}

template <typename T>
PatchScores<T> d1_score(PatchDiscriminator<T>& d1, const Var<T>& image) {
  if (image.shape().size() != 4 || image.dim(1) != 3)
    throw ShapeError("d1_score expects an (N,3,H,W) image, got " + to_string(image.shape()));
  return d1.forward(image);
}

template <typename T>
PatchScores<T> d2_score(PatchDiscriminator<T>& d2, const Var<T>& image, const Var<T>& depth) {
  if (image.shape().size() != 4 || image.dim(1) != 3)
    throw ShapeError("d2_score expects an (N,3,H,W) image, got " + to_string(image.shape()));
  if (depth.shape().size() != 4 || depth.dim(1) != 1)
    throw ShapeError("d2_score expects an (N,1,H,W) depth map, got " + to_string(depth.shape()));
  return d2.forward(ops::concat_channels<T>({image, depth}));
}

template class PatchDiscriminator<float>;
template class PatchDiscriminator<double>;
template PatchScores<float> d1_score(PatchDiscriminator<float>&, const Var<float>&);
template PatchScores<double> d1_score(PatchDiscriminator<double>&, const Var<double>&);
template PatchScores<float> d2_score(PatchDiscriminator<float>&, const Var<float>&, const Var<float>&);
template PatchScores<double> d2_score(PatchDiscriminator<double>&, const Var<double>&, const Var<double>&);

}  // namespace pugan
