#include "pugan/tsie.hpp"

#include <stdexcept>
#include <string>

namespace pugan {

void TsieConfig::validate() const {
  for (int w : widths)
    if (w <= 0) throw std::invalid_argument("tsie config: encoder widths must be positive");
  if (!(dq_alpha > 0.0 && dq_alpha < 1.0))
    throw std::invalid_argument("tsie config: dq_alpha must lie in (0,1), got " + std::to_string(dq_alpha));
}

template <typename T>
Encoder<T>::Encoder(const TsieConfig& cfg, nn::Rng& rng) {
  int in = 3;
  for (int k = 0; k < kPyramidLevels; ++k) {
    const std::string p = "level" + std::to_string(k + 1);
    const int w = cfg.widths[k];
    Level l{};
    l.conv = &this->register_module(p + ".conv", std::make_unique<nn::Conv2d<T>>(in, w, 3, 1, 1, rng));
    l.res = &this->register_module(p + ".res", std::make_unique<nn::ResidualBlock<T>>(w, rng));
    levels_.push_back(l);
    in = w;
  }
}

template <typename T>
FeaturePyramid<T> Encoder<T>::forward(const Var<T>& image) {
  const Shape& s = image.shape();
  constexpr int kStride = 1 << kPyramidLevels;
  if (s.size() != 4 || s[1] != 3) throw ShapeError("encoder expects an (N,3,H,W) image, got " + to_string(s));
  if (s[2] <= 0 || s[3] <= 0 || s[2] % kStride != 0 || s[3] % kStride != 0)
    throw ShapeError("encoder: spatial size " + std::to_string(s[2]) + "x" + std::to_string(s[3]) +
                     " is not divisible by " + std::to_string(kStride) + " (axes 2,3)");
  FeaturePyramid<T> out;
  Var<T> x = image;
  for (auto& l : levels_) {
    x = l.res->forward(ops::relu(ops::max_pool2d(l.conv->forward(x))));
    out.push_back(x);
  }
  return out;
}

template <typename T>
DqLevel<T>::DqLevel(int channels, nn::Rng& rng)
    : diff_cbr_(this->register_module("diff", std::make_unique<nn::ConvBnAct<T>>(channels, channels, rng))),
      weight_cbr_(this->register_module("weight_cbr", std::make_unique<nn::ConvBnAct<T>>(channels, channels, rng))),
      weight_conv_(
          this->register_module("weight_conv", std::make_unique<nn::Conv2d<T>>(channels, channels, 3, 1, 1, rng))) {}

template <typename T>
Var<T> DqLevel<T>::difference_mask(const Var<T>& e_top, const Var<T>& e_mid, T alpha) {
  require_same_shape(e_top.shape(), e_mid.shape(), "dq_difference_mask");
  auto f = diff_cbr_.forward(ops::abs(ops::sub(e_top, e_mid)));
  return dq_threshold(ops::minmax_normalize_channels(f, T(1e-6)), alpha);
}

template <typename T>
Var<T> DqLevel<T>::weights(const Var<T>& dif, const Var<T>& t_mask) {
  const Shape& s = dif.shape();
  if (t_mask.dim(0) != s[0] || t_mask.dim(2) != s[2] || t_mask.dim(3) != s[3])
    throw ShapeError("dq_weights: transmission mask " + to_string(t_mask.shape()) + " does not match " + to_string(s) +
                     " on axes 0,2,3");
  auto x = ops::add(ops::broadcast_to(t_mask, s), dif);
  return ops::sigmoid(weight_conv_.forward(weight_cbr_.forward(x)));
}

template <typename T>
Var<T> dq_threshold(const Var<T>& x, T alpha) {
  return ops::mul(x, Var<T>(ops::step_mask(x.value(), alpha)));
}

template <typename T>
Var<T> dq_transmission_mask(const Var<T>& transmission, int level, T alpha) {
  if (level < 1 || level > kPyramidLevels)
    throw std::out_of_range("dq_transmission_mask: level must be in [1,5], got " + std::to_string(level));
  auto pooled = ops::mean_channels(transmission);
  for (int i = 0; i < level; ++i) pooled = ops::max_pool2d(pooled);
  return dq_threshold(ops::rsub_scalar(T(1), pooled), alpha);
}

template <typename T>
Var<T> dq_apply(const Var<T>& e_top, const Var<T>& weights) {
  require_same_shape(e_top.shape(), weights.shape(), "dq_apply");
  return ops::add(e_top, ops::mul(e_top, weights));
}

template <typename T>
Decoder<T>::Decoder(const TsieConfig& cfg, nn::Rng& rng) {
  levels_.resize(kPyramidLevels);
  // Deepest level first: de_5 = res(e_5).
  const int deepest = kPyramidLevels - 1;
  levels_[deepest].up_cbr = nullptr;
  levels_[deepest].res = &this->register_module("level5.res", std::make_unique<nn::ResidualBlock<T>>(cfg.widths[deepest], rng));
  int below = cfg.widths[deepest];
  for (int k = deepest - 1; k >= 0; --k) {
    const std::string p = "level" + std::to_string(k + 1);
    const int w = cfg.widths[k];
    levels_[k].up_cbr = &this->register_module(p + ".up", std::make_unique<nn::ConvBnAct<T>>(below, w, rng));
    levels_[k].res = &this->register_module(p + ".res", std::make_unique<nn::ResidualBlock<T>>(2 * w, rng));
    below = 2 * w;
  }
  head_cbr_ = &this->register_module("head.cbr", std::make_unique<nn::ConvBnAct<T>>(below, cfg.widths[0], rng));
  head_conv_ = &this->register_module("head.conv", std::make_unique<nn::Conv2d<T>>(cfg.widths[0], 3, 3, 1, 1, rng));
}

template <typename T>
Var<T> Decoder<T>::forward(const FeaturePyramid<T>& enhanced) {
  if (enhanced.size() != static_cast<std::size_t>(kPyramidLevels))
    throw ShapeError("decoder expects " + std::to_string(kPyramidLevels) + " pyramid levels, got " +
                     std::to_string(enhanced.size()));
  for (std::size_t k = 1; k < enhanced.size(); ++k)
    if (enhanced[k].dim(2) * 2 != enhanced[k - 1].dim(2) || enhanced[k].dim(3) * 2 != enhanced[k - 1].dim(3))
      throw ShapeError("decoder: pyramid level " + std::to_string(k + 1) + " is not half the size of level " +
                       std::to_string(k));
  Var<T> de = levels_[kPyramidLevels - 1].res->forward(enhanced[kPyramidLevels - 1]);
  for (int k = kPyramidLevels - 2; k >= 0; --k) {
    auto up = levels_[k].up_cbr->forward(ops::upsample_nearest2x(de));
    de = levels_[k].res->forward(ops::concat_channels<T>({up, enhanced[k]}));
  }
  return ops::sigmoid(head_conv_->forward(head_cbr_->forward(ops::upsample_nearest2x(de))));
}

template <typename T>
Generator<T>::Generator(const TsieConfig& cfg, nn::Rng& rng)
    : cfg_(cfg),
      top_(this->register_module("top", std::make_unique<Encoder<T>>(cfg, rng))),
      middle_(this->register_module("middle", std::make_unique<Encoder<T>>(cfg, rng))),
      decoder_(this->register_module("decoder", std::make_unique<Decoder<T>>(cfg, rng))) {
  cfg.validate();
  for (int k = 0; k < kPyramidLevels; ++k)
    dq_.push_back(&this->register_module("dq" + std::to_string(k + 1),
                                         std::make_unique<DqLevel<T>>(cfg.widths[k], rng)));
}

template <typename T>
Var<T> Generator<T>::forward(const Var<T>& image, const Var<T>& transmission, const Var<T>& j_prime,
                             GeneratorTrace<T>* trace) {
  require_same_shape(image.shape(), j_prime.shape(), "generator input vs color-enhanced image");
  require_same_shape(image.shape(), transmission.shape(), "generator input vs transmission");
  const T alpha = static_cast<T>(cfg_.dq_alpha);
  auto top = top_.forward(image);
  auto mid = middle_.forward(j_prime);
  FeaturePyramid<T> enhanced;
  for (int k = 0; k < kPyramidLevels; ++k) {
    auto dif = dq_[k]->difference_mask(top[k], mid[k], alpha);
    auto t_mask = dq_transmission_mask(transmission, k + 1, alpha);
    auto w = dq_[k]->weights(dif, t_mask);
    enhanced.push_back(dq_apply(top[k], w));
    if (trace) {
      trace->difference_masks.push_back(dif);
      trace->transmission_masks.push_back(t_mask);
      trace->weights.push_back(w);
    }
  }
  if (trace) {
    trace->top = top;
    trace->middle = mid;
    trace->enhanced = enhanced;
  }
  return decoder_.forward(enhanced);
}

template class Encoder<float>;
template class Encoder<double>;
template class DqLevel<float>;
template class DqLevel<double>;
template class Decoder<float>;
template class Decoder<double>;
template class Generator<float>;
template class Generator<double>;

template Var<float> dq_threshold(const Var<float>&, float);
template Var<double> dq_threshold(const Var<double>&, double);
template Var<float> dq_transmission_mask(const Var<float>&, int, float);
template Var<double> dq_transmission_mask(const Var<double>&, int, double);
template Var<float> dq_apply(const Var<float>&, const Var<float>&);
template Var<double> dq_apply(const Var<double>&, const Var<double>&);

}  // namespace pugan
