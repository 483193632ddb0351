#include "pugan/losses.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace pugan {

void LossWeights::validate() const {
  const double w[4] = {adversarial_style, adversarial_content, l1, perceptual};
  bool any = false;
  for (double v : w) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("loss weights must be finite and >= 0");
    any = any || v > 0.0;
  }
  if (!any) throw std::invalid_argument("loss weights: at least one weight must be > 0");
}

template <typename T>
Var<T> global_similarity_loss(const Var<T>& enhanced, const Var<T>& reference) {
  require_same_shape(enhanced.shape(), reference.shape(), "global_similarity_loss");
  return ops::mean(ops::abs(ops::sub(enhanced, reference)));
}

template <typename T>
PerceptualExtractor<T>::PerceptualExtractor(std::uint64_t seed) {
  nn::Rng rng(seed);
  layers_.push_back(&this->register_module("conv1", std::make_unique<nn::Conv2d<T>>(3, 16, 3, 1, 1, rng)));
  layers_.push_back(&this->register_module("conv2", std::make_unique<nn::Conv2d<T>>(16, 32, 3, 2, 1, rng)));
  layers_.push_back(&this->register_module("conv3", std::make_unique<nn::Conv2d<T>>(32, 32, 3, 1, 1, rng)));
  this->set_requires_grad(false);
  this->eval();
}

template <typename T>
std::vector<Var<T>> PerceptualExtractor<T>::features(const Var<T>& image) {
  std::vector<Var<T>> out;
  Var<T> x = image;
  for (auto* conv : layers_) {
    x = ops::relu(conv->forward(x));
    out.push_back(x);
  }
  return out;
}

template <typename T>
Var<T> perceptual_loss(PerceptualExtractor<T>& extractor, const Var<T>& enhanced, const Var<T>& reference) {
  require_same_shape(enhanced.shape(), reference.shape(), "perceptual_loss");
  auto fe = extractor.features(enhanced);
  auto fr = extractor.features(reference);
  Var<T> total = ops::mean(ops::abs(ops::sub(fe[0], fr[0])));
  for (std::size_t i = 1; i < fe.size(); ++i) total = ops::add(total, ops::mean(ops::abs(ops::sub(fe[i], fr[i]))));
  return ops::mul_scalar(total, T(1) / static_cast<T>(fe.size()));
}

namespace {

template <typename T>
Var<T> checked_scores(const PatchScores<T>& s, const char* which) {
  for (T v : s.per_sample.value().values())
    if (!(v >= T(0) && v <= T(1)))
      throw ScoreRangeError(std::string(which) + " discriminator score " + std::to_string(v) + " lies outside (0,1)");
  // Float sigmoids can round to exactly 0 or 1; keep the logarithms finite.
  const T eps = T(10) * std::numeric_limits<T>::epsilon();
  return ops::clamp(s.per_sample, eps, T(1) - eps);
}

}  // namespace

template <typename T>
Var<T> discriminator_loss(const PatchScores<T>& real, const PatchScores<T>& fake) {
  auto sr = checked_scores(real, "real");
  auto sf = checked_scores(fake, "fake");
  auto per_sample = ops::add(ops::log(sr), ops::log(ops::rsub_scalar(T(1), sf)));
  return ops::mul_scalar(ops::mean(per_sample), T(-1));
}

template <typename T>
Var<T> generator_adversarial_loss(const PatchScores<T>& fake) {
  return ops::mul_scalar(ops::mean(ops::log(checked_scores(fake, "fake"))), T(-1));
}

template <typename T>
AdversarialLosses<T> adversarial_losses(const PatchScores<T>& real, const PatchScores<T>& fake) {
  return {discriminator_loss(real, fake), generator_adversarial_loss(fake)};
}

template <typename T>
GeneratorLoss<T> total_generator_loss(const Var<T>& enhanced, const Var<T>& reference, const PatchScores<T>& d1_fake,
                                      const PatchScores<T>& d2_fake, const LossWeights& weights,
                                      PerceptualExtractor<T>& extractor) {
  weights.validate();
  GeneratorLoss<T> out;
  out.adversarial_style = generator_adversarial_loss(d1_fake);
  out.adversarial_content = generator_adversarial_loss(d2_fake);
  out.l1 = global_similarity_loss(enhanced, reference);
  out.perceptual = perceptual_loss(extractor, enhanced, reference);
  out.total = ops::add(
      ops::add(ops::mul_scalar(out.adversarial_style, static_cast<T>(weights.adversarial_style)),
               ops::mul_scalar(out.adversarial_content, static_cast<T>(weights.adversarial_content))),
      ops::add(ops::mul_scalar(out.l1, static_cast<T>(weights.l1)),
               ops::mul_scalar(out.perceptual, static_cast<T>(weights.perceptual))));
  return out;
}

template class PerceptualExtractor<float>;
template class PerceptualExtractor<double>;

#define PUGAN_INSTANTIATE_LOSSES(T)                                                                            \
  template Var<T> global_similarity_loss(const Var<T>&, const Var<T>&);                                        \
  template Var<T> perceptual_loss(PerceptualExtractor<T>&, const Var<T>&, const Var<T>&);                      \
  template Var<T> discriminator_loss(const PatchScores<T>&, const PatchScores<T>&);                            \
  template Var<T> generator_adversarial_loss(const PatchScores<T>&);                                           \
  template AdversarialLosses<T> adversarial_losses(const PatchScores<T>&, const PatchScores<T>&);              \
  template GeneratorLoss<T> total_generator_loss(const Var<T>&, const Var<T>&, const PatchScores<T>&,          \
                                                 const PatchScores<T>&, const LossWeights&, PerceptualExtractor<T>&);

PUGAN_INSTANTIATE_LOSSES(float)
PUGAN_INSTANTIATE_LOSSES(double)

}  // namespace pugan
