#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "pugan/discriminators.hpp"
#include "pugan/nn.hpp"

namespace pugan {

/// Weights of the generator objective
///   L = l1 * adv(D1) + l2 * adv(D2) + l3 * L1(E,Y) + l4 * perceptual(E,Y).
struct LossWeights {
  double adversarial_style = 1.0;
  double adversarial_content = 1.0;
  double l1 = 10.0;
  double perceptual = 5.0;

  /// All non-negative and at least one positive.
  void validate() const;
};

class ScoreRangeError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Mean absolute error over every element.
template <typename T>
Var<T> global_similarity_loss(const Var<T>& enhanced, const Var<T>& reference);

/// Fixed, randomly initialised, frozen three-layer feature extractor. The same
/// seed always yields the same weights.
template <typename T>
class PerceptualExtractor : public nn::Module<T> {
 public:
  explicit PerceptualExtractor(std::uint64_t seed = 1234);
  std::vector<Var<T>> features(const Var<T>& image);

 private:
  std::vector<nn::Conv2d<T>*> layers_;
};

/// Mean over the three feature layers of the mean absolute feature difference.
template <typename T>
Var<T> perceptual_loss(PerceptualExtractor<T>& extractor, const Var<T>& enhanced, const Var<T>& reference);

template <typename T>
struct AdversarialLosses {
  Var<T> d_loss;  // -[log s_real + log(1 - s_fake)]
  Var<T> g_loss;  // -log s_fake
};

/// Binary cross-entropy on per-sample patch means, averaged over the batch.
/// Throws ScoreRangeError if a score lies outside [0,1] or is NaN.
template <typename T>
AdversarialLosses<T> adversarial_losses(const PatchScores<T>& real, const PatchScores<T>& fake);

template <typename T>
Var<T> discriminator_loss(const PatchScores<T>& real, const PatchScores<T>& fake);

/// Non-saturating generator loss -log s_fake.
template <typename T>
Var<T> generator_adversarial_loss(const PatchScores<T>& fake);

template <typename T>
struct GeneratorLoss {
  Var<T> adversarial_style;
  Var<T> adversarial_content;
  Var<T> l1;
  Var<T> perceptual;
  Var<T> total;
};

template <typename T>
GeneratorLoss<T> total_generator_loss(const Var<T>& enhanced, const Var<T>& reference, const PatchScores<T>& d1_fake,
                                      const PatchScores<T>& d2_fake, const LossWeights& weights,
                                      PerceptualExtractor<T>& extractor);

extern template class PerceptualExtractor<float>;
extern template class PerceptualExtractor<double>;

}  // namespace pugan
