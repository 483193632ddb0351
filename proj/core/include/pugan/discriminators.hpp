#pragma once

#include <array>
#include <vector>

#include "pugan/nn.hpp"

namespace pugan {

struct DiscriminatorConfig {
  /// Output channels of the four stride-2 convolutions; the last must be 1.
  std::array<int, 4> widths{64, 128, 256, 1};
  /// Negative slope of the hidden activations. 0 gives plain ReLU.
  double leaky_slope = 0.2;

  void validate() const;
};

/// Per-patch real/fake probabilities.
template <typename T>
struct PatchScores {
  Var<T> map;         // (N,1,ceil(H/16),ceil(W/16)), values in (0,1)
  Var<T> per_sample;  // (N), mean of each sample's map
  Var<T> mean;        // scalar, mean over the whole batch
};

/// Markovian patch discriminator: four 3x3 stride-2 convolutions with batch
/// norm and (leaky) ReLU between them and a sigmoid head.
template <typename T>
class PatchDiscriminator : public nn::Module<T> {
 public:
  PatchDiscriminator(int in_channels, const DiscriminatorConfig& cfg, nn::Rng& rng);

  PatchScores<T> forward(const Var<T>& x);
  int in_channels() const { return in_channels_; }

 private:
  int in_channels_;
  std::vector<nn::ConvBnAct<T>*> hidden_;
  nn::Conv2d<T>* head_;
};

/// Style discriminator: judges the image alone.
template <typename T>
PatchScores<T> d1_score(PatchDiscriminator<T>& d1, const Var<T>& image);

/// Content discriminator: judges the image with its depth map as a 4th channel.
template <typename T>
PatchScores<T> d2_score(PatchDiscriminator<T>& d2, const Var<T>& image, const Var<T>& depth);

extern template class PatchDiscriminator<float>;
extern template class PatchDiscriminator<double>;

}  // namespace pugan
