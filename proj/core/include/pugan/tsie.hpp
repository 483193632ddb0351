#pragma once

#include <array>
#include <memory>
#include <vector>

#include "pugan/nn.hpp"

namespace pugan {

inline constexpr int kPyramidLevels = 5;

struct TsieConfig {
  /// Channel width of encoder level k (k = 1..5).
  std::array<int, kPyramidLevels> widths{32, 64, 128, 256, 512};
  /// Threshold of both degradation-quantization step masks, in (0,1).
  double dq_alpha = 0.7;

  void validate() const;
};

/// Five encoder feature maps; level k has spatial size (H/2^k, W/2^k).
template <typename T>
using FeaturePyramid = std::vector<Var<T>>;

/// One encoder stream: five [conv 3x3 -> maxpool -> ReLU -> residual] blocks.
template <typename T>
class Encoder : public nn::Module<T> {
 public:
  Encoder(const TsieConfig& cfg, nn::Rng& rng);
  /// Throws ShapeError unless H and W are positive multiples of 32.
  FeaturePyramid<T> forward(const Var<T>& image);

 private:
  struct Level {
    nn::Conv2d<T>* conv;
    nn::ResidualBlock<T>* res;
  };
  std::vector<Level> levels_;
};

/// Degradation quantization at one pyramid level.
template <typename T>
class DqLevel : public nn::Module<T> {
 public:
  DqLevel(int channels, nn::Rng& rng);

  /// f = minmax(cbr(|e_t - e_m|)) per channel; returns f * step(f - alpha).
  Var<T> difference_mask(const Var<T>& e_top, const Var<T>& e_mid, T alpha);
  /// sigmoid(conv(cbr(t_k + dif_k))), with t_k broadcast over channels.
  Var<T> weights(const Var<T>& dif, const Var<T>& t_mask);

 private:
  nn::ConvBnAct<T>& diff_cbr_;
  nn::ConvBnAct<T>& weight_cbr_;
  nn::Conv2d<T>& weight_conv_;
};

/// x * step(x - alpha); the step is a constant mask, so no gradient flows through it.
template <typename T>
Var<T> dq_threshold(const Var<T>& x, T alpha);

/// g = 1 - maxpool^level(mean_c t); returns g * step(g - alpha) as (N,1,H/2^level,W/2^level).
template <typename T>
Var<T> dq_transmission_mask(const Var<T>& transmission, int level, T alpha);

/// e + e * w
template <typename T>
Var<T> dq_apply(const Var<T>& e_top, const Var<T>& weights);

/// Mirrors the encoder: de_k = res(cat[cbr(up(de_{k+1})), e_k]) and E = sigmoid(conv(cbr(up(de_1)))).
template <typename T>
class Decoder : public nn::Module<T> {
 public:
  Decoder(const TsieConfig& cfg, nn::Rng& rng);
  Var<T> forward(const FeaturePyramid<T>& enhanced);

 private:
  struct Level {
    nn::ConvBnAct<T>* up_cbr;  // null at the deepest level
    nn::ResidualBlock<T>* res;
  };
  std::vector<Level> levels_;
  nn::ConvBnAct<T>* head_cbr_;
  nn::Conv2d<T>* head_conv_;
};

/// Intermediate tensors of one generator pass, for inspection in tests.
template <typename T>
struct GeneratorTrace {
  FeaturePyramid<T> top;
  FeaturePyramid<T> middle;
  std::vector<Var<T>> difference_masks;
  std::vector<Var<T>> transmission_masks;
  std::vector<Var<T>> weights;
  FeaturePyramid<T> enhanced;
};

/// Two-stream interaction enhancement network.
template <typename T>
class Generator : public nn::Module<T> {
 public:
  Generator(const TsieConfig& cfg, nn::Rng& rng);

  /// E from the raw image, the estimated transmission and the color-enhanced image.
  Var<T> forward(const Var<T>& image, const Var<T>& transmission, const Var<T>& j_prime,
                 GeneratorTrace<T>* trace = nullptr);

  Encoder<T>& top() { return top_; }
  Encoder<T>& middle() { return middle_; }
  DqLevel<T>& dq(int level) { return *dq_.at(level - 1); }
  Decoder<T>& decoder() { return decoder_; }
  const TsieConfig& config() const { return cfg_; }

 private:
  TsieConfig cfg_;
  Encoder<T>& top_;
  Encoder<T>& middle_;
  std::vector<DqLevel<T>*> dq_;
  Decoder<T>& decoder_;
};

extern template class Encoder<float>;
extern template class Encoder<double>;
extern template class DqLevel<float>;
extern template class DqLevel<double>;
extern template class Decoder<float>;
extern template class Decoder<double>;
extern template class Generator<float>;
extern template class Generator<double>;

}  // namespace pugan
