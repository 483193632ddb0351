#pragma once

#include <cstdint>
#include <memory>

#include "pugan/checkpoint.hpp"
#include "pugan/config.hpp"
#include "pugan/discriminators.hpp"
#include "pugan/losses.hpp"
#include "pugan/par_subnet.hpp"
#include "pugan/tsie.hpp"

namespace pugan {

/// Checkpoint name prefixes of the learned modules.
inline constexpr const char* kParPrefix = "par";
inline constexpr const char* kGeneratorPrefix = "gen";
inline constexpr const char* kStyleDiscriminatorPrefix = "d1";
inline constexpr const char* kContentDiscriminatorPrefix = "d2";

/// Every module of the full model, initialised from one seed.
template <typename T>
class PuganModel {
 public:
  PuganModel(const ModelConfig& cfg, std::uint64_t seed);

  ParSubnet<T>& par() { return *par_; }
  Generator<T>& generator() { return *gen_; }
  PatchDiscriminator<T>& style_discriminator() { return *d1_; }
  PatchDiscriminator<T>& content_discriminator() { return *d2_; }
  PerceptualExtractor<T>& perceptual() { return *perceptual_; }
  const ModelConfig& config() const { return cfg_; }

  struct Enhancement {
    ParOutputs<T> par;
    Var<T> image;
  };
  /// Inference path: every module in eval mode, no graph recorded.
  Enhancement enhance(const Tensor<T>& image);

  /// All four learned modules under their prefixes.
  void export_to(Checkpoint& ckpt);
  /// Requires a pugan-stage checkpoint.
  void import_from(const Checkpoint& ckpt);

 private:
  ModelConfig cfg_;
  std::unique_ptr<ParSubnet<T>> par_;
  std::unique_ptr<Generator<T>> gen_;
  std::unique_ptr<PatchDiscriminator<T>> d1_;
  std::unique_ptr<PatchDiscriminator<T>> d2_;
  std::unique_ptr<PerceptualExtractor<T>> perceptual_;
};

extern template class PuganModel<float>;
extern template class PuganModel<double>;

}  // namespace pugan
