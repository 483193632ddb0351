#include "pugan/model.hpp"

namespace pugan {

template <typename T>
PuganModel<T>::PuganModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  nn::Rng rng(seed);
  par_ = std::make_unique<ParSubnet<T>>(cfg_.par, rng);
  gen_ = std::make_unique<Generator<T>>(cfg_.tsie, rng);
  d1_ = std::make_unique<PatchDiscriminator<T>>(3, cfg_.discriminator, rng);
  d2_ = std::make_unique<PatchDiscriminator<T>>(4, cfg_.discriminator, rng);
  perceptual_ = std::make_unique<PerceptualExtractor<T>>(cfg_.perceptual_seed);
}

template <typename T>
typename PuganModel<T>::Enhancement PuganModel<T>::enhance(const Tensor<T>& image) {
  NoGradGuard no_grad;
  par_->eval();
  gen_->eval();
  Var<T> x(image);
  Enhancement out;
  out.par = par_->forward(x);
  out.image = gen_->forward(x, out.par.t, out.par.j_prime);
  return out;
}

template <typename T>
void PuganModel<T>::export_to(Checkpoint& ckpt) {
  export_module(*par_, kParPrefix, ckpt);
  export_module(*gen_, kGeneratorPrefix, ckpt);
  export_module(*d1_, kStyleDiscriminatorPrefix, ckpt);
  export_module(*d2_, kContentDiscriminatorPrefix, ckpt);
}

template <typename T>
void PuganModel<T>::import_from(const Checkpoint& ckpt) {
  ckpt.require_stage(Stage::kPugan, "the full model");
  import_module(*par_, kParPrefix, ckpt);
  import_module(*gen_, kGeneratorPrefix, ckpt);
  import_module(*d1_, kStyleDiscriminatorPrefix, ckpt);
  import_module(*d2_, kContentDiscriminatorPrefix, ckpt);
}

template class PuganModel<float>;
template class PuganModel<double>;

}  // namespace pugan
