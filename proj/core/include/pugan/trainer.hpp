#pragma once

#include <functional>
#include <iosfwd>
#include <vector>

#include "pugan/checkpoint.hpp"
#include "pugan/config.hpp"
#include "pugan/data.hpp"
#include "pugan/model.hpp"

namespace pugan {

struct ParLogRow {
  int phase;  // 1: attenuation estimator, 2: depth and transmission estimators
  int epoch;  // 1-based within the phase
  long step;  // global optimizer step, 1-based
  double loss;
  double lr;
};

struct ParLossStats {
  double depth_direct = 0.0;
  double depth_recovered = 0.0;
  double attenuation = 0.0;
  double total = 0.0;
};

struct ParTrainResult {
  Checkpoint checkpoint;
  ParLossStats initial;
  ParLossStats final;
  std::vector<ParLogRow> log;
};

struct PuganLogRow {
  int epoch;  // 1-based
  long step;  // 1-based
  double g_loss;
  double d1_loss;
  double d2_loss;
  double l1;
  double perceptual;
  double lr;
};

struct PuganTrainResult {
  Checkpoint checkpoint;
  std::vector<PuganLogRow> log;
};

enum class UpdateKind { kGenerator, kStyleDiscriminator, kContentDiscriminator };

/// Optional extras shared by both training entry points.
struct TrainOptions {
  /// Warm start for pretrain_par; must be a par-stage checkpoint.
  const Checkpoint* init = nullptr;
  /// One line per epoch when set.
  std::ostream* progress = nullptr;
  /// Called after every pretraining epoch.
  std::function<void(int phase, int epoch, ParSubnet<float>&)> on_par_epoch;
  /// Called after every optimizer step of the adversarial stage.
  std::function<void(UpdateKind, PuganModel<float>&)> on_update;
};

/// Mean parameter-estimation loss over the dataset, modules in eval mode.
ParLossStats evaluate_par_loss(ParSubnet<float>& par, const data::SyntheticDataset& samples, int batch_size);

/// Phase 1 trains the attenuation estimator on the attenuation term; phase 2
/// freezes it and trains the depth and transmission estimators on the two depth
/// terms. Each phase runs cfg.epochs epochs. With cfg.out_dir set, writes a run
/// directory with one checkpoint per phase-2 epoch.
ParTrainResult pretrain_par(const data::SyntheticDataset& samples, const TrainConfig& cfg,
                            const ModelConfig& model = {}, const TrainOptions& opts = {});

/// Alternates one generator, one style-discriminator and one
/// content-discriminator step per batch with the parameter-estimation network
/// frozen. With cfg.out_dir set, writes a run directory with one checkpoint per
/// epoch and log.csv.
PuganTrainResult train_pugan(const data::PairedDataset& samples, const Checkpoint& par_ckpt, const TrainConfig& cfg,
                             const ModelConfig& model = {}, const TrainOptions& opts = {});

}  // namespace pugan
