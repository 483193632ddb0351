#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pugan/discriminators.hpp"
#include "pugan/losses.hpp"
#include "pugan/optim.hpp"
#include "pugan/par_subnet.hpp"
#include "pugan/tsie.hpp"

namespace pugan {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Stage { kPar, kPugan };

std::string to_string(Stage stage);
/// "par" or "pugan"; anything else throws ConfigError.
Stage parse_stage(std::string_view text);

/// Architecture of every learned module.
struct ModelConfig {
  ParConfig par;
  TsieConfig tsie;
  DiscriminatorConfig discriminator;
  std::uint64_t perceptual_seed = 1234;

  void validate() const;
};

struct TrainConfig {
  Stage stage = Stage::kPugan;
  int epochs = 200;
  int batch_size = 16;
  double lr = 1e-3;
  int lr_decay_every = 50;
  /// Multiplier applied every lr_decay_every epochs; 1 keeps the rate fixed.
  double lr_decay_factor = 0.1;
  std::uint64_t seed = 0;
  LossWeights loss_weights;
  double dq_alpha = 0.7;
  int image_size = 256;
  /// lr inside is ignored; the schedule owns the rate.
  AdamOptions adam;

  std::string data_dir;
  std::string out_dir;
  std::string par_checkpoint;

  /// Parameter-estimation pretraining: 60 epochs per phase, batch 4, fixed lr 1e-4.
  static TrainConfig par_defaults();
  /// Enhancement training: 200 epochs, batch 16, lr 1e-3 decayed x0.1 every 50 epochs.
  static TrainConfig pugan_defaults();

  /// Throws ConfigError on the first violated invariant.
  void validate() const;
};

/// lr * factor^floor(epoch / every).
double lr_at(int epoch, const TrainConfig& cfg);

struct MetricsConfig {
  std::vector<std::string> names{"psnr", "mse", "uiqm", "uciqe"};
  int block_size = 8;
  double alpha_trim = 0.1;

  void validate() const;
};

/// Everything a command needs. The JSON document has the sections
/// data, model, train, loss and metrics; see docs/config.md.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  MetricsConfig metrics;

  /// Model config with the train-level dq_alpha applied.
  ModelConfig resolved_model() const;
  void validate() const;
};

/// Overlays the keys present in `json_text` onto `base`. Unknown keys and
/// wrongly typed values throw ConfigError.
RunConfig parse_run_config(std::string_view json_text, const RunConfig& base);
RunConfig load_run_config(const std::string& path, const RunConfig& base);

/// Pretty-printed JSON in a fixed key order. Without paths the output depends
/// only on hyperparameters, which keeps checkpoints reproducible across run dirs.
std::string dump_run_config(const RunConfig& cfg, bool include_paths = true);

}  // namespace pugan
