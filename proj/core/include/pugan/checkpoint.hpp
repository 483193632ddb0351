#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pugan/config.hpp"
#include "pugan/nn.hpp"

namespace pugan {

inline constexpr int kCheckpointSchemaVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad magic, malformed manifest, or a tensor the caller needs is absent.
class CheckpointFormatError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class CheckpointVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

/// A tensor's declared length or shape disagrees with its shape table entry or
/// with the module it is loaded into.
class CheckpointShapeError : public CheckpointError {
 public:
  CheckpointShapeError(std::string parameter, const std::string& detail)
      : CheckpointError("shape mismatch for parameter '" + parameter + "': " + detail),
        parameter_(std::move(parameter)) {}
  const std::string& parameter() const { return parameter_; }

 private:
  std::string parameter_;
};

class CheckpointTruncatedError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

class CheckpointStageError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

struct CheckpointTensor {
  std::string name;
  Tensor<float> value;
};

/// On disk:
///   "PUGANCKPT\n"
///   <manifest byte count as decimal>"\n"
///   <manifest JSON: schema_version, stage, epoch, step, config, tensors[{name, shape, offset, count}]>
///   <payload: little-endian float32 buffers at the declared element offsets>
struct Checkpoint {
  int schema_version = kCheckpointSchemaVersion;
  Stage stage = Stage::kPar;
  int epoch = 0;
  long step = 0;
  /// JSON snapshot of the run configuration (hyperparameters only).
  std::string config;
  std::vector<CheckpointTensor> tensors;

  const CheckpointTensor* find(const std::string& name) const;
  /// Throws CheckpointStageError unless stage == expected.
  void require_stage(Stage expected, const std::string& consumer) const;
  /// Run configuration recorded in the snapshot, overlaid on defaults.
  RunConfig run_config() const;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(std::string_view bytes, const std::string& source = "<memory>");

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Appends every parameter and buffer of `module` under `prefix`.
template <typename T>
void export_module(nn::Module<T>& module, const std::string& prefix, Checkpoint& ckpt);

/// Copies every parameter and buffer of `module` from `ckpt`. Throws
/// CheckpointFormatError when one is missing and CheckpointShapeError when a
/// shape disagrees.
template <typename T>
void import_module(nn::Module<T>& module, const std::string& prefix, const Checkpoint& ckpt);

}  // namespace pugan
