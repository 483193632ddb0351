#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pugan/physics.hpp"
#include "pugan/tensor.hpp"

// Images are float tensors of shape (1,3,H,W) with values in [0,1] and RGB
// channel order; depth maps are (1,1,H,W) in [0,1].
namespace pugan::data {

namespace fs = std::filesystem;

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PairedSample {
  Tensor<float> degraded;
  Tensor<float> reference;
  std::string id;
};

struct SyntheticSample {
  Tensor<float> degraded;
  Tensor<float> depth;
  physics::Attenuation beta;
  std::string id;
  // Only known for generated fixtures; empty / zero when loaded from disk.
  Tensor<float> clean;
  physics::BackgroundLight background;
};

using PairedDataset = std::vector<PairedSample>;
using SyntheticDataset = std::vector<SyntheticSample>;

enum class Split { kTrain, kTest };

/// PNG and JPEG files directly inside `dir`, sorted by filename.
std::vector<fs::path> list_images(const fs::path& dir);

/// Decodes an 8-bit image to RGB in [0,1]. With size > 0 the image is
/// bilinearly resized to size x size unless it already has that size.
Tensor<float> read_image(const fs::path& path, int size = 0);
/// Writes (1,3,H,W) or (3,H,W) values in [0,1] as 8-bit RGB.
void write_image(const fs::path& path, const Tensor<float>& image);

/// 16-bit grayscale divided by 65535 (8-bit files are divided by 255).
Tensor<float> read_depth(const fs::path& path, int size = 0);
void write_depth(const fs::path& path, const Tensor<float>& depth);

/// Single-channel map rendered through a perceptual color ramp; a 3-channel
/// input is averaged first.
void write_false_color(const fs::path& path, const Tensor<float>& map);

/// Pairs `<split>A/<stem>.*` with `<split>B/<stem>.*`; A holds degraded inputs,
/// B references. Sorted by stem.
PairedDataset load_paired(const fs::path& root, Split split, int image_size);

/// Reads images/, depth/ and beta.csv (header id,beta_r,beta_g,beta_b).
SyntheticDataset load_synthetic(const fs::path& root, int image_size);

/// n physics-consistent samples: smooth clean images in [0.05,0.95], smooth
/// depth in [0,1], beta ~ U[0.3,2] per channel, background light ~ U[0.6,0.9].
/// Identical for identical arguments.
SyntheticDataset make_fixture_set(int n, int size, std::uint64_t seed);

/// Degraded image paired with its clean source, for enhancement training on fixtures.
PairedDataset fixture_pairs(const SyntheticDataset& samples);

void write_synthetic(const fs::path& root, const SyntheticDataset& samples);
void write_paired(const fs::path& root, const PairedDataset& samples, Split split);

struct PairedBatch {
  Tensor<float> degraded;   // (N,3,H,W)
  Tensor<float> reference;  // (N,3,H,W)
};

struct SyntheticBatch {
  Tensor<float> degraded;  // (N,3,H,W)
  Tensor<float> depth;     // (N,1,H,W)
  Tensor<float> beta;      // (N,3)
};

PairedBatch make_batch(const PairedDataset& samples, std::span<const std::size_t> indices);
SyntheticBatch make_batch(const SyntheticDataset& samples, std::span<const std::size_t> indices);

/// Shuffled index batches covering [0, count); the last batch may be short.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t count, int batch_size, std::mt19937_64& rng);

/// Concatenates (1,C,H,W) tensors along the batch axis.
Tensor<float> stack(std::span<const Tensor<float>* const> items);

}  // namespace pugan::data
