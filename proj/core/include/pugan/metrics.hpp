#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "pugan/tensor.hpp"

// Images are (1,3,H,W) or (3,H,W) RGB with values in [0,1]. Every metric is
// evaluated on the 0-255 scale in double precision.
namespace pugan::metrics {

/// PSNR reported for identical images.
inline constexpr double kPsnrCapDb = 100.0;

inline constexpr std::array<double, 3> kUiqmWeights{0.0282, 0.2953, 3.5753};
inline constexpr std::array<double, 3> kUciqeWeights{0.4680, 0.2745, 0.2576};

struct Options {
  /// Side of the square blocks used by the sharpness and contrast terms.
  int block_size = 8;
  /// Fraction trimmed from each tail before averaging the opponent colors.
  double alpha_trim = 0.1;
};

template <typename T>
double mse(const Tensor<T>& a, const Tensor<T>& b);

/// 10 log10(255^2 / mse), kPsnrCapDb when mse is 0.
double psnr_from_mse(double mse);

template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b);

struct UiqmComponents {
  double uicm = 0.0;    // colorfulness
  double uism = 0.0;    // sharpness
  double uiconm = 0.0;  // contrast
  double uiqm = 0.0;
};

/// UICM: -0.0268 sqrt(mu_rg^2 + mu_yb^2) + 0.1586 sqrt(var_rg + var_yb) with
///   alpha-trimmed means of rg = R - G and yb = (R + G)/2 - B.
/// UISM: sum over channels with weights (0.299, 0.587, 0.114) of
///   EME(edge_c) = 2/(k1 k2) sum_blocks ln(max/min), edge_c = |sobel(c)| / max|sobel(c)| * c,
///   skipping blocks whose minimum is 0.
/// UIConM: -1/(k1 k2) sum_blocks r ln r with r = (max - min)/(max + min) over the
///   luma (0.299 R + 0.587 G + 0.114 B), skipping blocks with r = 0.
/// Blocks tile the top-left k1*b x k2*b region; a side shorter than the block
/// size is treated as one block.
template <typename T>
UiqmComponents uiqm_components(const Tensor<T>& image, const Options& opts = {});

template <typename T>
double uiqm(const Tensor<T>& image, const Options& opts = {}) {
  return uiqm_components(image, opts).uiqm;
}

struct UciqeComponents {
  double chroma_std = 0.0;          // population std of C*/100
  double luminance_contrast = 0.0;  // mean of top 1% L*/100 minus mean of bottom 1%
  double mean_saturation = 0.0;     // mean of C / sqrt(C^2 + L^2)
  double uciqe = 0.0;
};

/// CIELAB under D65 from gamma-encoded sRGB in [0,1].
std::array<double, 3> srgb_to_lab(double r, double g, double b);

template <typename T>
UciqeComponents uciqe_components(const Tensor<T>& image);

template <typename T>
double uciqe(const Tensor<T>& image) {
  return uciqe_components(image).uciqe;
}

/// Recognised metric names, in report column order.
const std::vector<std::string>& metric_names();

struct MetricRow {
  std::string id;
  std::map<std::string, double> values;
};

struct MetricReport {
  std::vector<std::string> columns;
  std::vector<MetricRow> rows;
  MetricRow mean;  // id "mean"
};

/// Evaluates `columns` (a subset of metric_names) on one image. Reference
/// metrics need `reference`; pass nullptr when only non-reference ones are asked.
MetricRow evaluate_image(const std::string& id, const Tensor<float>& image, const Tensor<float>* reference,
                         const std::vector<std::string>& columns, const Options& opts = {});

/// Canonically ordered column list; throws std::invalid_argument on unknown names.
std::vector<std::string> normalize_columns(const std::vector<std::string>& requested);

/// Fills in the mean row.
void finalize(MetricReport& report);

void write_csv(const std::filesystem::path& path, const MetricReport& report);
void write_json(const std::filesystem::path& path, const MetricReport& report);
/// Chooses CSV or JSON from the extension.
void write_report(const std::filesystem::path& path, const MetricReport& report);

}  // namespace pugan::metrics
