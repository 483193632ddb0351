#include "pugan/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace pugan::metrics {
namespace {

struct Planes {
  int h = 0;
  int w = 0;
  std::array<std::vector<double>, 3> c;  // 0-255 scale

  double at(int ch, int y, int x) const { return c[ch][static_cast<std::size_t>(y) * w + x]; }
};

template <typename T>
Planes to_planes(const Tensor<T>& image) {
  const Shape& s = image.shape();
  Planes p;
  if (s.size() == 4 && s[0] == 1 && s[1] == 3) {
    p.h = s[2];
    p.w = s[3];
  } else if (s.size() == 3 && s[0] == 3) {
    p.h = s[1];
    p.w = s[2];
  } else {
    throw ShapeError("metrics expect a (1,3,H,W) or (3,H,W) image, got " + to_string(s));
  }
  if (p.h <= 0 || p.w <= 0) throw ShapeError("metrics: empty image");
  const std::size_t plane = static_cast<std::size_t>(p.h) * p.w;
  for (int ch = 0; ch < 3; ++ch) {
    p.c[ch].resize(plane);
    for (std::size_t i = 0; i < plane; ++i) p.c[ch][i] = 255.0 * static_cast<double>(image[ch * plane + i]);
  }
  return p;
}

// Shifted accumulation keeps the mean of identical values exactly equal to them.
double mean_of(const std::vector<double>& v) {
  const double x0 = v.front();
  double s = 0.0;
  for (double x : v) s += x - x0;
  return x0 + s / static_cast<double>(v.size());
}

double variance_about(const std::vector<double>& v, double mu) {
  double s = 0.0;
  for (double x : v) s += (x - mu) * (x - mu);
  return s / static_cast<double>(v.size());
}

double trimmed_mean(std::vector<double> v, double alpha) {
  std::sort(v.begin(), v.end());
  const std::size_t k = v.size();
  const auto lo = static_cast<std::size_t>(std::ceil(alpha * static_cast<double>(k)));
  const auto hi = static_cast<std::size_t>(std::floor(alpha * static_cast<double>(k)));
  if (lo + hi >= k) return mean_of(v);
  return mean_of(std::vector<double>(v.begin() + static_cast<std::ptrdiff_t>(lo), v.end() - static_cast<std::ptrdiff_t>(hi)));
}

struct Blocks {
  int bh, bw, k1, k2;
};

Blocks blocks_for(int h, int w, int block) {
  Blocks b;
  b.bh = std::min(block, h);
  b.bw = std::min(block, w);
  b.k1 = h / b.bh;
  b.k2 = w / b.bw;
  return b;
}

template <typename F>
void for_each_block(const std::vector<double>& img, int w, const Blocks& b, F&& f) {
  for (int by = 0; by < b.k1; ++by)
    for (int bx = 0; bx < b.k2; ++bx) {
      double mx = -std::numeric_limits<double>::infinity(), mn = std::numeric_limits<double>::infinity();
      for (int y = by * b.bh; y < (by + 1) * b.bh; ++y)
        for (int x = bx * b.bw; x < (bx + 1) * b.bw; ++x) {
          const double v = img[static_cast<std::size_t>(y) * w + x];
          mx = std::max(mx, v);
          mn = std::min(mn, v);
        }
      f(mx, mn);
    }
}

int reflect(int i, int n) {
  if (i < 0) return std::min(-i - 1, n - 1);
  if (i >= n) return std::max(2 * n - i - 1, 0);
  return i;
}

std::vector<double> sobel_magnitude(const std::vector<double>& img, int h, int w) {
  std::vector<double> out(img.size());
  auto px = [&](int y, int x) { return img[static_cast<std::size_t>(reflect(y, h)) * w + reflect(x, w)]; };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double gx = (px(y - 1, x + 1) + 2 * px(y, x + 1) + px(y + 1, x + 1)) -
                        (px(y - 1, x - 1) + 2 * px(y, x - 1) + px(y + 1, x - 1));
      const double gy = (px(y + 1, x - 1) + 2 * px(y + 1, x) + px(y + 1, x + 1)) -
                        (px(y - 1, x - 1) + 2 * px(y - 1, x) + px(y - 1, x + 1));
      out[static_cast<std::size_t>(y) * w + x] = std::sqrt(gx * gx + gy * gy);
    }
  return out;
}

double eme(const std::vector<double>& img, int w, const Blocks& b) {
  double val = 0.0;
  for_each_block(img, w, b, [&](double mx, double mn) {
    if (mn > 0.0) val += std::log(mx / mn);
  });
  return 2.0 / (b.k1 * b.k2) * val;
}

std::string num(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

double lab_f(double t) {
  constexpr double d = 6.0 / 29.0;
  return t > d * d * d ? std::cbrt(t) : t / (3.0 * d * d) + 4.0 / 29.0;
}

double srgb_linear(double u) { return u <= 0.04045 ? u / 12.92 : std::pow((u + 0.055) / 1.055, 2.4); }

}  // namespace

template <typename T>
double mse(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "mse");
  if (a.empty()) throw ShapeError("mse: empty images");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = 255.0 * (static_cast<double>(a[i]) - static_cast<double>(b[i]));
    s += d * d;
  }
  return s / static_cast<double>(a.size());
}

double psnr_from_mse(double m) {
  if (m <= 0.0) return kPsnrCapDb;
  return std::min(kPsnrCapDb, 10.0 * std::log10(255.0 * 255.0 / m));
}

template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b) {
  return psnr_from_mse(mse(a, b));
}

template <typename T>
UiqmComponents uiqm_components(const Tensor<T>& image, const Options& opts) {
  if (opts.block_size < 1) throw std::invalid_argument("uiqm: block_size must be >= 1");
  if (!(opts.alpha_trim >= 0.0 && opts.alpha_trim < 0.5)) throw std::invalid_argument("uiqm: alpha_trim must lie in [0,0.5)");
  const Planes p = to_planes(image);
  const std::size_t n = p.c[0].size();
  UiqmComponents out;

  std::vector<double> rg(n), yb(n);
  for (std::size_t i = 0; i < n; ++i) {
    rg[i] = p.c[0][i] - p.c[1][i];
    yb[i] = (p.c[0][i] + p.c[1][i]) / 2.0 - p.c[2][i];
  }
  const double mu_rg = trimmed_mean(rg, opts.alpha_trim), mu_yb = trimmed_mean(yb, opts.alpha_trim);
  const double var_rg = variance_about(rg, mu_rg), var_yb = variance_about(yb, mu_yb);
  out.uicm = -0.0268 * std::sqrt(mu_rg * mu_rg + mu_yb * mu_yb) + 0.1586 * std::sqrt(var_rg + var_yb);

  const Blocks b = blocks_for(p.h, p.w, opts.block_size);
  constexpr double kLuma[3] = {0.299, 0.587, 0.114};
  for (int ch = 0; ch < 3; ++ch) {
    auto mag = sobel_magnitude(p.c[ch], p.h, p.w);
    const double mx = *std::max_element(mag.begin(), mag.end());
    if (mx <= 0.0) continue;
    for (std::size_t i = 0; i < n; ++i) mag[i] = mag[i] / mx * p.c[ch][i];
    out.uism += kLuma[ch] * eme(mag, p.w, b);
  }

  std::vector<double> luma(n);
  for (std::size_t i = 0; i < n; ++i) luma[i] = kLuma[0] * p.c[0][i] + kLuma[1] * p.c[1][i] + kLuma[2] * p.c[2][i];
  double val = 0.0;
  for_each_block(luma, p.w, b, [&](double mx, double mn) {
    const double top = mx - mn, bot = mx + mn;
    if (top > 0.0 && bot > 0.0) val += (top / bot) * std::log(top / bot);
  });
  out.uiconm = -val / (b.k1 * b.k2);

  out.uiqm = kUiqmWeights[0] * out.uicm + kUiqmWeights[1] * out.uism + kUiqmWeights[2] * out.uiconm;
  return out;
}

std::array<double, 3> srgb_to_lab(double r, double g, double b) {
  // sRGB -> XYZ rows scaled by the D65 white point so that each sums to one.
  static constexpr double kM[3][3] = {{0.4124564, 0.3575761, 0.1804375},
                                      {0.2126729, 0.7151522, 0.0721750},
                                      {0.0193339, 0.1191920, 0.9503041}};
  const double lin[3] = {srgb_linear(r), srgb_linear(g), srgb_linear(b)};
  // Expanding around the green component makes neutral inputs map to a = b = 0 exactly.
  double xyz[3];
  for (int i = 0; i < 3; ++i) {
    const double row = kM[i][0] + kM[i][1] + kM[i][2];
    xyz[i] = lin[1] + (kM[i][0] * (lin[0] - lin[1]) + kM[i][2] * (lin[2] - lin[1])) / row;
  }
  const double fx = lab_f(xyz[0]), fy = lab_f(xyz[1]), fz = lab_f(xyz[2]);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

template <typename T>
UciqeComponents uciqe_components(const Tensor<T>& image) {
  const Planes p = to_planes(image);
  const std::size_t n = p.c[0].size();
  std::vector<double> l(n), chroma(n);
  double sat = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto lab = srgb_to_lab(p.c[0][i] / 255.0, p.c[1][i] / 255.0, p.c[2][i] / 255.0);
    l[i] = lab[0] / 100.0;
    chroma[i] = std::hypot(lab[1], lab[2]) / 100.0;
    const double denom = std::hypot(chroma[i], l[i]);
    sat += denom > 0.0 ? chroma[i] / denom : 0.0;
  }
  UciqeComponents out;
  out.chroma_std = std::sqrt(variance_about(chroma, mean_of(chroma)));
  std::sort(l.begin(), l.end());
  const std::size_t k = std::max<std::size_t>(1, n / 100);
  const double bottom = mean_of(std::vector<double>(l.begin(), l.begin() + static_cast<std::ptrdiff_t>(k)));
  const double top = mean_of(std::vector<double>(l.end() - static_cast<std::ptrdiff_t>(k), l.end()));
  out.luminance_contrast = top - bottom;
  out.mean_saturation = sat / static_cast<double>(n);
  out.uciqe = kUciqeWeights[0] * out.chroma_std + kUciqeWeights[1] * out.luminance_contrast +
              kUciqeWeights[2] * out.mean_saturation;
  return out;
}

const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names{"psnr", "mse", "uiqm", "uciqe"};
  return names;
}

std::vector<std::string> normalize_columns(const std::vector<std::string>& requested) {
  for (const auto& r : requested)
    if (std::find(metric_names().begin(), metric_names().end(), r) == metric_names().end())
      throw std::invalid_argument("unknown metric '" + r + "'");
  std::vector<std::string> out;
  for (const auto& m : metric_names())
    if (std::find(requested.begin(), requested.end(), m) != requested.end()) out.push_back(m);
  if (out.empty()) throw std::invalid_argument("no metrics requested");
  return out;
}

MetricRow evaluate_image(const std::string& id, const Tensor<float>& image, const Tensor<float>* reference,
                         const std::vector<std::string>& columns, const Options& opts) {
  MetricRow row{id, {}};
  for (const auto& c : columns) {
    if (c == "psnr" || c == "mse") {
      if (!reference) throw std::invalid_argument(c + " needs a reference image");
      const double m = mse(image, *reference);
      row.values[c] = c == "mse" ? m : psnr_from_mse(m);
    } else if (c == "uiqm") {
      row.values[c] = uiqm(image, opts);
    } else if (c == "uciqe") {
      row.values[c] = uciqe(image);
    } else {
      throw std::invalid_argument("unknown metric '" + c + "'");
    }
  }
  return row;
}

void finalize(MetricReport& report) {
  report.mean = MetricRow{"mean", {}};
  if (report.rows.empty()) return;
  for (const auto& c : report.columns) {
    double s = 0.0;
    for (const auto& r : report.rows) s += r.values.at(c);
    report.mean.values[c] = s / static_cast<double>(report.rows.size());
  }
}

void write_csv(const std::filesystem::path& path, const MetricReport& report) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write report " + path.string());
  out << "id";
  for (const auto& c : report.columns) out << ',' << c;
  out << '\n';
  auto row = [&](const MetricRow& r) {
    out << r.id;
    for (const auto& c : report.columns) out << ',' << num(r.values.at(c));
    out << '\n';
  };
  for (const auto& r : report.rows) row(r);
  if (!report.rows.empty()) row(report.mean);
}

void write_json(const std::filesystem::path& path, const MetricReport& report) {
  nlohmann::ordered_json doc;
  doc["columns"] = report.columns;
  auto row = [&](const MetricRow& r) {
    nlohmann::ordered_json j;
    j["id"] = r.id;
    for (const auto& c : report.columns) j[c] = r.values.at(c);
    return j;
  };
  doc["rows"] = nlohmann::ordered_json::array();
  for (const auto& r : report.rows) doc["rows"].push_back(row(r));
  if (!report.rows.empty()) doc["mean"] = row(report.mean);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write report " + path.string());
  out << doc.dump(2) << '\n';
}

void write_report(const std::filesystem::path& path, const MetricReport& report) {
  const auto ext = path.extension().string();
  if (ext == ".csv") return write_csv(path, report);
  if (ext == ".json") return write_json(path, report);
  throw std::invalid_argument("report path must end in .csv or .json: " + path.string());
}

#define PUGAN_INSTANTIATE_METRICS(T)                                                    \
  template double mse(const Tensor<T>&, const Tensor<T>&);                              \
  template double psnr(const Tensor<T>&, const Tensor<T>&);                             \
  template UiqmComponents uiqm_components(const Tensor<T>&, const Options&);            \
  template UciqeComponents uciqe_components(const Tensor<T>&);

PUGAN_INSTANTIATE_METRICS(float)
PUGAN_INSTANTIATE_METRICS(double)

}  // namespace pugan::metrics
