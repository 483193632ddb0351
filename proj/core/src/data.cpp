#include "pugan/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace pugan::data {
namespace {

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

void require_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("missing directory " + dir.string());
}

// Planar (1,C,H,W) tensor from an interleaved float Mat.
Tensor<float> from_mat(const cv::Mat& m) {
  const int h = m.rows, w = m.cols, c = m.channels();
  Tensor<float> t(Shape{1, c, h, w});
  for (int y = 0; y < h; ++y) {
    const float* row = m.ptr<float>(y);
    for (int x = 0; x < w; ++x)
      for (int k = 0; k < c; ++k) t.at(0, k, y, x) = row[x * c + k];
  }
  return t;
}

cv::Mat resize_if_needed(const cv::Mat& m, int size) {
  if (size <= 0 || (m.rows == size && m.cols == size)) return m;
  cv::Mat out;
  cv::resize(m, out, cv::Size(size, size), 0, 0, cv::INTER_LINEAR);
  return out;
}

std::pair<int, int> image_hw(const Tensor<float>& t, int channels, const char* what) {
  const Shape& s = t.shape();
  if (s.size() == 4 && s[0] == 1 && s[1] == channels) return {s[2], s[3]};
  if (s.size() == 3 && s[0] == channels) return {s[1], s[2]};
  throw ShapeError(std::string(what) + ": expected (1," + std::to_string(channels) + ",H,W), got " + to_string(s));
}

void write_mat(const fs::path& path, const cv::Mat& m) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), m)) throw DataError("cannot write image " + path.string());
}

std::map<std::string, fs::path> images_by_stem(const fs::path& dir) {
  std::map<std::string, fs::path> out;
  for (const auto& p : list_images(dir)) {
    auto [it, fresh] = out.emplace(p.stem().string(), p);
    if (!fresh) throw DataError("duplicate image stem '" + it->first + "' in " + dir.string());
  }
  return out;
}

std::string join(const std::vector<std::string>& items) {
  std::string s;
  for (const auto& i : items) s += (s.empty() ? "" : ", ") + i;
  return s;
}

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
  return s.substr(i);
}

std::map<std::string, physics::Attenuation> read_beta_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("missing " + path.string());
  std::string line;
  if (!std::getline(in, line) || trim(line) != "id,beta_r,beta_g,beta_b")
    throw DataError(path.string() + ": header must be 'id,beta_r,beta_g,beta_b'");
  std::map<std::string, physics::Attenuation> out;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, ',');) fields.push_back(trim(f));
    const std::string where = path.string() + ":" + std::to_string(lineno);
    if (fields.size() != 4) throw DataError(where + ": expected 4 fields, got " + std::to_string(fields.size()));
    physics::Attenuation beta;
    for (int c = 0; c < 3; ++c) {
      const std::string& f = fields[c + 1];
      auto [end, ec] = std::from_chars(f.data(), f.data() + f.size(), beta.rgb[c]);
      if (ec != std::errc() || end != f.data() + f.size()) throw DataError(where + ": '" + f + "' is not a number");
    }
    try {
      beta.validate();
    } catch (const physics::PhysicsError& e) {
      throw DataError(where + ": id '" + fields[0] + "': " + e.what());
    }
    if (!out.emplace(fields[0], beta).second) throw DataError(where + ": duplicate id '" + fields[0] + "'");
  }
  return out;
}

std::string format_double(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

// Sum of a few random low-frequency plane waves, rescaled into [lo, hi].
std::vector<double> smooth_field(int size, std::mt19937_64& rng, double lo, double hi, double ramp = 0.0) {
  std::uniform_real_distribution<double> freq(0.3, 2.5), phase(0.0, 2.0 * std::numbers::pi), amp(0.3, 1.0);
  struct Wave {
    double fx, fy, phi, a;
  };
  std::vector<Wave> waves(4);
  for (auto& w : waves) w = {freq(rng), freq(rng), phase(rng), amp(rng)};
  std::vector<double> f(static_cast<std::size_t>(size) * size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      double v = ramp * (1.0 - static_cast<double>(y) / size);
      for (const auto& w : waves)
        v += w.a * std::cos(2.0 * std::numbers::pi * (w.fx * x + w.fy * y) / size + w.phi);
      f[static_cast<std::size_t>(y) * size + x] = v;
    }
  auto [mn, mx] = std::minmax_element(f.begin(), f.end());
  const double lo_v = *mn, span = std::max(*mx - *mn, 1e-12);
  for (auto& v : f) v = lo + (hi - lo) * (v - lo_v) / span;
  return f;
}

}  // namespace

std::vector<fs::path> list_images(const fs::path& dir) {
  require_dir(dir);
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && is_image_file(e.path())) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

Tensor<float> read_image(const fs::path& path, int size) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw DataError("cannot decode image " + path.string());
  cv::Mat rgb, f;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  rgb.convertTo(f, CV_32FC3, 1.0 / 255.0);
  return from_mat(resize_if_needed(f, size));
}

void write_image(const fs::path& path, const Tensor<float>& image) {
  auto [h, w] = image_hw(image, 3, "write_image");
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  cv::Mat out(h, w, CV_8UC3);
  for (int y = 0; y < h; ++y) {
    auto* row = out.ptr<unsigned char>(y);
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        const float v = image[c * plane + static_cast<std::size_t>(y) * w + x];
        // OpenCV stores BGR.
        row[x * 3 + (2 - c)] = cv::saturate_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
      }
  }
  write_mat(path, out);
}

Tensor<float> read_depth(const fs::path& path, int size) {
  cv::Mat raw = cv::imread(path.string(), cv::IMREAD_ANYDEPTH | cv::IMREAD_GRAYSCALE);
  if (raw.empty()) throw DataError("cannot decode depth map " + path.string());
  const double scale = raw.depth() == CV_16U ? 1.0 / 65535.0 : raw.depth() == CV_8U ? 1.0 / 255.0 : 0.0;
  if (scale == 0.0) throw DataError("depth map " + path.string() + " must be 8- or 16-bit");
  cv::Mat f;
  raw.convertTo(f, CV_32F, scale);
  return from_mat(resize_if_needed(f, size));
}

void write_depth(const fs::path& path, const Tensor<float>& depth) {
  auto [h, w] = image_hw(depth, 1, "write_depth");
  cv::Mat out(h, w, CV_16UC1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      out.at<std::uint16_t>(y, x) = static_cast<std::uint16_t>(
          std::lround(std::clamp(depth[static_cast<std::size_t>(y) * w + x], 0.0f, 1.0f) * 65535.0f));
  write_mat(path, out);
}

void write_false_color(const fs::path& path, const Tensor<float>& map) {
  const Shape& s = map.shape();
  const int c = s.size() == 4 ? s[1] : s[0];
  auto [h, w] = image_hw(map, c, "write_false_color");
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  cv::Mat gray(h, w, CV_8UC1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float v = 0.0f;
      for (int k = 0; k < c; ++k) v += map[k * plane + static_cast<std::size_t>(y) * w + x];
      gray.at<unsigned char>(y, x) = cv::saturate_cast<unsigned char>(std::lround(std::clamp(v / c, 0.0f, 1.0f) * 255.0f));
    }
  cv::Mat colored;
  cv::applyColorMap(gray, colored, cv::COLORMAP_VIRIDIS);
  write_mat(path, colored);
}

PairedDataset load_paired(const fs::path& root, Split split, int image_size) {
  const std::string prefix = split == Split::kTrain ? "train" : "test";
  auto a = images_by_stem(root / (prefix + "A"));
  auto b = images_by_stem(root / (prefix + "B"));
  std::vector<std::string> only_a, only_b;
  for (const auto& [stem, p] : a)
    if (!b.count(stem)) only_a.push_back(stem);
  for (const auto& [stem, p] : b)
    if (!a.count(stem)) only_b.push_back(stem);
  if (!only_a.empty() || !only_b.empty()) {
    std::string msg = "unpaired images under " + root.string() + ":";
    if (!only_a.empty()) msg += " only in " + prefix + "A: " + join(only_a) + ";";
    if (!only_b.empty()) msg += " only in " + prefix + "B: " + join(only_b) + ";";
    throw DataError(msg);
  }
  PairedDataset out;
  for (const auto& [stem, pa] : a)
    out.push_back({read_image(pa, image_size), read_image(b.at(stem), image_size), stem});
  for (const auto& s : out)
    if (s.degraded.shape() != s.reference.shape())
      throw DataError("pair '" + s.id + "' has mismatched sizes " + to_string(s.degraded.shape()) + " vs " +
                      to_string(s.reference.shape()) + "; set an image size to resize both");
  return out;
}

SyntheticDataset load_synthetic(const fs::path& root, int image_size) {
  auto images = images_by_stem(root / "images");
  require_dir(root / "depth");
  auto depths = images_by_stem(root / "depth");
  auto betas = read_beta_csv(root / "beta.csv");
  SyntheticDataset out;
  for (const auto& [stem, path] : images) {
    auto d = depths.find(stem);
    if (d == depths.end()) throw DataError("image '" + stem + "' has no depth map in " + (root / "depth").string());
    auto b = betas.find(stem);
    if (b == betas.end()) throw DataError("image '" + stem + "' has no row in beta.csv");
    SyntheticSample s;
    s.degraded = read_image(path, image_size);
    s.depth = read_depth(d->second, image_size);
    if (s.depth.dim(2) != s.degraded.dim(2) || s.depth.dim(3) != s.degraded.dim(3))
      throw DataError("image '" + stem + "' and its depth map differ in size");
    s.beta = b->second;
    s.id = stem;
    out.push_back(std::move(s));
  }
  return out;
}

SyntheticDataset make_fixture_set(int n, int size, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("make_fixture_set: n must be >= 1");
  if (size <= 0 || size % 32 != 0) throw std::invalid_argument("make_fixture_set: size must be a positive multiple of 32");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> beta_dist(0.3, 2.0), a_dist(0.6, 0.9), lo_dist(0.05, 0.3),
      hi_dist(0.7, 0.95), ramp_dist(0.0, 3.0);
  const std::size_t plane = static_cast<std::size_t>(size) * size;
  SyntheticDataset out;
  for (int i = 0; i < n; ++i) {
    Tensor<double> clean(Shape{1, 3, size, size});
    for (int c = 0; c < 3; ++c) {
      const double lo = lo_dist(rng), hi = hi_dist(rng);
      auto f = smooth_field(size, rng, lo, hi);
      std::copy(f.begin(), f.end(), clean.data() + c * plane);
    }
    auto df = smooth_field(size, rng, 0.0, 1.0, ramp_dist(rng));
    Tensor<double> depth(Shape{1, 1, size, size}, std::vector<double>(df.begin(), df.end()));
    SyntheticSample s;
    for (int c = 0; c < 3; ++c) s.beta.rgb[c] = beta_dist(rng);
    for (int c = 0; c < 3; ++c) s.background.rgb[c] = a_dist(rng);
    const auto t = physics::transmission_from_depth(depth, physics::per_batch<double>(s.beta.rgb, 1));
    const auto degraded = physics::synthesize_degraded(clean, t, physics::per_batch<double>(s.background.rgb, 1));
    s.degraded = degraded.cast<float>();
    s.depth = depth.cast<float>();
    s.clean = clean.cast<float>();
    char id[32];
    std::snprintf(id, sizeof(id), "fx%04d", i);
    s.id = id;
    out.push_back(std::move(s));
  }
  return out;
}

PairedDataset fixture_pairs(const SyntheticDataset& samples) {
  PairedDataset out;
  for (const auto& s : samples) {
    if (s.clean.empty()) throw DataError("sample '" + s.id + "' has no clean image");
    out.push_back({s.degraded, s.clean, s.id});
  }
  return out;
}

void write_synthetic(const fs::path& root, const SyntheticDataset& samples) {
  fs::create_directories(root / "images");
  fs::create_directories(root / "depth");
  std::ofstream csv(root / "beta.csv", std::ios::trunc);
  if (!csv) throw DataError("cannot write " + (root / "beta.csv").string());
  csv << "id,beta_r,beta_g,beta_b\n";
  for (const auto& s : samples) {
    write_image(root / "images" / (s.id + ".png"), s.degraded);
    write_depth(root / "depth" / (s.id + ".png"), s.depth);
    csv << s.id << ',' << format_double(s.beta.rgb[0]) << ',' << format_double(s.beta.rgb[1]) << ','
        << format_double(s.beta.rgb[2]) << '\n';
  }
}

void write_paired(const fs::path& root, const PairedDataset& samples, Split split) {
  const std::string prefix = split == Split::kTrain ? "train" : "test";
  for (const auto& s : samples) {
    write_image(root / (prefix + "A") / (s.id + ".png"), s.degraded);
    write_image(root / (prefix + "B") / (s.id + ".png"), s.reference);
  }
}

Tensor<float> stack(std::span<const Tensor<float>* const> items) {
  if (items.empty()) throw std::invalid_argument("stack: nothing to stack");
  Shape s = items[0]->shape();
  if (s.size() != 4 || s[0] != 1) throw ShapeError("stack: expected (1,C,H,W), got " + to_string(s));
  for (auto* t : items) require_same_shape(t->shape(), s, "stack");
  s[0] = static_cast<int>(items.size());
  Tensor<float> out(s);
  const std::size_t each = items[0]->size();
  for (std::size_t i = 0; i < items.size(); ++i) std::copy_n(items[i]->data(), each, out.data() + i * each);
  return out;
}

PairedBatch make_batch(const PairedDataset& samples, std::span<const std::size_t> indices) {
  std::vector<const Tensor<float>*> a, b;
  for (auto i : indices) {
    a.push_back(&samples.at(i).degraded);
    b.push_back(&samples.at(i).reference);
  }
  return {stack(a), stack(b)};
}

SyntheticBatch make_batch(const SyntheticDataset& samples, std::span<const std::size_t> indices) {
  std::vector<const Tensor<float>*> imgs, depths;
  Tensor<float> beta(Shape{static_cast<int>(indices.size()), 3});
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto& s = samples.at(indices[k]);
    imgs.push_back(&s.degraded);
    depths.push_back(&s.depth);
    for (int c = 0; c < 3; ++c) beta[k * 3 + c] = static_cast<float>(s.beta.rgb[c]);
  }
  return {stack(imgs), stack(depths), std::move(beta)};
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t count, int batch_size, std::mt19937_64& rng) {
  if (batch_size <= 0) throw std::invalid_argument("epoch_batches: batch_size must be > 0");
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < count; i += batch_size)
    out.emplace_back(order.begin() + i, order.begin() + std::min(count, i + batch_size));
  return out;
}

}  // namespace pugan::data
