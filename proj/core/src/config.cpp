#include "pugan/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace pugan {

using json = nlohmann::ordered_json;

std::string to_string(Stage stage) { return stage == Stage::kPar ? "par" : "pugan"; }

Stage parse_stage(std::string_view text) {
  if (text == "par") return Stage::kPar;
  if (text == "pugan") return Stage::kPugan;
  throw ConfigError("unknown stage '" + std::string(text) + "' (expected par or pugan)");
}

namespace {

template <typename F>
void rethrow_as_config(const char* what, F&& f) {
  try {
    f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string(what) + ": " + e.what());
  }
}

const std::set<std::string> kMetricNames{"psnr", "mse", "uiqm", "uciqe"};

}  // namespace

void ModelConfig::validate() const {
  rethrow_as_config("model.par", [&] { par.validate(); });
  rethrow_as_config("model.tsie", [&] { tsie.validate(); });
  rethrow_as_config("model.discriminator", [&] { discriminator.validate(); });
}

TrainConfig TrainConfig::par_defaults() {
  TrainConfig c;
  c.stage = Stage::kPar;
  c.epochs = 60;
  c.batch_size = 4;
  c.lr = 1e-4;
  c.lr_decay_every = 60;
  c.lr_decay_factor = 1.0;
  return c;
}

TrainConfig TrainConfig::pugan_defaults() { return TrainConfig{}; }

void TrainConfig::validate() const {
  if (epochs <= 0) throw ConfigError("train.epochs must be > 0, got " + std::to_string(epochs));
  if (batch_size <= 0) throw ConfigError("train.batch_size must be > 0, got " + std::to_string(batch_size));
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("train.lr must be > 0");
  if (lr_decay_every <= 0) throw ConfigError("train.lr_decay_every must be > 0");
  if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0))
    throw ConfigError("train.lr_decay_factor must lie in (0,1]");
  if (!(dq_alpha > 0.0 && dq_alpha < 1.0)) throw ConfigError("train.dq_alpha must lie in (0,1)");
  if (image_size <= 0 || image_size % 32 != 0)
    throw ConfigError("data.image_size must be a positive multiple of 32, got " + std::to_string(image_size));
  rethrow_as_config("loss", [&] { loss_weights.validate(); });
  AdamOptions probe = adam;
  probe.lr = lr;
  rethrow_as_config("train.adam", [&] { probe.validate(); });
}

double lr_at(int epoch, const TrainConfig& cfg) {
  if (epoch < 0) throw std::invalid_argument("lr_at: epoch must be >= 0");
  return cfg.lr * std::pow(cfg.lr_decay_factor, epoch / cfg.lr_decay_every);
}

void MetricsConfig::validate() const {
  if (names.empty()) throw ConfigError("metrics.names must not be empty");
  for (const auto& n : names)
    if (!kMetricNames.count(n)) throw ConfigError("unknown metric '" + n + "' (expected psnr, mse, uiqm, uciqe)");
  if (block_size < 2) throw ConfigError("metrics.block_size must be >= 2");
  if (!(alpha_trim >= 0.0 && alpha_trim < 0.5)) throw ConfigError("metrics.alpha_trim must lie in [0,0.5)");
}

ModelConfig RunConfig::resolved_model() const {
  ModelConfig m = model;
  m.tsie.dq_alpha = train.dq_alpha;
  return m;
}

void RunConfig::validate() const {
  train.validate();
  resolved_model().validate();
  metrics.validate();
}

namespace {

// Reads `key` from `obj` into `out` if present, with a type check that names the full path.
template <typename V>
void read(const json& obj, const std::string& section, const char* key, V& out, std::set<std::string>& seen) {
  seen.insert(key);
  auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    out = it->get<V>();
  } catch (const json::exception&) {
    throw ConfigError(section + "." + key + ": wrong type (" + it->type_name() + ")");
  }
}

void reject_unknown(const json& obj, const std::string& section, const std::set<std::string>& known) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!known.count(it.key())) throw ConfigError("unknown config key '" + section + "." + it.key() + "'");
}

const json& section(const json& root, const char* name) {
  static const json empty = json::object();
  auto it = root.find(name);
  if (it == root.end()) return empty;
  if (!it->is_object()) throw ConfigError(std::string("config section '") + name + "' must be an object");
  return *it;
}

}  // namespace

RunConfig parse_run_config(std::string_view json_text, const RunConfig& base) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("config root must be an object");
  reject_unknown(root, "", {"data", "model", "train", "loss", "metrics"});

  RunConfig cfg = base;
  {
    const json& s = section(root, "data");
    std::set<std::string> seen;
    read(s, "data", "root", cfg.train.data_dir, seen);
    read(s, "data", "image_size", cfg.train.image_size, seen);
    read(s, "data", "par_checkpoint", cfg.train.par_checkpoint, seen);
    reject_unknown(s, "data", seen);
  }
  {
    const json& s = section(root, "model");
    std::set<std::string> seen{"par", "tsie", "discriminator"};
    read(s, "model", "perceptual_seed", cfg.model.perceptual_seed, seen);
    reject_unknown(s, "model", seen);
    const json& p = section(s, "par");
    std::set<std::string> ps;
    read(p, "model.par", "width", cfg.model.par.width, ps);
    read(p, "model.par", "hidden", cfg.model.par.hidden, ps);
    read(p, "model.par", "pooled", cfg.model.par.pooled, ps);
    reject_unknown(p, "model.par", ps);
    const json& t = section(s, "tsie");
    std::set<std::string> ts;
    read(t, "model.tsie", "widths", cfg.model.tsie.widths, ts);
    reject_unknown(t, "model.tsie", ts);
    const json& d = section(s, "discriminator");
    std::set<std::string> ds;
    read(d, "model.discriminator", "widths", cfg.model.discriminator.widths, ds);
    read(d, "model.discriminator", "leaky_slope", cfg.model.discriminator.leaky_slope, ds);
    reject_unknown(d, "model.discriminator", ds);
  }
  {
    const json& s = section(root, "train");
    std::set<std::string> seen{"stage", "adam"};
    if (auto it = s.find("stage"); it != s.end()) {
      if (!it->is_string()) throw ConfigError("train.stage must be a string");
      cfg.train.stage = parse_stage(it->get<std::string>());
    }
    read(s, "train", "epochs", cfg.train.epochs, seen);
    read(s, "train", "batch_size", cfg.train.batch_size, seen);
    read(s, "train", "lr", cfg.train.lr, seen);
    read(s, "train", "lr_decay_every", cfg.train.lr_decay_every, seen);
    read(s, "train", "lr_decay_factor", cfg.train.lr_decay_factor, seen);
    read(s, "train", "seed", cfg.train.seed, seen);
    read(s, "train", "dq_alpha", cfg.train.dq_alpha, seen);
    read(s, "train", "out_dir", cfg.train.out_dir, seen);
    reject_unknown(s, "train", seen);
    const json& a = section(s, "adam");
    std::set<std::string> as;
    read(a, "train.adam", "beta1", cfg.train.adam.beta1, as);
    read(a, "train.adam", "beta2", cfg.train.adam.beta2, as);
    read(a, "train.adam", "eps", cfg.train.adam.eps, as);
    reject_unknown(a, "train.adam", as);
  }
  {
    const json& s = section(root, "loss");
    std::set<std::string> seen;
    read(s, "loss", "adversarial_style", cfg.train.loss_weights.adversarial_style, seen);
    read(s, "loss", "adversarial_content", cfg.train.loss_weights.adversarial_content, seen);
    read(s, "loss", "l1", cfg.train.loss_weights.l1, seen);
    read(s, "loss", "perceptual", cfg.train.loss_weights.perceptual, seen);
    reject_unknown(s, "loss", seen);
  }
  {
    const json& s = section(root, "metrics");
    std::set<std::string> seen;
    read(s, "metrics", "names", cfg.metrics.names, seen);
    read(s, "metrics", "block_size", cfg.metrics.block_size, seen);
    read(s, "metrics", "alpha_trim", cfg.metrics.alpha_trim, seen);
    reject_unknown(s, "metrics", seen);
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path, const RunConfig& base) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), base);
}

std::string dump_run_config(const RunConfig& cfg, bool include_paths) {
  const auto& t = cfg.train;
  const auto& m = cfg.model;
  json root;
  json data = {{"image_size", t.image_size}};
  if (include_paths) {
    data["root"] = t.data_dir;
    data["par_checkpoint"] = t.par_checkpoint;
  }
  root["data"] = data;
  root["model"] = {
      {"par", {{"width", m.par.width}, {"hidden", m.par.hidden}, {"pooled", m.par.pooled}}},
      {"tsie", {{"widths", m.tsie.widths}}},
      {"discriminator", {{"widths", m.discriminator.widths}, {"leaky_slope", m.discriminator.leaky_slope}}},
      {"perceptual_seed", m.perceptual_seed},
  };
  json train = {
      {"stage", to_string(t.stage)},
      {"epochs", t.epochs},
      {"batch_size", t.batch_size},
      {"lr", t.lr},
      {"lr_decay_every", t.lr_decay_every},
      {"lr_decay_factor", t.lr_decay_factor},
      {"seed", t.seed},
      {"dq_alpha", t.dq_alpha},
      {"adam", {{"beta1", t.adam.beta1}, {"beta2", t.adam.beta2}, {"eps", t.adam.eps}}},
  };
  if (include_paths) train["out_dir"] = t.out_dir;
  root["train"] = train;
  root["loss"] = {
      {"adversarial_style", t.loss_weights.adversarial_style},
      {"adversarial_content", t.loss_weights.adversarial_content},
      {"l1", t.loss_weights.l1},
      {"perceptual", t.loss_weights.perceptual},
  };
  root["metrics"] = {
      {"names", cfg.metrics.names}, {"block_size", cfg.metrics.block_size}, {"alpha_trim", cfg.metrics.alpha_trim}};
  return root.dump(2);
}

}  // namespace pugan
