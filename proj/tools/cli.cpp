#include "cli.hpp"

#include <CLI11.hpp>

#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "pugan/checkpoint.hpp"
#include "pugan/config.hpp"
#include "pugan/data.hpp"
#include "pugan/metrics.hpp"
#include "pugan/model.hpp"
#include "pugan/trainer.hpp"

namespace pugan::cli {
namespace {

namespace fs = std::filesystem;

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> image_size;
};

struct TrainFlags {
  std::string data;
  std::string out;
  std::string par_ckpt;
  std::optional<int> epochs;
  std::optional<int> batch;
  std::optional<double> lr;
  std::optional<int> lr_decay_every;
  std::optional<double> lr_decay_factor;
};

struct EnhanceFlags {
  std::string ckpt;
  std::string input;
  std::string output;
  bool save_intermediates = false;
};

struct EvalFlags {
  std::string pred;
  std::string gt;
  std::string report;
  std::string metrics;
  std::optional<int> block_size;
};

struct FixtureFlags {
  std::string out;
  int count = 20;
  int size = 64;
  std::uint64_t seed = 0;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "JSON config file; explicit flags take precedence");
  cmd->add_option("--seed", f.seed, "Random seed");
  cmd->add_option("--image-size", f.image_size, "Square input size in pixels (multiple of 32)");
}

void add_train_overrides(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--epochs", f.epochs, "Epochs (per phase for pretrain-par)");
  cmd->add_option("--batch", f.batch, "Batch size");
  cmd->add_option("--lr", f.lr, "Initial learning rate");
}

// defaults < config file < flags
RunConfig resolve(const CommonFlags& common, const TrainFlags* train, TrainConfig stage_defaults) {
  RunConfig cfg;
  cfg.train = std::move(stage_defaults);
  const Stage stage = cfg.train.stage;
  if (!common.config.empty()) cfg = load_run_config(common.config, cfg);
  cfg.train.stage = stage;
  if (common.seed) cfg.train.seed = *common.seed;
  if (common.image_size) cfg.train.image_size = *common.image_size;
  if (train) {
    if (!train->data.empty()) cfg.train.data_dir = train->data;
    if (!train->out.empty()) cfg.train.out_dir = train->out;
    if (!train->par_ckpt.empty()) cfg.train.par_checkpoint = train->par_ckpt;
    if (train->epochs) cfg.train.epochs = *train->epochs;
    if (train->batch) cfg.train.batch_size = *train->batch;
    if (train->lr) cfg.train.lr = *train->lr;
    if (train->lr_decay_every) cfg.train.lr_decay_every = *train->lr_decay_every;
    if (train->lr_decay_factor) cfg.train.lr_decay_factor = *train->lr_decay_factor;
  }
  cfg.validate();
  return cfg;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

int cmd_pretrain_par(const CommonFlags& common, const TrainFlags& f, std::ostream& out) {
  const RunConfig cfg = resolve(common, &f, TrainConfig::par_defaults());
  const auto samples = data::load_synthetic(cfg.train.data_dir, cfg.train.image_size);
  TrainOptions opts;
  opts.progress = &out;
  const auto result = pretrain_par(samples, cfg.train, cfg.resolved_model(), opts);
  out << "par loss " << result.initial.total << " -> " << result.final.total << "\n";
  out << "wrote " << (fs::path(cfg.train.out_dir) / "checkpoints").string() << "\n";
  return kExitOk;
}

int cmd_train(const CommonFlags& common, const TrainFlags& f, std::ostream& out) {
  const RunConfig cfg = resolve(common, &f, TrainConfig::pugan_defaults());
  if (cfg.train.par_checkpoint.empty()) throw ConfigError("--par-ckpt is required");
  const Checkpoint par = load_checkpoint(cfg.train.par_checkpoint);
  par.require_stage(Stage::kPar, "train");
  const auto samples = data::load_paired(cfg.train.data_dir, data::Split::kTrain, cfg.train.image_size);
  TrainOptions opts;
  opts.progress = &out;
  train_pugan(samples, par, cfg.train, cfg.resolved_model(), opts);
  out << "wrote " << (fs::path(cfg.train.out_dir) / "checkpoints").string() << "\n";
  return kExitOk;
}

int cmd_enhance(const CommonFlags& common, const EnhanceFlags& f, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(f.ckpt);
  ckpt.require_stage(Stage::kPugan, "enhance");
  RunConfig cfg = ckpt.run_config();
  if (common.image_size) cfg.train.image_size = *common.image_size;
  cfg.validate();

  std::vector<fs::path> inputs;
  if (fs::is_directory(f.input)) {
    inputs = data::list_images(f.input);
  } else if (fs::is_regular_file(f.input)) {
    inputs.push_back(f.input);
  } else {
    throw data::DataError("input " + f.input + " does not exist");
  }
  if (inputs.empty()) throw data::DataError("no PNG or JPEG images in " + f.input);
  if (fs::is_directory(f.input) && fs::exists(f.output) && fs::equivalent(f.input, f.output))
    throw ConfigError("--output must differ from --input");

  PuganModel<float> model(cfg.resolved_model(), cfg.train.seed);
  model.import_from(ckpt);
  const fs::path dir(f.output);
  fs::create_directories(dir);
  for (const auto& path : inputs) {
    const auto image = data::read_image(path, cfg.train.image_size);
    const auto result = model.enhance(image);
    const std::string stem = path.stem().string();
    data::write_image(dir / (stem + ".png"), result.image.value());
    if (f.save_intermediates) {
      data::write_image(dir / (stem + "_jprime.png"), result.par.j_prime.value());
      data::write_false_color(dir / (stem + "_t.png"), result.par.t.value());
      data::write_depth(dir / (stem + "_d1.png"), result.par.d1.value());
    }
  }
  out << "enhanced " << inputs.size() << " image(s) into " << dir.string() << "\n";
  return kExitOk;
}

int cmd_eval(const CommonFlags& common, const EvalFlags& f, std::ostream& out) {
  RunConfig cfg;
  if (!common.config.empty()) cfg = load_run_config(common.config, cfg);
  if (!f.metrics.empty()) cfg.metrics.names = split_list(f.metrics);
  if (f.block_size) cfg.metrics.block_size = *f.block_size;
  cfg.metrics.validate();
  const int size = common.image_size.value_or(0);

  metrics::MetricReport report;
  report.columns = metrics::normalize_columns(cfg.metrics.names);
  const bool needs_gt = std::any_of(report.columns.begin(), report.columns.end(),
                                    [](const std::string& c) { return c == "psnr" || c == "mse"; });
  if (needs_gt && f.gt.empty()) throw ConfigError("psnr and mse need --gt");

  std::map<std::string, fs::path> preds, gts;
  for (const auto& p : data::list_images(f.pred)) preds.emplace(p.stem().string(), p);
  if (!f.gt.empty()) {
    for (const auto& p : data::list_images(f.gt)) gts.emplace(p.stem().string(), p);
    std::string orphans;
    for (const auto& [stem, p] : preds)
      if (!gts.count(stem)) orphans += " pred:" + stem;
    for (const auto& [stem, p] : gts)
      if (!preds.count(stem)) orphans += " gt:" + stem;
    if (!orphans.empty()) throw data::DataError("unmatched prediction/reference images:" + orphans);
  }
  if (preds.empty()) throw data::DataError("no PNG or JPEG images in " + f.pred);

  const metrics::Options opts{cfg.metrics.block_size, cfg.metrics.alpha_trim};
  for (const auto& [stem, path] : preds) {
    const auto image = data::read_image(path, size);
    std::optional<Tensor<float>> gt;
    if (!f.gt.empty()) {
      gt = data::read_image(gts.at(stem), size);
      if (gt->shape() != image.shape())
        throw data::DataError("'" + stem + "' differs in size from its reference; pass --image-size to resample both");
    }
    report.rows.push_back(metrics::evaluate_image(stem, image, needs_gt ? &*gt : nullptr, report.columns, opts));
  }
  metrics::finalize(report);
  metrics::write_report(f.report, report);
  out << "evaluated " << report.rows.size() << " image(s)";
  for (const auto& [name, v] : report.mean.values) out << " " << name << "=" << v;
  out << "\n";
  return kExitOk;
}

int cmd_make_fixtures(const FixtureFlags& f, std::ostream& out) {
  if (f.count < 1) throw ConfigError("--count must be >= 1");
  if (f.size <= 0 || f.size % 32 != 0) throw ConfigError("--size must be a positive multiple of 32");
  const auto samples = data::make_fixture_set(f.count, f.size, f.seed);
  data::write_synthetic(f.out, samples);
  data::write_paired(f.out, data::fixture_pairs(samples), data::Split::kTrain);
  out << "wrote " << samples.size() << " fixtures to " << f.out << "\n";
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Physics-guided underwater image enhancement", "pugan"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  CommonFlags common;
  TrainFlags par_flags, train_flags;
  EnhanceFlags enhance_flags;
  EvalFlags eval_flags;
  FixtureFlags fixture_flags;

  auto* pretrain = app.add_subcommand("pretrain-par", "Pretrain the parameter-estimation network on synthetic data");
  pretrain->add_option("--data", par_flags.data, "Synthetic dataset root (images/, depth/, beta.csv)")->required();
  pretrain->add_option("--out", par_flags.out, "Run directory")->required();
  add_train_overrides(pretrain, par_flags);
  add_common(pretrain, common);

  auto* train = app.add_subcommand("train", "Train the enhancement network against both discriminators");
  train->add_option("--data", train_flags.data, "Paired dataset root (trainA/, trainB/)")->required();
  train->add_option("--par-ckpt", train_flags.par_ckpt, "Pretrained parameter-estimation checkpoint")->required();
  train->add_option("--out", train_flags.out, "Run directory")->required();
  add_train_overrides(train, train_flags);
  train->add_option("--lr-decay-every", train_flags.lr_decay_every, "Epochs between learning-rate decays");
  train->add_option("--lr-decay-factor", train_flags.lr_decay_factor, "Learning-rate multiplier per decay");
  add_common(train, common);

  auto* enhance = app.add_subcommand("enhance", "Enhance images with a trained checkpoint");
  enhance->add_option("--ckpt", enhance_flags.ckpt, "Checkpoint written by train")->required();
  enhance->add_option("--input", enhance_flags.input, "Image file or directory")->required();
  enhance->add_option("--output", enhance_flags.output, "Output directory")->required();
  enhance->add_flag("--save-intermediates", enhance_flags.save_intermediates,
                    "Also write the color-enhanced image, transmission and depth");
  add_common(enhance, common);

  auto* eval = app.add_subcommand("eval", "Score images and write a metric report");
  eval->add_option("--pred", eval_flags.pred, "Directory of images to score")->required();
  eval->add_option("--gt", eval_flags.gt, "Directory of reference images (needed for psnr, mse)");
  eval->add_option("--report", eval_flags.report, "Report path ending in .csv or .json")->required();
  eval->add_option("--metrics", eval_flags.metrics, "Comma-separated subset of psnr,mse,uiqm,uciqe");
  eval->add_option("--block-size", eval_flags.block_size, "Block size of the UIQM sharpness and contrast terms");
  add_common(eval, common);

  auto* fixtures = app.add_subcommand("make-fixtures", "Write a synthetic dataset usable by pretrain-par and train");
  fixtures->add_option("--out", fixture_flags.out, "Output root")->required();
  fixtures->add_option("--count", fixture_flags.count, "Number of samples")->capture_default_str();
  fixtures->add_option("--size", fixture_flags.size, "Image side in pixels")->capture_default_str();
  fixtures->add_option("--seed", fixture_flags.seed, "Random seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const CLI::App* failed = &app;
    for (auto* sub : app.get_subcommands()) failed = sub;
    err << failed->help();
    return kExitConfig;
  }

  try {
    if (pretrain->parsed()) return cmd_pretrain_par(common, par_flags, out);
    if (train->parsed()) return cmd_train(common, train_flags, out);
    if (enhance->parsed()) return cmd_enhance(common, enhance_flags, out);
    if (eval->parsed()) return cmd_eval(common, eval_flags, out);
    if (fixtures->parsed()) return cmd_make_fixtures(fixture_flags, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const data::DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const CheckpointError& e) {
    err << "checkpoint error: " << e.what() << "\n";
    return kExitCheckpoint;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace pugan::cli
