#include "pugan/trainer.hpp"

#include <charconv>
#include <fstream>
#include <ostream>

#include <nlohmann/json.hpp>

#include "pugan/optim.hpp"
#include "pugan/physics.hpp"
#include "pugan/prefetch.hpp"

namespace pugan {
namespace {

namespace fs = std::filesystem;

std::string num(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

// run/{config.snapshot, log.csv, manifest.json, checkpoints/epoch_N.ckpt}
class RunDirectory {
 public:
  RunDirectory(const std::string& root, Stage stage, const std::string& snapshot, const std::string& log_header)
      : root_(root), stage_(stage) {
    if (root_.empty()) return;
    fs::create_directories(root_ / "checkpoints");
    std::ofstream(root_ / "config.snapshot", std::ios::trunc) << snapshot << '\n';
    log_.open(root_ / "log.csv", std::ios::trunc);
    if (!log_) throw std::runtime_error("cannot write " + (root_ / "log.csv").string());
    log_ << log_header << '\n';
  }

  bool enabled() const { return !root_.empty(); }

  void log(const std::string& row) {
    if (enabled()) log_ << row << '\n';
  }

  void checkpoint(const Checkpoint& ckpt, int epoch) {
    if (!enabled()) return;
    log_.flush();
    const std::string rel = "checkpoints/epoch_" + std::to_string(epoch) + ".ckpt";
    save_checkpoint(root_ / rel, ckpt);
    written_.push_back(rel);
    nlohmann::ordered_json manifest = {
        {"stage", to_string(stage_)}, {"latest", rel}, {"epoch", epoch}, {"checkpoints", written_}};
    std::ofstream(root_ / "manifest.json", std::ios::trunc) << manifest.dump(2) << '\n';
  }

 private:
  fs::path root_;
  Stage stage_;
  std::ofstream log_;
  std::vector<std::string> written_;
};

AdamOptions adam_for(const TrainConfig& cfg) {
  AdamOptions a = cfg.adam;
  a.lr = lr_at(0, cfg);
  return a;
}

void validate_inputs(const TrainConfig& cfg, const ModelConfig& model) {
  RunConfig rc;
  rc.model = model;
  rc.train = cfg;
  rc.train.dq_alpha = model.tsie.dq_alpha;
  rc.train.validate();
  rc.model.validate();
}

std::string snapshot(const TrainConfig& cfg, const ModelConfig& model, Stage stage, bool include_paths) {
  RunConfig rc;
  rc.model = model;
  rc.train = cfg;
  rc.train.stage = stage;
  rc.train.dq_alpha = model.tsie.dq_alpha;
  return dump_run_config(rc, include_paths);
}

Checkpoint par_checkpoint(ParSubnet<float>& par, int epoch, long step, const std::string& config) {
  Checkpoint c;
  c.stage = Stage::kPar;
  c.epoch = epoch;
  c.step = step;
  c.config = config;
  export_module(par, kParPrefix, c);
  return c;
}

std::vector<Tensor<float>> copy_buffers(nn::Module<float>& m) {
  std::vector<Tensor<float>> out;
  for (auto& [name, b] : m.named_buffers()) out.push_back(*b);
  return out;
}

void restore_buffers(nn::Module<float>& m, const std::vector<Tensor<float>>& saved) {
  auto buffers = m.named_buffers();
  for (std::size_t i = 0; i < buffers.size(); ++i) *buffers[i].second = saved[i];
}

}  // namespace

ParLossStats evaluate_par_loss(ParSubnet<float>& par, const data::SyntheticDataset& samples, int batch_size) {
  if (samples.empty()) throw data::DataError("evaluate_par_loss: dataset is empty");
  NoGradGuard no_grad;
  const bool was_training = par.is_training();
  par.eval();
  ParLossStats s;
  for (std::size_t i = 0; i < samples.size(); i += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t k = i; k < std::min(samples.size(), i + batch_size); ++k) idx.push_back(k);
    const auto b = data::make_batch(samples, idx);
    auto out = par.forward(Var<float>(b.degraded));
    auto terms = par_loss_terms(out.d1, out.d2, Var<float>(b.depth), out.beta, Var<float>(b.beta));
    const double w = static_cast<double>(idx.size());
    s.depth_direct += w * terms.depth_direct.value().item();
    s.depth_recovered += w * terms.depth_recovered.value().item();
    s.attenuation += w * terms.attenuation.value().item();
    s.total += w * terms.total.value().item();
  }
  const double n = static_cast<double>(samples.size());
  s.depth_direct /= n;
  s.depth_recovered /= n;
  s.attenuation /= n;
  s.total /= n;
  par.train(was_training);
  return s;
}

ParTrainResult pretrain_par(const data::SyntheticDataset& samples, const TrainConfig& cfg, const ModelConfig& model,
                            const TrainOptions& opts) {
  validate_inputs(cfg, model);
  if (samples.empty()) throw data::DataError("pretrain_par: dataset is empty");
  for (const auto& s : samples) {
    if (s.depth.empty()) throw data::DataError("pretrain_par: sample '" + s.id + "' has no depth label");
    try {
      s.beta.validate();
    } catch (const physics::PhysicsError& e) {
      throw data::DataError("pretrain_par: sample '" + s.id + "': " + e.what());
    }
  }

  nn::Rng init_rng(cfg.seed);
  ParSubnet<float> par(model.par, init_rng);
  if (opts.init) {
    opts.init->require_stage(Stage::kPar, "pretrain_par");
    import_module(par, kParPrefix, *opts.init);
  }
  const std::string config = snapshot(cfg, model, Stage::kPar, false);
  RunDirectory run(cfg.out_dir, Stage::kPar, snapshot(cfg, model, Stage::kPar, true), "phase,epoch,step,loss,lr");

  ParTrainResult result;
  result.initial = evaluate_par_loss(par, samples, cfg.batch_size);
  std::mt19937_64 order_rng(cfg.seed);
  long step = 0;

  // Everything outside `trained` stays frozen for the whole phase.
  auto run_phase = [&](int phase, const std::vector<Var<float>>& trained, auto&& loss_fn) {
    par.set_requires_grad(false);
    for (auto p : trained) p.set_requires_grad(true);
    Adam<float> opt(trained, adam_for(cfg));
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      const double lr = lr_at(epoch, cfg);
      opt.set_lr(lr);
      par.train();
      const auto batches = data::epoch_batches(samples.size(), cfg.batch_size, order_rng);
      BatchQueue<data::SyntheticBatch> queue(batches.size(),
                                             [&](std::size_t i) { return data::make_batch(samples, batches[i]); });
      double sum = 0.0;
      while (auto batch = queue.next()) {
        Var<float> loss = loss_fn(*batch);
        opt.zero_grad();
        loss.backward();
        opt.step();
        ++step;
        const double v = loss.value().item();
        sum += v;
        result.log.push_back({phase, epoch + 1, step, v, lr});
        run.log(std::to_string(phase) + "," + std::to_string(epoch + 1) + "," + std::to_string(step) + "," + num(v) +
                "," + num(lr));
      }
      if (opts.progress)
        *opts.progress << "[par] phase " << phase << " epoch " << epoch + 1 << "/" << cfg.epochs
                       << " loss=" << sum / static_cast<double>(batches.size()) << '\n';
      if (phase == 2) run.checkpoint(par_checkpoint(par, epoch + 1, step, config), epoch + 1);
      if (opts.on_par_epoch) opts.on_par_epoch(phase, epoch + 1, par);
    }
    par.set_requires_grad(false);
  };

  run_phase(1, par.attenuation().parameters(), [&](const data::SyntheticBatch& b) {
    auto beta = par.attenuation().forward(Var<float>(b.degraded));
    return ops::mean(ops::abs(ops::sub(beta, Var<float>(b.beta))));
  });

  auto depth_params = par.depth().parameters();
  for (auto& p : par.transmission().parameters()) depth_params.push_back(p);
  run_phase(2, depth_params, [&](const data::SyntheticBatch& b) {
    auto out = par.forward(Var<float>(b.degraded));
    auto terms = par_loss_terms(out.d1, out.d2, Var<float>(b.depth), out.beta, Var<float>(b.beta));
    return ops::add(terms.depth_direct, terms.depth_recovered);
  });

  result.final = evaluate_par_loss(par, samples, cfg.batch_size);
  result.checkpoint = par_checkpoint(par, cfg.epochs, step, config);
  return result;
}

PuganTrainResult train_pugan(const data::PairedDataset& samples, const Checkpoint& par_ckpt, const TrainConfig& cfg,
                             const ModelConfig& model, const TrainOptions& opts) {
  validate_inputs(cfg, model);
  par_ckpt.require_stage(Stage::kPar, "train_pugan");
  if (samples.empty()) throw data::DataError("train_pugan: dataset is empty");
  const Shape& shape = samples.front().degraded.shape();
  for (const auto& s : samples) {
    if (s.degraded.shape() != shape || s.reference.shape() != shape)
      throw data::DataError("train_pugan: sample '" + s.id + "' has size " + to_string(s.degraded.shape()) +
                            ", expected " + to_string(shape));
  }
  if (shape[2] % 32 != 0 || shape[3] % 32 != 0)
    throw data::DataError("train_pugan: image height and width must be multiples of 32, got " + to_string(shape));

  PuganModel<float> m(model, cfg.seed);
  import_module(m.par(), kParPrefix, par_ckpt);
  auto& par = m.par();
  auto& gen = m.generator();
  auto& d1 = m.style_discriminator();
  auto& d2 = m.content_discriminator();
  par.eval();
  par.set_requires_grad(false);

  const std::string config = snapshot(cfg, model, Stage::kPugan, false);
  RunDirectory run(cfg.out_dir, Stage::kPugan, snapshot(cfg, model, Stage::kPugan, true),
                   "epoch,step,g_loss,d1_loss,d2_loss,l1,perceptual,lr");

  Adam<float> opt_g(gen.parameters(), adam_for(cfg));
  Adam<float> opt_d1(d1.parameters(), adam_for(cfg));
  Adam<float> opt_d2(d2.parameters(), adam_for(cfg));
  std::mt19937_64 order_rng(cfg.seed);
  PuganTrainResult result;
  long step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at(epoch, cfg);
    opt_g.set_lr(lr);
    opt_d1.set_lr(lr);
    opt_d2.set_lr(lr);
    gen.train();
    d1.train();
    d2.train();
    const auto batches = data::epoch_batches(samples.size(), cfg.batch_size, order_rng);
    BatchQueue<data::PairedBatch> queue(batches.size(),
                                        [&](std::size_t i) { return data::make_batch(samples, batches[i]); });
    PuganLogRow mean{epoch + 1, 0, 0, 0, 0, 0, 0, lr};
    while (auto batch = queue.next()) {
      Var<float> image(batch->degraded), reference(batch->reference);
      ParOutputs<float> po;
      Var<float> depth_ref;
      {
        NoGradGuard no_grad;
        po = par.forward(image);
        depth_ref = par.depth().forward(reference);
      }

      // Generator step. The discriminators see the batch in training mode, but
      // their running statistics are restored so this step leaves them untouched.
      d1.set_requires_grad(false);
      d2.set_requires_grad(false);
      const auto d1_stats = copy_buffers(d1);
      const auto d2_stats = copy_buffers(d2);
      Var<float> enhanced = gen.forward(image, po.t, po.j_prime);
      Var<float> depth_enhanced = par.depth().forward(enhanced);
      auto g = total_generator_loss(enhanced, reference, d1_score(d1, enhanced),
                                    d2_score(d2, enhanced, depth_enhanced), cfg.loss_weights, m.perceptual());
      opt_g.zero_grad();
      g.total.backward();
      opt_g.step();
      restore_buffers(d1, d1_stats);
      restore_buffers(d2, d2_stats);
      if (opts.on_update) opts.on_update(UpdateKind::kGenerator, m);

      const Var<float> fake = enhanced.detach();
      const Var<float> fake_depth = depth_enhanced.detach();

      d1.set_requires_grad(true);
      auto l_d1 = discriminator_loss(d1_score(d1, reference), d1_score(d1, fake));
      opt_d1.zero_grad();
      l_d1.backward();
      opt_d1.step();
      d1.set_requires_grad(false);
      if (opts.on_update) opts.on_update(UpdateKind::kStyleDiscriminator, m);

      d2.set_requires_grad(true);
      auto l_d2 = discriminator_loss(d2_score(d2, reference, depth_ref), d2_score(d2, fake, fake_depth));
      opt_d2.zero_grad();
      l_d2.backward();
      opt_d2.step();
      d2.set_requires_grad(false);
      if (opts.on_update) opts.on_update(UpdateKind::kContentDiscriminator, m);

      ++step;
      PuganLogRow row{epoch + 1,
                      step,
                      g.total.value().item(),
                      l_d1.value().item(),
                      l_d2.value().item(),
                      g.l1.value().item(),
                      g.perceptual.value().item(),
                      lr};
      result.log.push_back(row);
      run.log(std::to_string(row.epoch) + "," + std::to_string(row.step) + "," + num(row.g_loss) + "," +
              num(row.d1_loss) + "," + num(row.d2_loss) + "," + num(row.l1) + "," + num(row.perceptual) + "," +
              num(row.lr));
      mean.g_loss += row.g_loss;
      mean.d1_loss += row.d1_loss;
      mean.d2_loss += row.d2_loss;
      mean.l1 += row.l1;
    }
    if (opts.progress) {
      const double k = static_cast<double>(batches.size());
      *opts.progress << "[pugan] epoch " << epoch + 1 << "/" << cfg.epochs << " g=" << mean.g_loss / k
                     << " d1=" << mean.d1_loss / k << " d2=" << mean.d2_loss / k << " l1=" << mean.l1 / k
                     << " lr=" << lr << '\n';
    }
    Checkpoint ckpt;
    ckpt.stage = Stage::kPugan;
    ckpt.epoch = epoch + 1;
    ckpt.step = step;
    ckpt.config = config;
    m.export_to(ckpt);
    run.checkpoint(ckpt, epoch + 1);
    result.checkpoint = std::move(ckpt);
  }
  return result;
}

}  // namespace pugan
