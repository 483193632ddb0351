// Acceptance suite: prints one PASS/FAIL line per criterion and exits non-zero
// if any fails. Criteria can be selected by number: pugan_acceptance 1 5 9
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>
#include <string>

#include "metric_oracles.hpp"
#include "pugan/checkpoint.hpp"
#include "pugan/data.hpp"
#include "pugan/losses.hpp"
#include "pugan/metrics.hpp"
#include "pugan/model.hpp"
#include "pugan/optim.hpp"
#include "pugan/physics.hpp"
#include "pugan/trainer.hpp"
#include "testing.hpp"

namespace pugan {
namespace {

using testing::Gen;
using testing::uniform;
using Clock = std::chrono::steady_clock;

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    detail << (detail.tellp() > 0 ? "; " : "") << what << (ok ? "" : " [failed]");
  }
};

std::string fmt(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
  return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// 1
void physics_round_trip(Verdict& v) {
  const auto t0 = Clock::now();
  Gen g(1);
  std::uniform_real_distribution<double> uj(0.0, 1.0), ut(0.2, 0.9), ub(0.1, 3.0);
  double worst_inv = 0, worst_depth = 0;
  for (int i = 0; i < 1000; ++i) {
    const double j = uj(g), t = ut(g), beta = ub(g);
    const double d = -std::log(t) / beta;
    // Each scalar triple is broadcast over the three colour channels.
    Tensor<double> jt({1, 3, 1, 1}, j), tt({1, 3, 1, 1}, t), zero({1, 3}, 0.0);
    Tensor<double> dt({1, 1, 1, 1}, d), bt({1, 3}, beta);
    const auto back = physics::invert_color_enhanced(physics::synthesize_degraded(jt, tt, zero), tt);
    for (double x : back.values()) worst_inv = std::max(worst_inv, std::abs(x - j));
    const auto dd = physics::depth_from_transmission(physics::transmission_from_depth(dt, bt), bt);
    worst_depth = std::max(worst_depth, std::abs(dd[0] - d));
  }
  const double secs = seconds_since(t0);
  v.require(worst_inv <= 1e-6, "max inversion error " + fmt(worst_inv));
  v.require(worst_depth <= 1e-5, "max depth error " + fmt(worst_depth));
  v.require(secs < 1.0, "runtime " + fmt(secs, 3) + " s");
}

// 2
void analytic_losses(Verdict& v) {
  using V = Var<double>;
  const double par = par_loss(V(Tensor<double>({1, 1, 1, 1}, 0.3)), V(Tensor<double>({1, 1, 1, 1}, 0.7)),
                              V(Tensor<double>({1, 1, 1, 1}, 0.5)), V(Tensor<double>({1, 3}, {1.0, 1.0, 1.0})),
                              V(Tensor<double>({1, 3}, {1.3, 0.7, 1.3})))
                         .value()
                         .item();
  PatchScores<double> half;
  half.map = V(Tensor<double>({1, 1, 1, 1}, 0.5));
  half.per_sample = V(Tensor<double>({1}, 0.5));
  half.mean = V(Tensor<double>::scalar(0.5));
  const double dl = discriminator_loss(half, half).value().item();
  Gen g(2);
  auto y = uniform<double>({2, 3, 8, 8}, g, 0.0, 0.9);
  auto e = y;
  for (auto& x : e.values()) x += 0.1;
  const double l1 = global_similarity_loss(V(e), V(y)).value().item();
  v.require(std::abs(par - 0.7) <= 1e-9, "par_loss " + fmt(par, 12));
  v.require(std::abs(dl - 2 * std::log(2.0)) <= 1e-9, "d_loss " + fmt(dl, 12));
  v.require(std::abs(l1 - 0.1) <= 1e-9, "L1 " + fmt(l1, 12));
}

// 3
void shapes(Verdict& v) {
  const auto t0 = Clock::now();
  ModelConfig cfg;
  PuganModel<float> m(cfg, 3);
  Gen g(3);
  auto image = uniform<float>({2, 3, 256, 256}, g);
  // Batch statistics: at init the running statistics are the identity, so the
  // untrained eval-mode stack pushes some float sigmoids to exactly 1.
  m.generator().train();
  m.par().eval();
  m.style_discriminator().eval();
  m.content_discriminator().eval();
  NoGradGuard ng;
  const auto po = m.par().forward(Var<float>(image));
  const auto out = m.generator().forward(Var<float>(image), po.t, po.j_prime).value();
  bool open_unit = true;
  for (float x : out.values()) open_unit = open_unit && x > 0.0f && x < 1.0f;
  v.require(out.shape() == Shape({2, 3, 256, 256}) && open_unit, "generator " + to_string(out.shape()) + " in (0,1)");

  auto one = uniform<float>({1, 3, 256, 256}, g);
  const auto s1 = d1_score(m.style_discriminator(), Var<float>(one)).map.value().shape();
  const auto s2 =
      d2_score(m.content_discriminator(), Var<float>(one), m.par().depth().forward(Var<float>(one))).map.value().shape();
  v.require(s1 == Shape({1, 1, 16, 16}) && s2 == Shape({1, 1, 16, 16}), "D1 " + to_string(s1) + " D2 " + to_string(s2));

  nn::Rng rng(4);
  Encoder<float> enc(TsieConfig{}, rng);
  enc.eval();
  const auto pyr = enc.forward(Var<float>(one));
  bool halves = pyr.size() == 5;
  const std::array<int, 5> widths{32, 64, 128, 256, 512};
  for (std::size_t k = 0; halves && k < pyr.size(); ++k)
    halves = pyr[k].value().shape() == Shape({1, widths[k], 256 >> (k + 1), 256 >> (k + 1)});
  v.require(halves, "encoder pyramid 128..8 with widths 32..512");
  const double secs = seconds_since(t0);
  v.require(secs < 30.0, "runtime " + fmt(secs, 3) + " s");
}

// 4
void gradient_checks(Verdict& v) {
  using V = Var<double>;
  const auto t0 = Clock::now();
  auto check = [&](const std::string& what, const testing::GradCheckResult& r) {
    const bool ok = r.checked >= 50 && r.worst_rel < 1e-5;
    v.require(ok, what + " rel " + fmt(r.worst_rel, 2) + " n=" + std::to_string(r.checked) + (ok ? "" : " at " + r.worst_where));
  };

  nn::Rng rng(5);
  PatchDiscriminator<double> d1(3, DiscriminatorConfig{}, rng), d2(4, DiscriminatorConfig{}, rng);
  ParConfig small;
  small.width = 4;
  ParSubnet<double> frozen(small, rng);
  frozen.eval();
  frozen.set_requires_grad(false);
  PerceptualExtractor<double> ex;
  Gen g(6);
  V e(uniform<double>({3, 3, 8, 8}, g, 0.1, 0.9)), y(uniform<double>({3, 3, 8, 8}, g, 0.1, 0.9));
  auto g_loss = [&] {
    return total_generator_loss(e, y, d1_score(d1, e), d2_score(d2, e, frozen.depth().forward(e)), LossWeights{}, ex)
        .total;
  };
  const std::vector<std::pair<std::string, std::vector<V>>> g_targets{
      {"E", {e}}, {"D1", d1.parameters()}, {"D2", d2.parameters()}};
  for (const auto& [name, params] : g_targets) {
    d1.set_requires_grad(false);
    d2.set_requires_grad(false);
    check("L_G/" + name, testing::grad_check(g_loss, params, 60, g));
  }

  ParSubnet<double> par(ParConfig{}, rng);
  V image(uniform<double>({2, 3, 8, 8}, g)), depth(uniform<double>({2, 1, 8, 8}, g)),
      beta(uniform<double>({2, 3}, g, 0.3, 2.0));
  auto p_loss = [&] {
    auto out = par.forward(image);
    return par_loss(out.d1, out.d2, depth, out.beta, beta);
  };
  const std::vector<std::pair<std::string, std::vector<V>>> p_targets{{"attenuation", par.attenuation().parameters()},
                                                                       {"depth", par.depth().parameters()},
                                                                       {"transmission", par.transmission().parameters()}};
  for (const auto& [name, params] : p_targets) {
    par.set_requires_grad(false);
    check("L_par/" + name, testing::grad_check(p_loss, params, 60, g));
  }

  // The generator needs sides divisible by 32, so it is checked at 32x32.
  TsieConfig narrow;
  narrow.widths = {3, 4, 4, 5, 5};
  Generator<double> gen(narrow, rng);
  V gi(uniform<double>({2, 3, 32, 32}, g)), gt(uniform<double>({2, 3, 32, 32}, g, 0.05, 0.6)),
      gj(uniform<double>({2, 3, 32, 32}, g)), gw(uniform<double>({2, 3, 32, 32}, g, -1, 1));
  gen.set_requires_grad(false);
  check("generator@32", testing::grad_check([&] { return ops::sum(ops::mul(gen.forward(gi, gt, gj), gw)); },
                                            gen.parameters(), 60, g, 1e-5, 1e-6, gw.value().size()));
  const double secs = seconds_since(t0);
  v.require(secs < 120.0, "runtime " + fmt(secs, 3) + " s");
}

// 5
void dq_semantics(Verdict& v) {
  using V = Var<double>;
  auto mask_value = [](double t) {
    return dq_transmission_mask(V(Tensor<double>({1, 3, 32, 32}, t)), 1, 0.7).value()[0];
  };
  const double m1 = mask_value(1.0), m02 = mask_value(0.2), m04 = mask_value(0.4);
  v.require(m1 == 0.0 && std::abs(m02 - 0.8) < 1e-12 && m04 == 0.0,
            "t mask {" + fmt(m1) + ", " + fmt(m02) + ", " + fmt(m04) + "}");

  nn::Rng rng(7);
  DqLevel<double> dq(4, rng);
  Gen g(8);
  V e(uniform<double>({2, 4, 8, 8}, g));
  double dif_max = 0;
  for (bool train : {true, false}) {
    train ? dq.train() : dq.eval();
    const auto d = dq.difference_mask(e, e, 0.7);
    for (double x : d.value().values()) dif_max = std::max(dif_max, std::abs(x));
  }
  v.require(dif_max == 0.0, "difference_mask(e,e) max " + fmt(dif_max));
  v.require(dq_apply(e, V(Tensor<double>({2, 4, 8, 8}, 0.0))).value() == e.value(), "dq_apply(e,0) = e");

  // Gradient through the step masks at masked positions.
  V t(uniform<double>({1, 3, 8, 8}, g), true);
  auto tm = dq_transmission_mask(t, 1, 0.7);
  ops::sum(tm).backward();
  bool zero_t = true;
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x)
      if (tm.value().at(0, 0, y / 2, x / 2) == 0.0)
        for (int c = 0; c < 3; ++c) zero_t = zero_t && t.grad().at(0, c, y, x) == 0.0;
  V f(uniform<double>({1, 4, 8, 8}, g), true);
  ops::sum(dq_threshold(f, 0.7)).backward();
  bool zero_f = true;
  for (std::size_t i = 0; i < f.value().size(); ++i)
    if (f.value()[i] < 0.7) zero_f = zero_f && f.grad()[i] == 0.0;
  v.require(zero_t && zero_f, "masked-position gradients exactly 0");
}

ModelConfig acceptance_model() { return ModelConfig{}; }

Checkpoint random_par_checkpoint(std::uint64_t seed) {
  PuganModel<float> m(acceptance_model(), seed);
  Checkpoint c;
  c.stage = Stage::kPar;
  export_module(m.par(), kParPrefix, c);
  return c;
}

double mean_psnr(PuganModel<float>& m, const data::PairedDataset& pairs) {
  double s = 0;
  for (const auto& p : pairs) s += metrics::psnr(m.enhance(p.degraded).image.value(), p.reference);
  return s / static_cast<double>(pairs.size());
}

// 6
void overfit(Verdict& v) {
  const auto t0 = Clock::now();
  const auto pairs = data::fixture_pairs(data::make_fixture_set(4, 64, 60));
  const auto par = random_par_checkpoint(61);
  auto cfg = TrainConfig::pugan_defaults();
  cfg.epochs = 200;
  cfg.batch_size = 4;
  cfg.image_size = 64;
  cfg.lr_decay_factor = 1.0;
  cfg.seed = 62;

  PuganModel<float> start(acceptance_model(), cfg.seed);
  import_module(start.par(), kParPrefix, par);
  const double psnr0 = mean_psnr(start, pairs);

  const auto result = train_pugan(pairs, par, cfg, acceptance_model());
  PuganModel<float> end(acceptance_model(), 0);
  end.import_from(result.checkpoint);
  const double psnr1 = mean_psnr(end, pairs);
  const double l1_0 = result.log.front().l1, l1_1 = result.log.back().l1;
  const double secs = seconds_since(t0);
  v.require(result.log.size() == 200, std::to_string(result.log.size()) + " generator steps");
  v.require(l1_1 <= 0.5 * l1_0, "L1 " + fmt(l1_0) + " -> " + fmt(l1_1));
  v.require(psnr1 > psnr0, "PSNR " + fmt(psnr0) + " -> " + fmt(psnr1) + " dB");
  v.require(secs < 600.0, "runtime " + fmt(secs, 3) + " s");
}

// 7
void discriminator_learns(Verdict& v) {
  const auto pairs = data::fixture_pairs(data::make_fixture_set(4, 64, 70));
  PuganModel<float> m(acceptance_model(), 71);
  std::vector<const Tensor<float>*> deg, ref;
  for (const auto& p : pairs) {
    deg.push_back(&p.degraded);
    ref.push_back(&p.reference);
  }
  const Var<float> real(data::stack(ref));
  Var<float> fake;
  {
    NoGradGuard ng;
    m.par().eval();
    m.generator().eval();
    const Var<float> image(data::stack(deg));
    const auto po = m.par().forward(image);
    fake = m.generator().forward(image, po.t, po.j_prime);
  }
  auto& d1 = m.style_discriminator();
  Adam<float> opt(d1.parameters(), AdamOptions{});
  d1.train();
  for (int step = 0; step < 50; ++step) {
    auto loss = discriminator_loss(d1_score(d1, real), d1_score(d1, fake));
    opt.zero_grad();
    loss.backward();
    opt.step();
  }
  d1.eval();
  NoGradGuard ng;
  const double sr = d1_score(d1, real).mean.value().item(), sf = d1_score(d1, fake).mean.value().item();
  v.require(sr > sf, "score real " + fmt(sr) + " vs fake " + fmt(sf));
}

// 8
void par_pretraining(Verdict& v) {
  const auto t0 = Clock::now();
  const auto samples = data::make_fixture_set(20, 64, 80);
  auto cfg = TrainConfig::par_defaults();
  cfg.image_size = 64;
  cfg.seed = 81;
  std::vector<Tensor<float>> frozen;
  bool attenuation_frozen = true;
  TrainOptions opts;
  opts.on_par_epoch = [&](int phase, int, ParSubnet<float>& par) {
    std::vector<Tensor<float>> now;
    for (auto& p : par.attenuation().parameters()) now.push_back(p.value());
    if (phase == 1) frozen = now;
    else attenuation_frozen = attenuation_frozen && now == frozen;
  };
  const auto r = pretrain_par(samples, cfg, acceptance_model(), opts);
  const double secs = seconds_since(t0);
  v.require(r.log.size() == 2u * 60 * 5, std::to_string(r.log.size()) + " steps (60+60 epochs)");
  v.require(r.final.total <= 0.5 * r.initial.total, "par_loss " + fmt(r.initial.total) + " -> " + fmt(r.final.total));
  v.require(attenuation_frozen, "attenuation bitwise frozen in phase 2");
  v.require(secs < 600.0, "runtime " + fmt(secs, 3) + " s");
}

// 9
void metric_oracles(Verdict& v) {
  Gen g(9);
  auto a = uniform<double>({1, 3, 8, 8}, g, 0.0, 0.9);
  auto b = a;
  for (auto& x : b.values()) x += 1.0 / 255.0;
  const double m = metrics::mse(a, b), p = metrics::psnr(a, b);
  v.require(std::abs(m - 1.0) <= 1e-6 && std::abs(p - 20 * std::log10(255.0)) <= 1e-6,
            "MSE " + fmt(m, 10) + " PSNR " + fmt(p, 10));

  bool zero = true;
  for (double c : {0.0, 0.5, 1.0}) {
    Tensor<double> flat({1, 3, 8, 8}, c);
    zero = zero && metrics::uiqm(flat) == 0.0 && metrics::uciqe(flat) == 0.0;
  }
  v.require(zero, "constant images score 0");

  double worst_uiqm = 0, worst_uciqe = 0;
  for (int trial = 0; trial < 100; ++trial) {
    auto img = uniform<double>({1, 3, 8, 8}, g);
    const auto px = testing::to_img(img);
    worst_uiqm = std::max(worst_uiqm, std::abs(metrics::uiqm(img) - testing::oracle_uiqm(px, 8, 0.1).uiqm));
    worst_uciqe = std::max(worst_uciqe, std::abs(metrics::uciqe(img) - testing::oracle_uciqe(px).uciqe));
  }
  v.require(worst_uiqm <= 1e-6 && worst_uciqe <= 1e-6,
            "oracle error UIQM " + fmt(worst_uiqm, 2) + " UCIQE " + fmt(worst_uciqe, 2));
}

// 10
void determinism(Verdict& v) {
  testing::TempDir dir;
  const auto pairs = data::fixture_pairs(data::make_fixture_set(4, 64, 100));
  const auto par = random_par_checkpoint(101);
  auto cfg = TrainConfig::pugan_defaults();
  cfg.epochs = 2;
  cfg.batch_size = 2;
  cfg.image_size = 64;
  cfg.seed = 102;
  std::string bytes[2];
  for (int run = 0; run < 2; ++run) {
    cfg.out_dir = (dir / ("run" + std::to_string(run))).string();
    train_pugan(pairs, par, cfg, acceptance_model());
    bytes[run] = serialize_checkpoint(load_checkpoint(dir / ("run" + std::to_string(run)) / "checkpoints" / "epoch_2.ckpt"));
  }
  v.require(!bytes[0].empty() && bytes[0] == bytes[1], "two seeded runs give identical checkpoints");

  const auto ckpt = load_checkpoint(dir / "run0" / "checkpoints" / "epoch_2.ckpt");
  save_checkpoint(dir / "copy.ckpt", ckpt);
  PuganModel<float> a(acceptance_model(), 1), b(acceptance_model(), 2);
  a.import_from(ckpt);
  b.import_from(load_checkpoint(dir / "copy.ckpt"));
  const auto ea = a.enhance(pairs[0].degraded), eb = b.enhance(pairs[0].degraded);
  v.require(ea.image.value() == eb.image.value() && ea.par.t.value() == eb.par.t.value(),
            "save/load preserves outputs bitwise");
}

}  // namespace
}  // namespace pugan

int main(int argc, char** argv) {
  using namespace pugan;
  const std::vector<std::pair<const char*, std::function<void(Verdict&)>>> criteria{
      {"physics round-trip", physics_round_trip},
      {"analytic loss values", analytic_losses},
      {"shape suite", shapes},
      {"gradient checks", gradient_checks},
      {"DQ semantics", dq_semantics},
      {"overfit convergence", overfit},
      {"discriminator learnability", discriminator_learns},
      {"par-subnet pretraining", par_pretraining},
      {"metric oracles", metric_oracles},
      {"determinism and persistence", determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    Verdict v;
    const auto t0 = Clock::now();
    try {
      criteria[i].second(v);
    } catch (const std::exception& e) {
      v.require(false, std::string("exception: ") + e.what());
    }
    std::printf("%s %2d %s (%.1f s): %s\n", v.pass ? "PASS" : "FAIL", id, criteria[i].first, seconds_since(t0),
                v.detail.str().c_str());
    std::fflush(stdout);
    failed += !v.pass;
  }
  return failed == 0 ? 0 : 1;
}
