#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "pugan/par_subnet.hpp"
#include "pugan/physics.hpp"
#include "testing.hpp"

namespace pugan {
namespace {

using testing::Gen;
using testing::uniform;
using V = Var<double>;

ParConfig small() {
  ParConfig c;
  c.width = 4;
  c.hidden = 6;
  return c;
}

TEST(ParSubnet, OutputShapesAndRanges) {
  nn::Rng rng(1);
  ParSubnet<double> par(small(), rng);
  Gen g(2);
  auto out = par.forward(V(uniform<double>({2, 3, 16, 12}, g)));
  EXPECT_EQ(out.beta.shape(), (Shape{2, 3}));
  EXPECT_EQ(out.d1.shape(), (Shape{2, 1, 16, 12}));
  EXPECT_EQ(out.t.shape(), (Shape{2, 3, 16, 12}));
  EXPECT_EQ(out.d2.shape(), (Shape{2, 1, 16, 12}));
  EXPECT_EQ(out.j_prime.shape(), (Shape{2, 3, 16, 12}));
  for (double v : out.beta.value().values()) EXPECT_GT(v, 0.0);
  for (double v : out.d1.value().values()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
  for (double v : out.t.value().values()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
  for (double v : out.d2.value().values()) EXPECT_TRUE(std::isfinite(v));
}

TEST(ParSubnet, JPrimeIsThePhysicalInversion) {
  nn::Rng rng(3);
  ParSubnet<float> par(ParConfig{}, rng);
  par.eval();
  Gen g(4);
  auto img = uniform<float>({1, 3, 8, 8}, g);
  auto out = par.forward(Var<float>(img));
  EXPECT_EQ(out.j_prime.value(), physics::invert_color_enhanced(img, out.t.value()));
  EXPECT_EQ(out.d2.value(), physics::depth_from_transmission(out.t.value(), out.beta.value()));
}

TEST(ParSubnet, EvalModeIsDeterministic) {
  nn::Rng rng(5);
  ParSubnet<float> par(ParConfig{}, rng);
  par.eval();
  Gen g(6);
  auto img = uniform<float>({1, 3, 8, 8}, g);
  Tensor<float> two({2, 3, 8, 8});
  std::copy(img.values().begin(), img.values().end(), two.values().begin());
  std::copy(img.values().begin(), img.values().end(), two.values().begin() + img.size());
  auto a = par.forward(Var<float>(img));
  auto b = par.forward(Var<float>(img));
  EXPECT_EQ(a.beta.value(), b.beta.value());
  EXPECT_EQ(a.j_prime.value(), b.j_prime.value());
  auto pair = par.forward(Var<float>(two)).beta.value();
  EXPECT_EQ(pair[0], pair[3]);
  EXPECT_EQ(pair[1], pair[4]);
  EXPECT_EQ(pair[2], pair[5]);
}

TEST(ParSubnet, ParameterNamesAreUniqueAndCoverThreeEstimators) {
  nn::Rng rng(7);
  ParSubnet<float> par(ParConfig{}, rng);
  std::set<std::string> names;
  int att = 0, depth = 0, trans = 0;
  for (auto& [name, p] : par.named_parameters()) {
    EXPECT_TRUE(names.insert(name).second) << name;
    att += name.rfind("attenuation.", 0) == 0;
    depth += name.rfind("depth.", 0) == 0;
    trans += name.rfind("transmission.", 0) == 0;
    for (float v : p.value().values()) EXPECT_TRUE(std::isfinite(v));
  }
  EXPECT_EQ(att, 3 * 8);  // per channel: two convs and two linears, weight + bias each
  EXPECT_GT(depth, 0);
  EXPECT_GT(trans, 0);
  EXPECT_EQ(static_cast<std::size_t>(att + depth + trans), names.size());
}

TEST(ParSubnet, RejectsNonRgbInput) {
  nn::Rng rng(8);
  ParSubnet<double> par(small(), rng);
  EXPECT_THROW(par.forward(V(Tensor<double>({1, 1, 8, 8}))), ShapeError);
}

TEST(ParLoss, ZeroWhenEverythingMatches) {
  Gen g(9);
  V d(uniform<double>({2, 1, 4, 4}, g)), beta(uniform<double>({2, 3}, g, 0.3, 2));
  EXPECT_EQ(par_loss(d, d, d, beta, beta).value().item(), 0.0);
}

TEST(ParLoss, HandComputedCase) {
  V gt(Tensor<double>({1, 1, 1, 1}, 0.5));
  V d1(Tensor<double>({1, 1, 1, 1}, 0.3));
  V d2(Tensor<double>({1, 1, 1, 1}, 0.7));
  V beta(Tensor<double>({1, 3}, {1.0, 1.0, 1.0}));
  V beta_gt(Tensor<double>({1, 3}, {1.3, 0.7, 1.3}));
  EXPECT_NEAR(par_loss(d1, d2, gt, beta, beta_gt).value().item(), 0.7, 1e-9);
}

double par_loss_oracle(const Tensor<double>& d1, const Tensor<double>& d2, const Tensor<double>& gt,
                       const Tensor<double>& beta, const Tensor<double>& beta_gt) {
  const int n = gt.dim(0), h = gt.dim(2), w = gt.dim(3);
  double total = 0.0;
  for (int b = 0; b < n; ++b) {
    double s1 = 0.0, s2 = 0.0, sb = 0.0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        s1 += std::abs(gt.at(b, 0, y, x) - d1.at(b, 0, y, x));
        s2 += std::abs(gt.at(b, 0, y, x) - d2.at(b, 0, y, x));
      }
    for (int c = 0; c < 3; ++c) sb += std::abs(beta_gt[b * 3 + c] - beta[b * 3 + c]);
    total += (s1 + s2) / (h * w) + sb / 3.0;
  }
  return total / n;
}

TEST(ParLossProperty, MatchesScalarOracleAndIsPixelPermutationInvariant) {
  Gen g(10);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = testing::uniform_int(g, 1, 3), h = testing::uniform_int(g, 1, 6), w = testing::uniform_int(g, 1, 6);
    auto d1 = uniform<double>({n, 1, h, w}, g), d2 = uniform<double>({n, 1, h, w}, g);
    auto gt = uniform<double>({n, 1, h, w}, g);
    auto beta = uniform<double>({n, 3}, g, 0.1, 3), beta_gt = uniform<double>({n, 3}, g, 0.1, 3);
    const double v = par_loss(V(d1), V(d2), V(gt), V(beta), V(beta_gt)).value().item();
    EXPECT_NEAR(v, par_loss_oracle(d1, d2, gt, beta, beta_gt), 1e-6);
    EXPECT_GE(v, 0.0);

    // Apply one random pixel permutation to all three depth maps.
    std::vector<int> perm(h * w);
    for (int i = 0; i < h * w; ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), g);
    auto permute = [&](const Tensor<double>& t) {
      Tensor<double> out(t.shape());
      for (int b = 0; b < n; ++b)
        for (int i = 0; i < h * w; ++i) out[b * h * w + i] = t[b * h * w + perm[i]];
      return out;
    };
    const double pv = par_loss(V(permute(d1)), V(permute(d2)), V(permute(gt)), V(beta), V(beta_gt)).value().item();
    EXPECT_NEAR(pv, v, 1e-12);
  }
}

TEST(ParLoss, ShapeMismatchThrows) {
  V a(Tensor<double>({1, 1, 4, 4})), b(Tensor<double>({1, 1, 4, 5})), beta(Tensor<double>({1, 3}));
  EXPECT_THROW(par_loss(a, b, a, beta, beta), ShapeError);
}

TEST(ParSubnet, DepthEstimatorGradientMatchesFiniteDifferences) {
  nn::Rng rng(11);
  ParSubnet<double> par(small(), rng);
  Gen g(12);
  V img(uniform<double>({2, 3, 8, 8}, g));
  auto r = testing::grad_check([&] { return ops::sum(par.depth().forward(img)); }, par.depth().parameters(), 60, g);
  EXPECT_GE(r.checked, 50);
  EXPECT_LT(r.worst_rel, 1e-5) << r.worst_where;
}

}  // namespace
}  // namespace pugan
