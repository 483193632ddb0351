#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "pugan/discriminators.hpp"
#include "testing.hpp"

namespace pugan {
namespace {

using testing::Gen;
using testing::uniform;

TEST(Discriminators, PatchGridIsSixteenthOfInput) {
  nn::Rng rng(1);
  DiscriminatorConfig cfg;
  cfg.widths = {8, 8, 8, 1};
  PatchDiscriminator<float> d1(3, cfg, rng), d2(4, cfg, rng);
  Gen g(2);
  for (auto [h, w] : {std::pair{64, 64}, std::pair{32, 96}, std::pair{40, 24}}) {
    Var<float> img(uniform<float>({2, 3, h, w}, g)), depth(uniform<float>({2, 1, h, w}, g));
    auto s1 = d1_score(d1, img);
    auto s2 = d2_score(d2, img, depth);
    const Shape expect{2, 1, (h + 15) / 16, (w + 15) / 16};
    EXPECT_EQ(s1.map.shape(), expect);
    EXPECT_EQ(s2.map.shape(), expect);
    EXPECT_EQ(s1.per_sample.shape(), (Shape{2}));
    for (float v : s1.map.value().values()) {
      EXPECT_GT(v, 0.0f);
      EXPECT_LT(v, 1.0f);
    }
    double m = 0;
    for (float v : s1.map.value().values()) m += v;
    EXPECT_NEAR(s1.mean.value().item(), m / s1.map.value().size(), 1e-6);
  }
}

TEST(Discriminators, ChannelContractIsChecked) {
  nn::Rng rng(3);
  DiscriminatorConfig cfg;
  cfg.widths = {4, 4, 4, 1};
  PatchDiscriminator<float> d1(3, cfg, rng), d2(4, cfg, rng);
  Var<float> img(Tensor<float>({1, 3, 32, 32})), gray(Tensor<float>({1, 1, 32, 32}));
  EXPECT_THROW(d1_score(d1, gray), ShapeError);
  EXPECT_THROW(d2_score(d2, img, Var<float>(Tensor<float>({1, 1, 16, 32}))), ShapeError);
  EXPECT_THROW(d2_score(d1, img, gray), ShapeError);
  cfg.widths = {4, 4, 4, 2};
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(Discriminators, ShareNoParametersAndEvalIsDeterministic) {
  nn::Rng rng(4);
  PatchDiscriminator<float> d1(3, DiscriminatorConfig{}, rng), d2(4, DiscriminatorConfig{}, rng);
  std::set<const void*> nodes;
  for (auto& p : d1.parameters()) nodes.insert(p.node().get());
  for (auto& p : d2.parameters()) EXPECT_EQ(nodes.count(p.node().get()), 0u);
  d1.eval();
  Gen g(5);
  Var<float> img(uniform<float>({1, 3, 32, 32}, g));
  EXPECT_EQ(d1_score(d1, img).map.value(), d1_score(d1, img).map.value());
}

TEST(Discriminators, ContentDiscriminatorDependsOnDepth) {
  nn::Rng rng(6);
  PatchDiscriminator<float> d2(4, DiscriminatorConfig{}, rng);
  d2.eval();
  Gen g(7);
  auto img = uniform<float>({2, 3, 32, 32}, g);
  auto depth = uniform<float>({2, 1, 32, 32}, g);
  auto shuffled = depth;
  std::shuffle(shuffled.values().begin(), shuffled.values().end(), g);
  auto a = d2_score(d2, Var<float>(img), Var<float>(depth)).map.value();
  auto b = d2_score(d2, Var<float>(img), Var<float>(shuffled)).map.value();
  double delta = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) delta += std::abs(a[i] - b[i]);
  EXPECT_GT(delta / a.size(), 0.0);
}

TEST(Discriminators, ReceptiveFieldOfPatchGrid) {
  // Four 3x3 stride-2 convolutions: rf = 1 + 2*(1 + 2 + 4 + 8) = 31 input pixels.
  // Perturbing one pixel may only change the output cells whose field covers it.
  nn::Rng rng(8);
  PatchDiscriminator<double> d(3, DiscriminatorConfig{{4, 4, 4, 1}, 0.2}, rng);
  d.eval();
  Gen g(9);
  auto img = uniform<double>({1, 3, 128, 128}, g);
  auto base = d.forward(Var<double>(img)).map.value();
  img.at(0, 0, 5, 5) += 0.5;
  auto moved = d.forward(Var<double>(img)).map.value();
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) {
      const bool reachable = i * 16 - 15 <= 5 && j * 16 - 15 <= 5;
      if (!reachable) EXPECT_EQ(base.at(0, 0, i, j), moved.at(0, 0, i, j)) << i << "," << j;
    }
  EXPECT_NE(base.at(0, 0, 0, 0), moved.at(0, 0, 0, 0));
}

}  // namespace
}  // namespace pugan
