#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <set>

#include <opencv2/imgcodecs.hpp>

#include "pugan/data.hpp"
#include "pugan/par_subnet.hpp"
#include "testing.hpp"

namespace pugan::data {
namespace {

using pugan::testing::TempDir;

void write_png(const fs::path& p, int h, int w, unsigned char v) {
  fs::create_directories(p.parent_path());
  cv::imwrite(p.string(), cv::Mat(h, w, CV_8UC3, cv::Scalar(v, v, v)));
}

void write_depth16(const fs::path& p, int h, int w, unsigned short v) {
  fs::create_directories(p.parent_path());
  cv::imwrite(p.string(), cv::Mat(h, w, CV_16UC1, cv::Scalar(v)));
}

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

TEST(Paired, LoadsSortedPairsAndResizes) {
  TempDir dir;
  for (const char* s : {"b", "a", "c"}) {
    write_png(dir / "trainA" / (std::string(s) + ".png"), 20, 30, 10);
    write_png(dir / "trainB" / (std::string(s) + ".jpg"), 20, 30, 200);
  }
  auto ds = load_paired(dir.path(), Split::kTrain, 32);
  ASSERT_EQ(ds.size(), 3u);
  EXPECT_EQ(ds[0].id, "a");
  EXPECT_EQ(ds[2].id, "c");
  EXPECT_EQ(ds[0].degraded.shape(), (Shape{1, 3, 32, 32}));
  EXPECT_NEAR(ds[0].degraded[0], 10 / 255.0, 1e-6);
  EXPECT_NEAR(ds[0].reference[0], 200 / 255.0, 2 / 255.0);  // jpeg
}

TEST(Paired, OrphansAreNamed) {
  TempDir dir;
  write_png(dir / "testA" / "a.png", 8, 8, 1);
  write_png(dir / "testA" / "b.png", 8, 8, 1);
  write_png(dir / "testB" / "b.png", 8, 8, 1);
  try {
    load_paired(dir.path(), Split::kTest, 0);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("only in testA: a"), std::string::npos) << e.what();
  }
  EXPECT_THROW(load_paired(dir.path(), Split::kTrain, 0), DataError);
}

TEST(Paired, SizeMismatchWithoutResizeFails) {
  TempDir dir;
  write_png(dir / "trainA" / "a.png", 8, 8, 1);
  write_png(dir / "trainB" / "a.png", 8, 16, 1);
  EXPECT_THROW(load_paired(dir.path(), Split::kTrain, 0), DataError);
  EXPECT_NO_THROW(load_paired(dir.path(), Split::kTrain, 32));
}

TEST(Synthetic, ParsesBetaCsvAndDepth) {
  TempDir dir;
  write_png(dir / "images" / "img1.png", 16, 16, 128);
  write_depth16(dir / "depth" / "img1.png", 16, 16, 65535);
  write_text(dir / "beta.csv", "id,beta_r,beta_g,beta_b\nimg1,0.5,1.0,2.0\n");
  auto ds = load_synthetic(dir.path(), 0);
  ASSERT_EQ(ds.size(), 1u);
  EXPECT_EQ(ds[0].beta.rgb, (std::array<double, 3>{0.5, 1.0, 2.0}));
  EXPECT_EQ(ds[0].depth.shape(), (Shape{1, 1, 16, 16}));
  EXPECT_EQ(ds[0].depth[0], 1.0f);
  EXPECT_NEAR(ds[0].degraded[5], 128 / 255.0, 1e-6);
}

TEST(Synthetic, DepthScales) {
  TempDir dir;
  write_depth16(dir / "d16.png", 4, 4, 32768);
  EXPECT_NEAR(read_depth(dir / "d16.png")[0], 32768 / 65535.0, 1e-7);
  fs::create_directories(dir.path());
  cv::imwrite((dir / "d8.png").string(), cv::Mat(4, 4, CV_8UC1, cv::Scalar(51)));
  EXPECT_NEAR(read_depth(dir / "d8.png")[0], 0.2, 1e-7);
}

TEST(Synthetic, RejectsBadLabels) {
  TempDir dir;
  write_png(dir / "images" / "img1.png", 8, 8, 1);
  write_depth16(dir / "depth" / "img1.png", 8, 8, 1);
  write_text(dir / "beta.csv", "id,beta_r,beta_g,beta_b\nimg1,0.5,0,2.0\n");
  EXPECT_THROW(load_synthetic(dir.path(), 0), DataError);
  write_text(dir / "beta.csv", "id,beta_r,beta_g,beta_b\nimg1,0.5,x,2.0\n");
  EXPECT_THROW(load_synthetic(dir.path(), 0), DataError);
  write_text(dir / "beta.csv", "name,r,g,b\nimg1,0.5,1,2.0\n");
  EXPECT_THROW(load_synthetic(dir.path(), 0), DataError);
  write_text(dir / "beta.csv", "id,beta_r,beta_g,beta_b\nother,0.5,1,2.0\n");
  EXPECT_THROW(load_synthetic(dir.path(), 0), DataError);
  write_text(dir / "beta.csv", "id,beta_r,beta_g,beta_b\nimg1,0.5,1,2.0\n");
  EXPECT_NO_THROW(load_synthetic(dir.path(), 0));
  write_png(dir / "images" / "img2.png", 8, 8, 1);
  try {
    load_synthetic(dir.path(), 0);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("img2"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("depth"), std::string::npos);
  }
}

TEST(Fixtures, DeterministicAndInRange) {
  auto a = make_fixture_set(3, 32, 7), b = make_fixture_set(3, 32, 7), c = make_fixture_set(3, 32, 8);
  std::set<std::string> ids;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].degraded, b[i].degraded);
    EXPECT_EQ(a[i].depth, b[i].depth);
    EXPECT_EQ(a[i].beta.rgb, b[i].beta.rgb);
    EXPECT_NE(a[i].degraded, c[i].degraded);
    ids.insert(a[i].id);
    for (float v : a[i].degraded.values()) {
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 1.0f);
    }
    for (float v : a[i].depth.values()) {
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 1.0f);
    }
    for (double bt : a[i].beta.rgb) {
      EXPECT_GE(bt, 0.3);
      EXPECT_LE(bt, 2.0);
    }
  }
  EXPECT_EQ(ids.size(), 3u);
  EXPECT_THROW(make_fixture_set(1, 48, 0), std::invalid_argument);
}

TEST(FixturesProperty, PhysicsRoundTripRecoversCleanImage) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    for (const auto& s : make_fixture_set(2, 32, seed)) {
      const auto t = physics::transmission_from_depth(s.depth.cast<double>(), physics::per_batch<double>(s.beta.rgb, 1));
      const auto i = physics::synthesize_degraded(s.clean.cast<double>(), t, physics::per_batch<double>(s.background.rgb, 1));
      EXPECT_LT(testing::max_abs_diff(i, s.degraded.cast<double>()), 1e-6);
      // J' = (I - A) / t + A has no access to A; check the pure inversion of the direct term instead.
      Tensor<double> direct = i;
      for (std::size_t k = 0; k < direct.size(); ++k) {
        const int c = static_cast<int>((k / (32 * 32)) % 3);
        const double a = s.background.rgb[c];
        direct[k] = i[k] - a * (1 - t[k]);
      }
      const auto j = physics::invert_color_enhanced(direct, t);
      EXPECT_LT(testing::max_abs_diff(j, s.clean.cast<double>()), 1e-6) << seed;
    }
  }
}

TEST(Fixtures, ParLossVanishesAtTheLabels) {
  for (const auto& s : make_fixture_set(2, 32, 3)) {
    Var<float> depth(s.depth);
    Var<float> beta(physics::per_batch<float>(s.beta.rgb, 1));
    EXPECT_EQ(par_loss(depth, depth, depth, beta, beta).value().item(), 0.0f);
  }
}

TEST(Fixtures, WriteThenLoadIsIdempotent) {
  TempDir dir;
  auto fx = make_fixture_set(3, 32, 11);
  write_synthetic(dir / "syn", fx);
  auto first = load_synthetic(dir / "syn", 32);
  write_synthetic(dir / "syn2", first);
  auto second = load_synthetic(dir / "syn2", 32);
  ASSERT_EQ(first.size(), 3u);
  for (std::size_t i = 0; i < first.size(); ++i) {
    EXPECT_EQ(first[i].id, fx[i].id);
    EXPECT_EQ(first[i].degraded, second[i].degraded);
    EXPECT_EQ(first[i].depth, second[i].depth);
    EXPECT_EQ(first[i].beta.rgb, second[i].beta.rgb);
    EXPECT_EQ(first[i].beta.rgb, fx[i].beta.rgb);  // csv keeps full precision
    EXPECT_LE(testing::max_abs_diff(first[i].degraded, fx[i].degraded), 0.5f / 255 + 1e-6f);
    EXPECT_LE(testing::max_abs_diff(first[i].depth, fx[i].depth), 0.5f / 65535 + 1e-6f);
  }

  write_paired(dir / "pair", fixture_pairs(fx), Split::kTest);
  auto pairs = load_paired(dir / "pair", Split::kTest, 0);
  ASSERT_EQ(pairs.size(), 3u);
  EXPECT_EQ(pairs[1].id, "fx0001");
}

TEST(Batches, CoverEveryIndexOnceWithShortTail) {
  std::mt19937_64 rng(1);
  auto batches = epoch_batches(10, 4, rng);
  ASSERT_EQ(batches.size(), 3u);
  EXPECT_EQ(batches[2].size(), 2u);
  std::multiset<std::size_t> seen;
  for (auto& b : batches) seen.insert(b.begin(), b.end());
  EXPECT_EQ(seen.size(), 10u);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(seen.count(i), 1u);
  EXPECT_THROW(epoch_batches(3, 0, rng), std::invalid_argument);
}

TEST(Batches, StackSyntheticBatch) {
  auto fx = make_fixture_set(3, 32, 2);
  std::vector<std::size_t> idx{2, 0};
  auto b = make_batch(fx, idx);
  EXPECT_EQ(b.degraded.shape(), (Shape{2, 3, 32, 32}));
  EXPECT_EQ(b.depth.shape(), (Shape{2, 1, 32, 32}));
  EXPECT_EQ(b.beta[1], static_cast<float>(fx[2].beta.rgb[1]));
  EXPECT_EQ(b.degraded[5], fx[2].degraded[5]);
  EXPECT_EQ(b.degraded[3 * 32 * 32 + 5], fx[0].degraded[5]);
}

}  // namespace
}  // namespace pugan::data
