#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "avid/synthdata.hpp"
#include "test_util.hpp"

using namespace avid;

namespace {

SyntheticConfig small(std::uint64_t seed = 0) {
  SyntheticConfig c;
  c.n_classes = 4;
  c.n_samples = 40;
  c.dim_a = 6;
  c.dim_v = 5;
  c.latent_dim = 4;
  c.seed = seed;
  return c;
}

}  // namespace

TEST(Generate, ShapesAndBalance) {
  auto d = generate(SyntheticConfig{});
  ASSERT_EQ(d.size(), 2000u);
  std::vector<int> count(10, 0);
  for (int z : d.classes) {
    ASSERT_GE(z, 0);
    ASSERT_LT(z, 10);
    ++count[static_cast<std::size_t>(z)];
  }
  for (int c : count) EXPECT_EQ(c, 200);
  EXPECT_EQ(d.audio[0].size(), 32u);
  EXPECT_EQ(d.visual[0].size(), 32u);
  for (std::size_t i = 0; i < d.size(); ++i) {
    ASSERT_TRUE(all_finite(d.audio[i]));
    ASSERT_TRUE(all_finite(d.visual[i]));
  }

  auto c = small();
  c.n_samples = 43;
  auto e = generate(c);
  std::vector<int> cnt(4, 0);
  for (int z : e.classes) ++cnt[static_cast<std::size_t>(z)];
  for (int x : cnt) EXPECT_TRUE(x == 10 || x == 11);
}

TEST(Generate, NoiselessClassesCollapse) {
  auto c = small();
  c.noise = 0.0;
  c.modality_noise = 0.0;
  auto d = generate(c);
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t j = 0; j < d.size(); ++j)
      if (d.classes[i] == d.classes[j]) {
        EXPECT_EQ(d.audio[i], d.audio[j]);
        EXPECT_EQ(d.visual[i], d.visual[j]);
      }
}

TEST(Generate, DeterministicPerSeed) {
  auto a = generate(small(3));
  auto b = generate(small(3));
  auto c = generate(small(4));
  std::ostringstream sa, sb, sc;
  save_dataset(a, sa);
  save_dataset(b, sb);
  save_dataset(c, sc);
  EXPECT_EQ(sa.str(), sb.str());
  EXPECT_NE(sa.str(), sc.str());
}

TEST(Generate, WideSeparationIsNearestMeanSeparable) {
  SyntheticConfig c;
  c.separation = 10.0;
  c.noise = 1.0;
  auto d = generate(c);
  // Class means in visual space, estimated from the data itself.
  std::vector<Vector> mean(c.n_classes, Vector(c.dim_v, 0.0));
  std::vector<double> n(c.n_classes, 0.0);
  for (std::size_t i = 0; i < d.size(); ++i) {
    auto z = static_cast<std::size_t>(d.classes[i]);
    for (std::size_t k = 0; k < c.dim_v; ++k) mean[z][k] += d.visual[i][k];
    n[z] += 1.0;
  }
  for (std::size_t z = 0; z < c.n_classes; ++z)
    for (double& x : mean[z]) x /= n[z];
  std::size_t correct = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    std::size_t best = 0;
    double best_d = INFINITY;
    for (std::size_t z = 0; z < c.n_classes; ++z) {
      double s = 0.0;
      for (std::size_t k = 0; k < c.dim_v; ++k) s += std::pow(d.visual[i][k] - mean[z][k], 2);
      if (s < best_d) {
        best_d = s;
        best = z;
      }
    }
    correct += best == static_cast<std::size_t>(d.classes[i]);
  }
  EXPECT_GT(static_cast<double>(correct) / static_cast<double>(d.size()), 0.99);
}

TEST(Generate, ModalitiesShareTheLatentDraw) {
  // Without class structure only the shared latent ties a_i to v_i, so the
  // inner-product structure of the two modalities agrees on matching pairs.
  auto c = small(7);
  c.n_samples = 400;
  c.separation = 0.0;
  c.modality_noise = 0.1;
  auto d = generate(c);
  const std::size_t n = d.size();
  double paired = 0.0, shifted = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = (i + 1) % n;
    const double sa = dot(d.audio[i], d.audio[j]);
    paired += sa * dot(d.visual[i], d.visual[j]);
    shifted += sa * dot(d.visual[(i + 7) % n], d.visual[(j + 7) % n]);
  }
  EXPECT_GT(paired, 5.0 * std::abs(shifted));
}

TEST(Generate, InvalidConfig) {
  auto c = small();
  c.n_classes = 1;
  expect_code(ErrorCode::InvalidConfig, [&] { generate(c); });
  c = small();
  c.n_samples = 3;
  expect_code(ErrorCode::InvalidConfig, [&] { generate(c); });
  c = small();
  c.noise = -1.0;
  expect_code(ErrorCode::InvalidConfig, [&] { generate(c); });
  c = small();
  c.dim_a = 0;
  expect_code(ErrorCode::InvalidConfig, [&] { generate(c); });
}

TEST(FaultyRate, Basics) {
  const int all[] = {2, 2, 2};
  const int none[] = {0, 1, 3};
  EXPECT_EQ(faulty_negative_rate(all, 2), 1.0);
  EXPECT_EQ(faulty_negative_rate(none, 2), 0.0);
  expect_code(ErrorCode::EmptyCollection, [] { faulty_negative_rate({}, 0); });
}

TEST(FaultyRate, UniformNegativesNearOneOverC) {
  Rng rng(8);
  std::uniform_int_distribution<int> cls(0, 9);
  for (int t = 0; t < 20; ++t) {
    std::vector<int> negs(5000);
    for (int& z : negs) z = cls(rng);
    const double r = faulty_negative_rate(negs, cls(rng));
    EXPECT_NEAR(r, 0.1, 3.0 * std::sqrt(0.1 * 0.9 / 5000.0));
  }
}

TEST(DatasetIo, RoundTripIsExact) {
  auto d = generate(small(9));
  std::stringstream ss;
  save_dataset(d, ss);
  auto back = load_dataset(ss);
  EXPECT_EQ(back.config, d.config);
  EXPECT_EQ(back.classes, d.classes);
  EXPECT_EQ(back.audio, d.audio);
  EXPECT_EQ(back.visual, d.visual);

  const auto path = std::filesystem::temp_directory_path() / "avid_test_dataset.tsv";
  save_dataset(d, path);
  auto from_file = load_dataset(path);
  EXPECT_EQ(from_file.audio, d.audio);
  std::filesystem::remove(path);

  expect_code(ErrorCode::Io, [] { load_dataset(std::filesystem::path("/nonexistent/avid/data.tsv")); });
  std::stringstream bad("dataset v9\n");
  expect_code(ErrorCode::Parse, [&] { load_dataset(bad); });
}
