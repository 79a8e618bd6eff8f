#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ctsynth/memory.hpp"
#include "ctsynth/ops.hpp"

using namespace ctsynth;
using ad::Var;
using G = ad::Graph<double>;

namespace {

Tensor<double> randn(Shape s, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, scale);
  Tensor<double> t(std::move(s));
  for (auto& v : t.values()) v = d(rng);
  return t;
}

Tensor<double> unit_rows(Tensor<double> m) {
  const int rows = m.dim(0), d = m.dim(1);
  for (int i = 0; i < rows; ++i) {
    double n = 0;
    for (int c = 0; c < d; ++c) n += m.at(i, c) * m.at(i, c);
    for (int c = 0; c < d; ++c) m.at(i, c) /= std::sqrt(n);
  }
  return m;
}

// E3 [1, d, 1, 1] holding one feature vector.
Tensor<double> point(std::vector<double> v) {
  const int d = static_cast<int>(v.size());
  return Tensor<double>({1, d, 1, 1}, std::move(v));
}

}  // namespace

TEST(MemoryBank, RandomRowsAreUnitNorm) {
  const auto b = MemoryBank::random(10, 32, 3);
  EXPECT_EQ(b.size(), 10);
  EXPECT_EQ(b.dim(), 32);
  for (int i = 0; i < 10; ++i) {
    double n = 0;
    for (int c = 0; c < 32; ++c) n += static_cast<double>(b.items.at(i, c)) * b.items.at(i, c);
    EXPECT_NEAR(std::sqrt(n), 1.0, 1e-6);
  }
  EXPECT_EQ(MemoryBank::random(10, 32, 3).items, b.items);
}

TEST(MemoryRead, OrthonormalExample) {
  G g;
  Var bank = g.constant(Tensor<double>({2, 2}, {1, 0, 0, 1}));
  const auto rd = memory_read(g, g.constant(point({10, 0})), bank);
  const auto& p = g.value(rd.weights);
  EXPECT_NEAR(p[0], 1.0 / (1.0 + std::exp(-10.0)), 1e-12);
  EXPECT_NEAR(p[0] + p[1], 1.0, 1e-12);
  EXPECT_NEAR(g.value(rd.recon)[0], p[0], 1e-12);
  EXPECT_NEAR(g.value(rd.recon)[1], p[1], 1e-12);
  EXPECT_EQ(rd.z_pos[0], 0);
  EXPECT_EQ(rd.z_neg[0], 1);
}

TEST(MemoryRead, ZeroFeatureGivesUniformWeights) {
  G g;
  const auto m = unit_rows(randn({4, 3}, 5));
  const auto rd = memory_read(g, g.constant(point({0, 0, 0})), g.constant(m));
  for (int z = 0; z < 4; ++z) EXPECT_NEAR(g.value(rd.weights)[static_cast<std::size_t>(z)], 0.25, 1e-15);
  for (int c = 0; c < 3; ++c) {
    double mean = 0;
    for (int z = 0; z < 4; ++z) mean += m.at(z, c) / 4;
    EXPECT_NEAR(g.value(rd.recon)[static_cast<std::size_t>(c)], mean, 1e-12);
  }
  // all logits tie: nearest is item 0, second nearest item 1
  EXPECT_EQ(rd.z_pos[0], 0);
  EXPECT_EQ(rd.z_neg[0], 1);
}

TEST(MemoryRead, MatchesBruteForceSoftmax) {
  const int B = 2, d = 5, H = 3, W = 4, m = 6;
  const auto e3 = randn({B, d, H, W}, 11);
  const auto bank = unit_rows(randn({m, d}, 12));
  G g;
  const auto rd = memory_read(g, g.constant(e3), g.constant(bank));
  ASSERT_EQ(g.shape(rd.weights), (Shape{B * H * W, m}));
  const Var fmap = feature_map(g, rd.recon, B, H, W);
  int pos = 0;
  for (int b = 0; b < B; ++b)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x, ++pos) {
        std::vector<double> logit(m);
        double mx = -1e300;
        for (int z = 0; z < m; ++z) {
          for (int c = 0; c < d; ++c) logit[z] += e3.at(b, c, y, x) * bank.at(z, c);
          mx = std::max(mx, logit[z]);
        }
        double den = 0;
        for (int z = 0; z < m; ++z) den += std::exp(logit[z] - mx);
        int best = 0;
        for (int z = 0; z < m; ++z) {
          const double p = std::exp(logit[z] - mx) / den;
          EXPECT_NEAR(g.value(rd.weights).at(pos, z), p, 1e-6);
          if (logit[z] > logit[best]) best = z;
        }
        EXPECT_EQ(rd.z_pos[static_cast<std::size_t>(pos)], best);
        for (int c = 0; c < d; ++c) {
          double dc = 0;
          for (int z = 0; z < m; ++z) dc += std::exp(logit[z] - mx) / den * bank.at(z, c);
          EXPECT_NEAR(g.value(fmap).at(b, c, y, x), dc, 1e-6);
        }
        EXPECT_NE(rd.z_pos[static_cast<std::size_t>(pos)], rd.z_neg[static_cast<std::size_t>(pos)]);
      }
}

TEST(MemoryRead, ArgmaxInvariantUnderPositiveScaling) {
  const auto e3 = randn({1, 4, 3, 3}, 21);
  const auto bank = unit_rows(randn({5, 4}, 22));
  G g;
  const auto base = memory_read(g, g.constant(e3), g.constant(bank));
  for (double c : {1.5, 3.0, 10.0}) {
    Tensor<double> scaled = e3;
    for (auto& v : scaled.values()) v *= c;
    const auto rd = memory_read(g, g.constant(scaled), g.constant(bank));
    EXPECT_EQ(rd.z_pos, base.z_pos);
    for (std::size_t i = 0; i < rd.z_pos.size(); ++i)
      EXPECT_GE(g.value(rd.weights).at(static_cast<int>(i), rd.z_pos[i]),
                g.value(base.weights).at(static_cast<int>(i), base.z_pos[i]) - 1e-12);
  }
}

TEST(MemoryRead, ChannelMismatchThrows) {
  G g;
  EXPECT_THROW(memory_read(g, g.constant(randn({1, 3, 2, 2}, 1)), g.constant(randn({4, 5}, 2))), Error);
}

TEST(NearestTwo, TiesGoToSmallerIndex) {
  const Tensor<double> w({2, 4}, {0.1, 0.4, 0.4, 0.1, 0.3, 0.2, 0.3, 0.2});
  const auto [pos, neg] = nearest_two(w);
  EXPECT_EQ(pos, (std::vector<int>{1, 0}));
  EXPECT_EQ(neg, (std::vector<int>{2, 2}));
}

// Literal transcription of the update: per item, softmax over its assigned
// positions of <M[z], E3>, divided by the max, accumulated, normalized.
Tensor<double> reference_update(const Tensor<double>& bank, const Tensor<double>& f, const std::vector<int>& zpos) {
  const int m = bank.dim(0), d = bank.dim(1), P = f.dim(0);
  Tensor<double> out = bank;
  for (int z = 0; z < m; ++z) {
    std::vector<int> U;
    for (int p = 0; p < P; ++p)
      if (zpos[static_cast<std::size_t>(p)] == z) U.push_back(p);
    if (U.empty()) continue;
    std::vector<double> s(U.size());
    for (std::size_t k = 0; k < U.size(); ++k)
      for (int c = 0; c < d; ++c) s[k] += bank.at(z, c) * f.at(U[k], c);
    double den = 0;
    for (double v : s) den += std::exp(v);
    std::vector<double> v(U.size());
    double vmax = 0;
    for (std::size_t k = 0; k < U.size(); ++k) vmax = std::max(vmax, v[k] = std::exp(s[k]) / den);
    std::vector<double> acc(static_cast<std::size_t>(d));
    for (int c = 0; c < d; ++c) {
      acc[static_cast<std::size_t>(c)] = bank.at(z, c);
      for (std::size_t k = 0; k < U.size(); ++k) acc[static_cast<std::size_t>(c)] += v[k] / vmax * f.at(U[k], c);
    }
    double n = 0;
    for (double a : acc) n += a * a;
    for (int c = 0; c < d; ++c) out.at(z, c) = acc[static_cast<std::size_t>(c)] / std::sqrt(n);
  }
  return out;
}

TEST(MemoryUpdate, MatchesLiteralReimplementation) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto bank = unit_rows(randn({3, 4}, seed));
    const auto f = randn({5, 4}, seed + 100);
    G g2;
    Tensor<double> e3({5, 4, 1, 1}, f.storage());
    const auto read = memory_read(g2, g2.constant(e3), g2.constant(bank));
    const auto& rows = g2.value(read.features);
    const auto got = memory_update(bank, rows, read.z_pos);
    const auto want = reference_update(bank, rows, read.z_pos);
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-6);
  }
}

TEST(MemoryUpdate, SinglePositionAndEmptyItems) {
  const auto bank = unit_rows(randn({3, 4}, 40));
  const Tensor<double> f({1, 4}, {0.3, -0.2, 0.5, 0.1});
  const auto got = memory_update(bank, f, {1});
  // q = 1 for a lone position
  double n = 0;
  for (int c = 0; c < 4; ++c) n += std::pow(bank.at(1, c) + f.at(0, c), 2);
  for (int c = 0; c < 4; ++c) {
    EXPECT_NEAR(got.at(1, c), (bank.at(1, c) + f.at(0, c)) / std::sqrt(n), 1e-12);
    EXPECT_EQ(got.at(0, c), bank.at(0, c));
    EXPECT_EQ(got.at(2, c), bank.at(2, c));
  }
}

TEST(MemoryUpdate, RowsStayUnitNormAndIsPure) {
  const auto bank = MemoryBank::random(10, 8, 5).items;
  std::mt19937_64 rng(1);
  std::normal_distribution<float> d(0.0f, 3.0f);
  Tensor<float> f({40, 8});
  for (auto& v : f.values()) v = d(rng);
  std::vector<int> zpos(40);
  for (int i = 0; i < 40; ++i) zpos[static_cast<std::size_t>(i)] = (i * 7) % 10;
  const auto a = memory_update(bank, f, zpos);
  EXPECT_EQ(memory_update(bank, f, zpos), a);
  for (int z = 0; z < 10; ++z) {
    double n = 0;
    for (int c = 0; c < 8; ++c) n += static_cast<double>(a.at(z, c)) * a.at(z, c);
    EXPECT_NEAR(std::sqrt(n), 1.0, 1e-6);
  }
}

TEST(MemoryRegularizers, HandComputedTwoItemCases) {
  // items e1, e2; E3 == e1 -> distance 0 to z_pos, sqrt(2) to z_neg
  {
    G g;
    Var bank = g.constant(Tensor<double>({2, 2}, {1, 0, 0, 1}));
    const auto rd = memory_read(g, g.constant(point({1, 0})), bank);
    const auto l = memory_regularizers(g, rd, bank, 1.0);
    EXPECT_NEAR(g.value(l.compactness)[0], 0.0, 1e-15);
    EXPECT_NEAR(g.value(l.separateness)[0], std::max(0.0 - std::sqrt(2.0) + 1.0, 0.0), 1e-15);
  }
  // items +e1, -e1; E3 == e1: ||E3 - M[z_neg]|| = 2 -> L_sep = max(0 - 2 + 1, 0) = 0
  {
    G g;
    Var bank = g.constant(Tensor<double>({2, 2}, {1, 0, -1, 0}));
    const auto rd = memory_read(g, g.constant(point({1, 0})), bank);
    const auto l = memory_regularizers(g, rd, bank, 1.0);
    EXPECT_EQ(g.value(l.compactness)[0], 0.0);
    EXPECT_EQ(g.value(l.separateness)[0], 0.0);
  }
  // equidistant point: L_sep contribution = alpha
  {
    G g;
    Var bank = g.constant(Tensor<double>({2, 2}, {1, 0, 0, 1}));
    const auto rd = memory_read(g, g.constant(point({0.5, 0.5})), bank);
    const auto l = memory_regularizers(g, rd, bank, 1.0);
    EXPECT_NEAR(g.value(l.compactness)[0], std::sqrt(0.5), 1e-12);
    EXPECT_NEAR(g.value(l.separateness)[0], 1.0, 1e-12);
  }
  // two positions sum: (2, 0) -> pos e1 dist 1, neg e2 dist sqrt(5); (0, 3) -> pos e2 dist 2, neg e1 dist sqrt(10)
  {
    G g;
    Var bank = g.constant(Tensor<double>({2, 2}, {1, 0, 0, 1}));
    Tensor<double> e3({1, 2, 1, 2}, {2, 0, 0, 3});
    const auto rd = memory_read(g, g.constant(e3), bank);
    const auto l = memory_regularizers(g, rd, bank, 1.0);
    EXPECT_NEAR(g.value(l.compactness)[0], 1.0 + 2.0, 1e-12);
    EXPECT_NEAR(g.value(l.separateness)[0],
                std::max(1.0 - std::sqrt(5.0) + 1.0, 0.0) + std::max(2.0 - std::sqrt(10.0) + 1.0, 0.0), 1e-12);
  }
}

TEST(MemoryRegularizers, CompactnessZeroIffFeaturesOnItems) {
  const auto bank = unit_rows(randn({4, 3}, 2));
  Tensor<double> e3({1, 3, 1, 4});
  for (int p = 0; p < 4; ++p)
    for (int c = 0; c < 3; ++c) e3.at(0, c, 0, p) = bank.at(3 - p, c);
  G g;
  Var b = g.constant(bank);
  auto l = memory_regularizers(g, memory_read(g, g.constant(e3), b), b);
  EXPECT_NEAR(g.value(l.compactness)[0], 0.0, 1e-12);
  e3.at(0, 1, 0, 2) += 0.01;
  G g2;
  Var b2 = g2.constant(bank);
  l = memory_regularizers(g2, memory_read(g2, g2.constant(e3), b2), b2);
  EXPECT_GT(g2.value(l.compactness)[0], 0.0);
}

TEST(MemoryRegularizers, NeedTwoItems) {
  G g;
  Var bank = g.constant(Tensor<double>({1, 2}, {1, 0}));
  EXPECT_THROW(
      {
        const auto rd = memory_read(g, g.constant(point({1, 0})), bank);
        memory_regularizers(g, rd, bank);
      },
      Error);
}
