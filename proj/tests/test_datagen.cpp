#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <set>

#include "fednh/datagen.hpp"

using namespace fednh;

namespace {

const std::vector<int> kImbalanced{3000, 1500, 750, 375, 187, 93};

}  // namespace

TEST(Spiral, ClassZeroNoiselessLiesOnTheYAxis) {
  const std::vector<int> counts(6, 3000);
  const LabeledDataset ds = gen_spiral(counts, 0.0, 1);
  std::vector<Eigen::RowVector2d> arm;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (ds.labels[i] == 0) arm.push_back(ds.points.row(static_cast<Eigen::Index>(i)));
  ASSERT_EQ(arm.size(), 3000u);
  for (const auto& p : arm) {
    EXPECT_EQ(p(0), 0.0);
    EXPECT_GE(p(1), 1.0 - 1e-12);
    EXPECT_LE(p(1), 10.0 + 1e-12);
  }
  EXPECT_NEAR(arm.front()(1), 1.0, 1e-12);
  EXPECT_NEAR(arm.back()(1), 10.0, 1e-12);
}

TEST(Spiral, NoiselessPointsLieOnTheParametricCurve) {
  const std::vector<int> counts{50, 40, 30, 20, 10, 2};
  const LabeledDataset ds = gen_spiral(counts, 0.0, 9);
  std::vector<int> seen(6, 0);
  for (std::size_t j = 0; j < ds.size(); ++j) {
    const int k = ds.labels[j];
    const int n = counts[k];
    const int i = seen[k]++;
    const double denom = n > 1 ? n - 1 : 1;
    const double r = 1.0 + 9.0 * i / denom;
    const double w = k * std::numbers::pi / 3.0 + i * k * std::numbers::pi / (3.0 * denom);
    EXPECT_LT(std::abs(ds.points(j, 0) - r * std::sin(w)), 1e-12);
    EXPECT_LT(std::abs(ds.points(j, 1) - r * std::cos(w)), 1e-12);
  }
}

TEST(Spiral, GeneralArmsSpreadAroundTheCircle) {
  const std::vector<int> counts(4, 5);
  const LabeledDataset ds = gen_spiral(counts, 0.0, 0, SpiralArms::General);
  EXPECT_EQ(ds.num_classes, 4);
  EXPECT_NEAR(spiral_arm_angle(1, 4, SpiralArms::General), std::numbers::pi / 2.0, 1e-15);
  EXPECT_NEAR(spiral_arm_angle(2, 6, SpiralArms::Paper), 2.0 * std::numbers::pi / 3.0, 1e-15);
}

TEST(Spiral, SingletonClassesSitAtRadiusOne) {
  const std::vector<int> counts(6, 1);
  const LabeledDataset ds = gen_spiral(counts, 0.7, 123);
  for (std::size_t i = 0; i < ds.size(); ++i)
    EXPECT_NEAR(ds.points.row(static_cast<Eigen::Index>(i)).norm(), 1.0, 1e-12);
}

TEST(Spiral, RejectsBadInput) {
  const std::vector<int> five(5, 10);
  EXPECT_THROW(gen_spiral(five, 0.1, 0), std::invalid_argument);
  EXPECT_NO_THROW(gen_spiral(five, 0.1, 0, SpiralArms::General));
  const std::vector<int> zero{10, 0, 10, 10, 10, 10};
  EXPECT_THROW(gen_spiral(zero, 0.1, 0), std::invalid_argument);
  const std::vector<int> six(6, 10);
  EXPECT_THROW(gen_spiral(six, -1.0, 0), std::invalid_argument);
}

TEST(Spiral, ImbalancedHistogram) {
  const LabeledDataset ds = gen_spiral(kImbalanced, 1.0, 5);
  const auto hist = class_histogram(ds);
  EXPECT_EQ(std::vector<std::size_t>(hist.begin(), hist.end()),
            std::vector<std::size_t>(kImbalanced.begin(), kImbalanced.end()));
}

TEST(Spiral, SameSeedIsBitwiseIdentical) {
  const LabeledDataset a = gen_spiral(kImbalanced, 1.0, 77);
  const LabeledDataset b = gen_spiral(kImbalanced, 1.0, 77);
  const LabeledDataset c = gen_spiral(kImbalanced, 1.0, 78);
  EXPECT_TRUE(a.points == b.points);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_FALSE(a.points == c.points);
}

TEST(Histogram, SubsetsAndEmpty) {
  const std::vector<int> counts(6, 3000);
  const LabeledDataset ds = gen_spiral(counts, 1.0, 5);
  const auto full = class_histogram(ds);
  EXPECT_EQ(full, std::vector<std::size_t>(6, 3000));
  const std::vector<std::size_t> none;
  EXPECT_EQ(class_histogram(ds, std::span<const std::size_t>(none)), std::vector<std::size_t>(6, 0));
  const std::vector<std::size_t> bad{ds.size()};
  EXPECT_THROW(class_histogram(ds, std::span<const std::size_t>(bad)), std::out_of_range);
}

TEST(Partition, SingleClientGetsEverything) {
  const LabeledDataset ds = gen_spiral(kImbalanced, 1.0, 5);
  for (double beta : {0.01, 1.0, 100.0}) {
    const Partition p = dirichlet_partition(ds, 1, beta, 3);
    ASSERT_EQ(p.num_clients(), 1);
    EXPECT_EQ(p.clients[0].size(), ds.size());
  }
}

TEST(Partition, DisjointCoverageAndConservation) {
  const LabeledDataset ds = gen_spiral(kImbalanced, 1.0, 5);
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> k_dist(1, 60);
  std::uniform_real_distribution<double> log_beta(-3.0, 3.0);
  for (int trial = 0; trial < 40; ++trial) {
    const int k = k_dist(rng);
    const double beta = std::pow(10.0, log_beta(rng));
    const Partition p = dirichlet_partition(ds, k, beta, rng());
    ASSERT_EQ(p.num_clients(), k);
    std::vector<int> owner(ds.size(), -1);
    std::vector<std::size_t> total(6, 0);
    for (int c = 0; c < k; ++c) {
      for (std::size_t i : p.clients[c]) {
        ASSERT_LT(i, ds.size());
        ASSERT_EQ(owner[i], -1) << "index " << i << " assigned twice";
        owner[i] = c;
      }
      const auto h = class_histogram(ds, p.clients[c]);
      for (int y = 0; y < 6; ++y) total[y] += h[y];
      EXPECT_TRUE(std::is_sorted(p.clients[c].begin(), p.clients[c].end()));
    }
    for (int o : owner) ASSERT_NE(o, -1);
    EXPECT_EQ(total, class_histogram(ds));
  }
}

TEST(Partition, LargeBetaIsNearlyUniform) {
  const std::vector<int> counts(6, 3000);
  const LabeledDataset ds = gen_spiral(counts, 1.0, 2);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Partition p = dirichlet_partition(ds, 10, 1e6, seed);
    for (const auto& client : p.clients)
      for (std::size_t n : class_histogram(ds, client)) EXPECT_NEAR(static_cast<double>(n), 300.0, 15.0);
  }
}

TEST(Partition, SmallBetaIsSkewed) {
  const std::vector<int> counts(6, 3000);
  const LabeledDataset ds = gen_spiral(counts, 1.0, 2);
  const Partition p = dirichlet_partition(ds, 20, 0.1, 4);
  int missing = 0;
  for (const auto& client : p.clients)
    for (std::size_t n : class_histogram(ds, client)) missing += n == 0;
  EXPECT_GT(missing, 20);
}

TEST(Partition, EmptyClientsAreFlagged) {
  const std::vector<int> counts(6, 2);
  const LabeledDataset ds = gen_spiral(counts, 1.0, 2);
  const Partition p = dirichlet_partition(ds, 50, 0.05, 4);
  const auto empty = p.empty_clients();
  int flagged = 0;
  for (int k = 0; k < p.num_clients(); ++k) {
    EXPECT_EQ(empty[k], p.clients[k].empty());
    flagged += empty[k];
  }
  EXPECT_GE(flagged, 38);
}

TEST(Partition, SameSeedIsIdentical) {
  const LabeledDataset ds = gen_spiral(kImbalanced, 1.0, 5);
  const Partition a = dirichlet_partition(ds, 17, 0.3, 8);
  const Partition b = dirichlet_partition(ds, 17, 0.3, 8);
  EXPECT_EQ(a.clients, b.clients);
}

TEST(Partition, RejectsBadArguments) {
  const LabeledDataset ds = gen_spiral(kImbalanced, 1.0, 5);
  EXPECT_THROW(dirichlet_partition(ds, 0, 0.3, 0), std::invalid_argument);
  EXPECT_THROW(dirichlet_partition(ds, 3, 0.0, 0), std::invalid_argument);
}
