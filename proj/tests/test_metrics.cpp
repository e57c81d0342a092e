#include <gtest/gtest.h>

#include <random>

#include "fednh/hypersphere.hpp"
#include "fednh/metrics.hpp"

using namespace fednh;

namespace {

std::vector<int> balanced_labels(int classes, int per_class) {
  std::vector<int> y;
  for (int c = 0; c < classes; ++c) y.insert(y.end(), per_class, c);
  return y;
}

}  // namespace

TEST(WeightedAccuracy, PresenceExample) {
  const std::vector<int> truth = balanced_labels(3, 10);
  std::vector<int> pred = truth;
  for (int i = 10; i < 20; ++i) pred[i] = 2;  // class 1 always wrong
  const std::vector<std::size_t> hist{40, 5, 0};
  EXPECT_DOUBLE_EQ(*weighted_accuracy(pred, truth, EvalWeights::presence(hist)), 0.5);
}

TEST(WeightedAccuracy, EmpiricalExample) {
  const std::vector<int> truth = balanced_labels(2, 10);
  const std::vector<int> pred(20, 0);
  const std::vector<std::size_t> hist{90, 10};
  EXPECT_NEAR(*weighted_accuracy(pred, truth, EvalWeights::empirical(hist)), 0.9, 1e-15);
}

TEST(WeightedAccuracy, UniformIsPlainAccuracy) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> y(0, 5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> truth(97), pred(97);
    for (int i = 0; i < 97; ++i) {
      truth[i] = y(rng);
      pred[i] = y(rng);
    }
    EXPECT_DOUBLE_EQ(*weighted_accuracy(pred, truth, EvalWeights::uniform(6)),
                     plain_accuracy(pred, truth));
  }
}

TEST(WeightedAccuracy, PresenceEqualsFilteredAccuracy) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> y(0, 5);
  std::uniform_int_distribution<std::size_t> count(0, 3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<int> truth(120), pred(120);
    for (int i = 0; i < 120; ++i) {
      truth[i] = y(rng);
      pred[i] = y(rng);
    }
    std::vector<std::size_t> hist(6);
    for (auto& h : hist) h = count(rng);
    int hits = 0, total = 0;
    for (int i = 0; i < 120; ++i) {
      if (hist[truth[i]] == 0) continue;
      ++total;
      hits += pred[i] == truth[i];
    }
    const auto got = weighted_accuracy(pred, truth, EvalWeights::presence(hist));
    if (total == 0) {
      EXPECT_FALSE(got.has_value());
    } else {
      ASSERT_TRUE(got.has_value());
      EXPECT_NEAR(*got, static_cast<double>(hits) / total, 1e-15);
    }
  }
}

TEST(WeightedAccuracy, InvariantToPositiveRescaling) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> y(0, 4);
  std::uniform_real_distribution<double> w(0.0, 3.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> truth(60), pred(60);
    for (int i = 0; i < 60; ++i) {
      truth[i] = y(rng);
      pred[i] = y(rng);
    }
    EvalWeights a;
    for (int c = 0; c < 5; ++c) a.per_class.push_back(w(rng));
    EvalWeights b = a;
    for (auto& v : b.per_class) v *= 4.0;  // power of two: exact
    EXPECT_EQ(weighted_accuracy(pred, truth, a), weighted_accuracy(pred, truth, b));
    EvalWeights c = a;
    for (auto& v : c.per_class) v *= 0.37;
    EXPECT_NEAR(*weighted_accuracy(pred, truth, a), *weighted_accuracy(pred, truth, c), 1e-12);
  }
}

TEST(WeightedAccuracy, ZeroDenominatorIsNullopt) {
  const std::vector<int> truth{0, 0, 1};
  const std::vector<int> pred{0, 1, 1};
  const std::vector<std::size_t> hist{0, 0, 7};
  EXPECT_FALSE(weighted_accuracy(pred, truth, EvalWeights::presence(hist)).has_value());
}

TEST(EvaluateRound, PerfectIdenticalClients) {
  const std::vector<int> truth = balanced_labels(6, 20);
  const std::vector<std::size_t> hist{5, 5, 5, 5, 5, 5};
  std::vector<ClientEval> clients(4, ClientEval{truth, hist});
  const RoundMetrics m = evaluate_round(std::span<const int>(truth), clients, truth);
  EXPECT_EQ(*m.gm, 1.0);
  EXPECT_EQ(m.pm_v, 1.0);
  EXPECT_EQ(m.pm_l, 1.0);
  EXPECT_EQ(m.fairness, 0.0);
  EXPECT_EQ(m.excluded, 0);
}

TEST(EvaluateRound, GmIsUniformWeightedAccuracyBitwise) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> y(0, 5);
  const std::vector<int> truth = balanced_labels(6, 33);
  std::vector<int> pred(truth.size());
  for (auto& p : pred) p = y(rng);
  const std::vector<std::size_t> hist{1, 0, 3, 0, 0, 9};
  std::vector<ClientEval> clients{ClientEval{pred, hist}};
  const RoundMetrics m = evaluate_round(std::span<const int>(pred), clients, truth);
  EXPECT_EQ(*m.gm, *weighted_accuracy(pred, truth, EvalWeights::uniform(6)));
}

TEST(EvaluateRound, FairnessOfTwoClients) {
  const RoundMetrics m = summarize_clients(std::nullopt, {0.8, 0.6}, {0.8, 0.6});
  EXPECT_NEAR(m.fairness, 0.1, 1e-15);
  EXPECT_NEAR(m.pm_l, 0.7, 1e-15);
  EXPECT_FALSE(m.gm.has_value());
}

TEST(EvaluateRound, ExcludedClientsDoNotCount) {
  const RoundMetrics m = summarize_clients(0.5, {0.8, std::nullopt, 0.6}, {0.8, std::nullopt, 0.6});
  EXPECT_EQ(m.excluded, 1);
  EXPECT_NEAR(m.pm_v, 0.7, 1e-15);
}

TEST(EvaluateRound, RandomGuessIsAboutOneSixth) {
  const std::vector<int> truth = balanced_labels(6, 1000);
  double sum = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> y(0, 5);
    std::vector<int> pred(truth.size());
    for (auto& p : pred) p = y(rng);
    const double gm = *evaluate_round(std::span<const int>(pred), {}, truth).gm;
    EXPECT_NEAR(gm, 1.0 / 6.0, 0.03);
    sum += gm;
  }
  EXPECT_NEAR(sum / 10.0, 1.0 / 6.0, 0.01);
}

TEST(PopulationStd, Basics) {
  const std::vector<double> v{2, 4, 4, 4, 5, 5, 7, 9};
  EXPECT_DOUBLE_EQ(population_std(v), 2.0);
  const std::vector<double> one{3.0};
  EXPECT_EQ(population_std(one), 0.0);
}

TEST(Similarity, Examples) {
  const Eigen::MatrixXd s = prototype_similarity(simplex_etf(3, 2, 0));
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(s(i, j), i == j ? 1.0 : -0.5, 1e-12);
  const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(4, 1) * Eigen::RowVector2d(0.6, 0.8);
  EXPECT_LT((prototype_similarity(ones) - Eigen::MatrixXd::Ones(4, 4)).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(prototype_similarity(Eigen::MatrixXd::Identity(3, 3)), Eigen::MatrixXd::Identity(3, 3));
}

TEST(Recall, PerfectAndConstant) {
  const std::vector<int> truth = balanced_labels(6, 10);
  const RecallReport perfect = per_class_recall(truth, truth, 6);
  EXPECT_EQ(perfect.recall, std::vector<double>(6, 1.0));
  EXPECT_EQ(perfect.macro, 1.0);
  const std::vector<int> zeros(truth.size(), 0);
  const RecallReport constant = per_class_recall(zeros, truth, 6);
  EXPECT_EQ(constant.recall, (std::vector<double>{1, 0, 0, 0, 0, 0}));
  EXPECT_NEAR(constant.macro, 1.0 / 6.0, 1e-15);
  EXPECT_EQ(constant.minimum, 0.0);
  const std::vector<int> partial{0, 0, 1};
  EXPECT_THROW(per_class_recall(partial, partial, 3), std::invalid_argument);
}

TEST(Alignment, ClassMeansAndRowCosine) {
  Eigen::MatrixXd reps(2, 4);
  reps << 1, 3, 0, 0, 0, 0, 2, 4;
  const std::vector<int> labels{0, 0, 1, 1};
  const Eigen::MatrixXd m = class_means(reps, labels, 3);
  EXPECT_EQ(m(0, 0), 2.0);
  EXPECT_EQ(m(1, 1), 3.0);
  EXPECT_TRUE(m.row(2).isZero(0.0));
  Eigen::MatrixXd other = m;
  other.row(1) *= -1.0;
  EXPECT_NEAR(*mean_row_cosine(m, m), 1.0, 1e-15);
  EXPECT_NEAR(*mean_row_cosine(m, other), 0.0, 1e-15);
  EXPECT_FALSE(mean_row_cosine(Eigen::MatrixXd::Zero(2, 2), m.topRows(2)).has_value());
}
