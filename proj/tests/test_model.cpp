#include <gtest/gtest.h>

#include <cmath>

#include "fednh/hypersphere.hpp"
#include "fednh/model.hpp"
#include "test_util.hpp"

using namespace fednh;
using fednh::testing::random_matrix;

namespace {

BodyParams identity_body(int dim, bool normalize) {
  BodyParams b;
  b.layers.push_back({Eigen::MatrixXd::Identity(dim, dim), Eigen::VectorXd::Zero(dim)});
  b.normalize_output = normalize;
  return b;
}

Batch random_batch(int p, int n, int classes, std::mt19937_64& rng) {
  Batch b;
  b.inputs = random_matrix(p, n, rng, 2.0);
  std::uniform_int_distribution<int> y(0, classes - 1);
  for (int i = 0; i < n; ++i) b.labels.push_back(y(rng));
  return b;
}

}  // namespace

TEST(Body, OutputIsUnitNorm) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    const BodyParams body = BodyParams::init({{2, 8, 8, 3}, true}, rng());
    const Eigen::VectorXd x = random_matrix(2, 1, rng, 5.0).col(0);
    const BodyOutput out = forward_body(body, x);
    ASSERT_LT(std::abs(out.representation.norm() - 1.0), 1e-9);
  }
}

TEST(Body, NormalizesThreeFourToUnit) {
  const BodyParams body = identity_body(2, true);
  const BodyOutput out = forward_body(body, Eigen::Vector2d(3, 4));
  EXPECT_NEAR(out.representation(0), 0.6, 1e-12);
  EXPECT_NEAR(out.representation(1), 0.8, 1e-12);
  EXPECT_FALSE(out.degenerate);
}

TEST(Body, ZeroPreActivationIsFlagged) {
  const BodyParams body = identity_body(2, true);
  const BodyOutput out = forward_body(body, Eigen::Vector2d(0, 0));
  EXPECT_TRUE(out.degenerate);
  EXPECT_TRUE(out.representation.allFinite());
}

TEST(Body, DeterministicAndBatchedMatchesSingle) {
  const BodyParams a = BodyParams::init({{2, 16, 16, 5}, true}, 9);
  const BodyParams b = BodyParams::init({{2, 16, 16, 5}, true}, 9);
  EXPECT_TRUE(a == b);
  std::mt19937_64 rng(2);
  const Eigen::MatrixXd x = random_matrix(2, 20, rng);
  const Eigen::MatrixXd z = embed(a, x);
  for (int i = 0; i < 20; ++i) {
    const BodyOutput o1 = forward_body(a, x.col(i));
    const BodyOutput o2 = forward_body(a, x.col(i));
    EXPECT_TRUE(o1.representation == o2.representation);
    EXPECT_LT((z.col(i) - o1.representation).norm(), 1e-14);
  }
}

TEST(Body, InitBoundsAndShapes) {
  const BodyParams b = BodyParams::init({{2, 64, 64, 64, 2}, true}, 4);
  ASSERT_EQ(b.layers.size(), 4u);
  EXPECT_EQ(b.input_dim(), 2);
  EXPECT_EQ(b.latent_dim(), 2);
  EXPECT_EQ(b.parameter_count(), (2u * 64 + 64) + 2 * (64u * 64 + 64) + (64u * 2 + 2));
  for (const auto& l : b.layers) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.weight.cols()));
    EXPECT_LE(l.weight.cwiseAbs().maxCoeff(), bound);
    EXPECT_LE(l.bias.cwiseAbs().maxCoeff(), bound);
  }
}

TEST(Logits, Examples) {
  Eigen::MatrixXd w(2, 2);
  w << 1, 0, 0, 1;
  const HeadState head = HeadState::cosine(PrototypeMatrix(w), 30.0, false);
  const Eigen::VectorXd l = logits(head, Eigen::VectorXd(Eigen::Vector2d(1, 0)));
  EXPECT_EQ(l(0), 30.0);
  EXPECT_EQ(l(1), 0.0);

  Eigen::MatrixXd w3(2, 3);
  w3 << 1, 0, 0, 0, 1, 0;
  const HeadState h3 = HeadState::cosine(PrototypeMatrix(w3), 5.0, false);
  EXPECT_TRUE(logits(h3, Eigen::VectorXd(Eigen::Vector3d(0, 0, 1))).isZero(0.0));

  const PrototypeMatrix etf = simplex_etf(3, 2, 0);
  const Eigen::VectorXd e = logits(HeadState::cosine(etf, 1.0, false), etf.row(0));
  EXPECT_NEAR(e(0), 1.0, 1e-12);
  EXPECT_NEAR(e(1), -0.5, 1e-12);
  EXPECT_NEAR(e(2), -0.5, 1e-12);
}

TEST(Predict, TiesGoToLowestClass) {
  Eigen::MatrixXd w(3, 2);
  w << 0, 1, 1, 0, 1, 0;
  const HeadState head = HeadState::free(w);
  const BodyParams body = identity_body(2, false);
  Eigen::MatrixXd x(2, 2);
  x << 1, 1, 0, 1;
  const auto pred = predict(body, head, x);
  EXPECT_EQ(pred[0], 1);
  EXPECT_EQ(pred[1], 0);
}

TEST(CrossEntropy, ClosedForms) {
  EXPECT_NEAR(cross_entropy(Eigen::Vector2d(30, 0), 0), std::log1p(std::exp(-30.0)), 1e-20);
  EXPECT_NEAR(cross_entropy(Eigen::Vector2d(30, 0), 0), 9.357622968840175e-14, 1e-20);
  for (int c : {2, 6, 10})
    EXPECT_NEAR(cross_entropy(Eigen::VectorXd::Constant(c, 3.7), 1), std::log(c), 1e-12);
  EXPECT_NEAR(cross_entropy(Eigen::Vector2d(0, 30), 0), 30.0 + std::log1p(std::exp(-30.0)), 1e-12);
}

TEST(Loss, ScaleThirtyVersusOneAtPerfectAlignment) {
  const PrototypeMatrix etf = simplex_etf(6, 5, 3);
  for (int c = 0; c < 6; ++c) {
    const double sharp = cross_entropy(logits(HeadState::cosine(etf, 30.0, false), etf.row(c)), c);
    const double soft = cross_entropy(logits(HeadState::cosine(etf, 1.0, false), etf.row(c)), c);
    EXPECT_LT(sharp, 1e-6);
    EXPECT_GT(soft, 0.1);
  }
}

TEST(Loss, NonIncreasingInScaleWhenCorrect) {
  const PrototypeMatrix w = solve_uniform_prototypes(6, 2, 1).prototypes;
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::VectorXd r = random_matrix(2, 1, rng).col(0).normalized();
    const Eigen::VectorXd base = logits(HeadState::cosine(w, 1.0, false), r);
    Eigen::Index label = 0;
    base.maxCoeff(&label);
    double prev = std::numeric_limits<double>::infinity();
    for (double s : {1.0, 5.0, 10.0, 30.0}) {
      const double l = cross_entropy(logits(HeadState::cosine(w, s, false), r), static_cast<int>(label));
      EXPECT_LE(l, prev + 1e-15);
      prev = l;
    }
  }
}

TEST(Gradients, FiniteDifferencesOnRandomInstances) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 24; ++trial) {
    const int variant = trial % 3;
    const int d = 2 + trial % 3;
    const BodyParams body = BodyParams::init({{2, 8, 8, 8, d}, variant != 2}, rng());
    HeadState head;
    if (variant == 2) {
      head = HeadState::free_init(6, d, rng());
    } else {
      const PrototypeMatrix w = solve_uniform_prototypes(6, d, rng()).prototypes;
      head = HeadState::cosine(w, 2.0 + trial % 4, variant == 1);
    }
    const Batch batch = random_batch(2, 4, 6, rng);
    EXPECT_LT(finite_diff_check(body, head, batch), 1e-4) << "trial " << trial;
  }
}

TEST(Gradients, ScaleGradientMatchesCentralDifference) {
  std::mt19937_64 rng(12);
  const BodyParams body = BodyParams::init({{2, 8, 8, 8, 2}, true}, 3);
  HeadState head = HeadState::cosine(solve_uniform_prototypes(3, 2, 0).prototypes, 4.0, true);
  const Batch batch = random_batch(2, 5, 3, rng);
  const LossAndGrads lg = loss_and_grads(body, head, batch);
  ASSERT_TRUE(lg.grads.scale.has_value());
  const double h = 1e-6;
  HeadState up = head, down = head;
  up.scale += h;
  down.scale -= h;
  const double numeric = (batch_loss(body, up, batch) - batch_loss(body, down, batch)) / (2 * h);
  EXPECT_NEAR(*lg.grads.scale, numeric, 1e-4 * std::max(1.0, std::abs(numeric)));
}

TEST(Gradients, SaturatedFitHasVanishingGradients) {
  // r is exactly the true prototype and s is huge: softmax is one-hot.
  Eigen::MatrixXd w(2, 2);
  w << 1, 0, -1, 0;
  const HeadState head = HeadState::cosine(PrototypeMatrix(w), 100.0, false);
  const BodyParams body = identity_body(2, true);
  Batch batch;
  batch.inputs = Eigen::MatrixXd(2, 2);
  batch.inputs << 1, -2, 0, 0;
  batch.labels = {0, 1};
  const LossAndGrads lg = loss_and_grads(body, head, batch);
  EXPECT_LT(lg.loss, 1e-8);
  EXPECT_LT(lg.grads.body.layers[0].weight.cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT(lg.grads.body.layers[0].bias.cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT(finite_diff_check(body, head, batch), 1e-4);
}

TEST(Gradients, NonFiniteLossThrows) {
  BodyParams body = identity_body(2, false);
  body.layers[0].weight(0, 0) = std::numeric_limits<double>::quiet_NaN();
  const HeadState head = HeadState::free(Eigen::MatrixXd::Identity(2, 2));
  Batch batch;
  batch.inputs = Eigen::MatrixXd::Ones(2, 1);
  batch.labels = {0};
  EXPECT_THROW(loss_and_grads(body, head, batch), DivergenceError);
}

TEST(Sgd, PlainStepWithoutMomentum) {
  BodyParams body = BodyParams::init({{2, 3, 2}, true}, 1);
  const BodyParams before = body;
  HeadState head = HeadState::cosine(simplex_etf(3, 2, 0), 1.0, false);
  Gradients g = Gradients::zeros_like(body, head);
  std::mt19937_64 rng(3);
  for (auto& l : g.body.layers) {
    l.weight = random_matrix(static_cast<int>(l.weight.rows()), static_cast<int>(l.weight.cols()), rng);
    l.bias = random_matrix(static_cast<int>(l.bias.size()), 1, rng).col(0);
  }
  OptimizerState opt = OptimizerState::create(body, head, 0.1, 0.0, 0.0);
  sgd_step(body, head, g, opt);
  for (std::size_t i = 0; i < body.layers.size(); ++i) {
    EXPECT_TRUE(body.layers[i].weight == before.layers[i].weight - 0.1 * g.body.layers[i].weight);
    EXPECT_TRUE(body.layers[i].bias == before.layers[i].bias - 0.1 * g.body.layers[i].bias);
  }
}

TEST(Sgd, ZeroGradientLeavesParametersAlone) {
  BodyParams body = BodyParams::init({{2, 3, 2}, true}, 1);
  const BodyParams before = body;
  HeadState head = HeadState::free_init(3, 2, 4);
  const HeadState head_before = head;
  OptimizerState opt = OptimizerState::create(body, head, 0.5, 0.9, 0.0);
  sgd_step(body, head, Gradients::zeros_like(body, head), opt);
  EXPECT_TRUE(body == before);
  EXPECT_TRUE(head == head_before);
}

TEST(Sgd, TwoMomentumStepsMoveLrGTimesTwoPlusM) {
  BodyParams body = identity_body(2, false);
  const BodyParams before = body;
  HeadState head = HeadState::free(Eigen::MatrixXd::Identity(2, 2));
  Gradients g = Gradients::zeros_like(body, head);
  g.body.layers[0].weight.setConstant(0.3);
  g.body.layers[0].bias.setConstant(-1.2);
  const double lr = 0.05, m = 0.9;
  OptimizerState opt = OptimizerState::create(body, head, lr, m, 0.0);
  sgd_step(body, head, g, opt);
  sgd_step(body, head, g, opt);
  const Eigen::MatrixXd moved = before.layers[0].weight - body.layers[0].weight;
  EXPECT_LT((moved - Eigen::MatrixXd::Constant(2, 2, lr * 0.3 * (2 + m))).cwiseAbs().maxCoeff(), 1e-15);
  const Eigen::VectorXd moved_b = before.layers[0].bias - body.layers[0].bias;
  EXPECT_LT((moved_b - Eigen::VectorXd::Constant(2, lr * -1.2 * (2 + m))).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Sgd, CosinePrototypesNeverMove) {
  BodyParams body = BodyParams::init({{2, 4, 2}, true}, 1);
  HeadState head = HeadState::cosine(simplex_etf(3, 2, 0), 2.0, true);
  const Eigen::MatrixXd w0 = head.weights;
  std::mt19937_64 rng(1);
  const Batch batch = random_batch(2, 8, 3, rng);
  OptimizerState opt = OptimizerState::create(body, head, 0.1, 0.9, 1e-3);
  for (int i = 0; i < 5; ++i) sgd_step(body, head, loss_and_grads(body, head, batch).grads, opt);
  EXPECT_TRUE(head.weights == w0);
  EXPECT_NE(head.scale, 2.0);
}
