#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "fednh/datagen.hpp"
#include "fednh/hypersphere.hpp"

namespace fednh {

enum class WeightMode {
  Empirical,  // alpha(c) = client's training frequency of class c
  Presence,   // alpha(c) = 1 if the class appears in the client's training data
  Uniform,    // alpha(c) = 1 for every class (plain accuracy)
};

struct EvalWeights {
  std::vector<double> per_class;
  WeightMode mode = WeightMode::Uniform;

  static EvalWeights empirical(std::span<const std::size_t> train_histogram);
  static EvalWeights presence(std::span<const std::size_t> train_histogram);
  static EvalWeights uniform(int classes);
};

/// sum_j alpha(y_j) [y_j == yhat_j] / sum_j alpha(y_j). nullopt when the
/// denominator is zero (none of the weighted classes occur in the test set).
std::optional<double> weighted_accuracy(std::span<const int> predicted,
                                        std::span<const int> truth, const EvalWeights& weights);

double plain_accuracy(std::span<const int> predicted, std::span<const int> truth);

struct ClientEval {
  std::span<const int> predictions;  // personalized model on the test set
  std::span<const std::size_t> train_histogram;
};

struct RoundMetrics {
  std::optional<double> gm;  // absent when the method has no global model
  double pm_v = 0.0;
  double pm_l = 0.0;
  double fairness = 0.0;  // population std of per-client PM(L)
  std::vector<std::optional<double>> client_pm_v;
  std::vector<std::optional<double>> client_pm_l;
  int excluded = 0;  // clients whose weighted denominator is zero
};

/// Global accuracy of `global_predictions` plus the per-client personalized
/// accuracies, their means over included clients and the PM(L) spread.
RoundMetrics evaluate_round(std::optional<std::span<const int>> global_predictions,
                            std::span<const ClientEval> clients, std::span<const int> test_labels);

/// Combines precomputed per-client accuracies (used when accuracies are
/// cached between rounds).
RoundMetrics summarize_clients(std::optional<double> gm,
                               std::vector<std::optional<double>> client_pm_v,
                               std::vector<std::optional<double>> client_pm_l);

double population_std(std::span<const double> values);

/// Gram matrix of prototype rows.
Eigen::MatrixXd prototype_similarity(const PrototypeMatrix& w);
Eigen::MatrixXd prototype_similarity(const Eigen::MatrixXd& rows);

struct RecallReport {
  std::vector<double> recall;
  double macro = 0.0;
  double minimum = 0.0;
};

/// Requires every class to appear in `truth`.
RecallReport per_class_recall(std::span<const int> predicted, std::span<const int> truth,
                              int classes);

/// Per-class mean of the columns of `reps` (d x N); C x d, zero rows for
/// classes without samples.
Eigen::MatrixXd class_means(const Eigen::MatrixXd& reps, std::span<const int> labels, int classes);

/// Mean over rows of cos(a_c, b_c). Rows where either side is zero are skipped;
/// nullopt if every row is skipped.
std::optional<double> mean_row_cosine(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

}  // namespace fednh
