#include "fednh/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace fednh {

EvalWeights EvalWeights::empirical(std::span<const std::size_t> train_histogram) {
  const double total = static_cast<double>(
      std::accumulate(train_histogram.begin(), train_histogram.end(), std::size_t{0}));
  EvalWeights w{std::vector<double>(train_histogram.size(), 0.0), WeightMode::Empirical};
  if (total > 0.0)
    for (std::size_t c = 0; c < train_histogram.size(); ++c)
      w.per_class[c] = static_cast<double>(train_histogram[c]) / total;
  return w;
}

EvalWeights EvalWeights::presence(std::span<const std::size_t> train_histogram) {
  EvalWeights w{std::vector<double>(train_histogram.size(), 0.0), WeightMode::Presence};
  for (std::size_t c = 0; c < train_histogram.size(); ++c)
    w.per_class[c] = train_histogram[c] > 0 ? 1.0 : 0.0;
  return w;
}

EvalWeights EvalWeights::uniform(int classes) {
  return EvalWeights{std::vector<double>(classes, 1.0), WeightMode::Uniform};
}

std::optional<double> weighted_accuracy(std::span<const int> predicted,
                                        std::span<const int> truth, const EvalWeights& weights) {
  if (predicted.size() != truth.size())
    throw std::invalid_argument("weighted_accuracy: prediction/label size mismatch");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t j = 0; j < truth.size(); ++j) {
    const double a = weights.per_class.at(truth[j]);
    den += a;
    if (predicted[j] == truth[j]) num += a;
  }
  if (!(den > 0.0)) return std::nullopt;
  return num / den;
}

double plain_accuracy(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size() || truth.empty())
    throw std::invalid_argument("plain_accuracy: need equal, nonempty prediction/label lists");
  std::size_t hit = 0;
  for (std::size_t j = 0; j < truth.size(); ++j) hit += predicted[j] == truth[j];
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

double population_std(std::span<const double> values) {
  if (values.empty()) return 0.0;
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double acc = 0.0;
  for (double v : values) acc += (v - mean) * (v - mean);
  return std::sqrt(acc / n);
}

RoundMetrics summarize_clients(std::optional<double> gm,
                               std::vector<std::optional<double>> client_pm_v,
                               std::vector<std::optional<double>> client_pm_l) {
  RoundMetrics m;
  m.gm = gm;
  std::vector<double> v_vals;
  std::vector<double> l_vals;
  for (std::size_t k = 0; k < client_pm_v.size(); ++k) {
    // Both weightings share a support, so a client is either fully included
    // or fully excluded.
    if (!client_pm_v[k] || !client_pm_l[k]) {
      ++m.excluded;
      continue;
    }
    v_vals.push_back(*client_pm_v[k]);
    l_vals.push_back(*client_pm_l[k]);
  }
  if (!v_vals.empty()) {
    m.pm_v = std::accumulate(v_vals.begin(), v_vals.end(), 0.0) / static_cast<double>(v_vals.size());
    m.pm_l = std::accumulate(l_vals.begin(), l_vals.end(), 0.0) / static_cast<double>(l_vals.size());
    m.fairness = population_std(l_vals);
  }
  m.client_pm_v = std::move(client_pm_v);
  m.client_pm_l = std::move(client_pm_l);
  return m;
}

RoundMetrics evaluate_round(std::optional<std::span<const int>> global_predictions,
                            std::span<const ClientEval> clients, std::span<const int> test_labels) {
  std::optional<double> gm;
  if (global_predictions) {
    int classes = 0;
    for (int y : test_labels) classes = std::max(classes, y + 1);
    gm = weighted_accuracy(*global_predictions, test_labels, EvalWeights::uniform(classes));
  }
  std::vector<std::optional<double>> pm_v;
  std::vector<std::optional<double>> pm_l;
  for (const auto& client : clients) {
    pm_v.push_back(weighted_accuracy(client.predictions, test_labels,
                                     EvalWeights::presence(client.train_histogram)));
    pm_l.push_back(weighted_accuracy(client.predictions, test_labels,
                                     EvalWeights::empirical(client.train_histogram)));
  }
  return summarize_clients(gm, std::move(pm_v), std::move(pm_l));
}

Eigen::MatrixXd prototype_similarity(const Eigen::MatrixXd& rows) {
  Eigen::MatrixXd s(rows.rows(), rows.rows());
  for (Eigen::Index i = 0; i < rows.rows(); ++i)
    for (Eigen::Index j = i; j < rows.rows(); ++j) {
      const double v = rows.row(i).dot(rows.row(j));
      s(i, j) = v;
      s(j, i) = v;
    }
  return s;
}

Eigen::MatrixXd prototype_similarity(const PrototypeMatrix& w) {
  return prototype_similarity(w.rows());
}

RecallReport per_class_recall(std::span<const int> predicted, std::span<const int> truth,
                              int classes) {
  if (predicted.size() != truth.size())
    throw std::invalid_argument("per_class_recall: prediction/label size mismatch");
  std::vector<std::size_t> total(classes, 0);
  std::vector<std::size_t> hit(classes, 0);
  for (std::size_t j = 0; j < truth.size(); ++j) {
    ++total[truth[j]];
    if (predicted[j] == truth[j]) ++hit[truth[j]];
  }
  RecallReport report;
  report.recall.resize(classes);
  for (int c = 0; c < classes; ++c) {
    if (total[c] == 0)
      throw std::invalid_argument("per_class_recall: class " + std::to_string(c) +
                                  " missing from the test set");
    report.recall[c] = static_cast<double>(hit[c]) / static_cast<double>(total[c]);
  }
  report.macro = std::accumulate(report.recall.begin(), report.recall.end(), 0.0) / classes;
  report.minimum = *std::min_element(report.recall.begin(), report.recall.end());
  return report;
}

}  // namespace fednh

namespace fednh {

Eigen::MatrixXd class_means(const Eigen::MatrixXd& reps, std::span<const int> labels, int classes) {
  if (static_cast<std::size_t>(reps.cols()) != labels.size())
    throw std::invalid_argument("class_means: label count does not match representation count");
  Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(classes, reps.rows());
  std::vector<std::size_t> counts(classes, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int c = labels[i];
    if (c < 0 || c >= classes) throw std::invalid_argument("class_means: label out of range");
    sums.row(c) += reps.col(static_cast<Eigen::Index>(i)).transpose();
    ++counts[c];
  }
  for (int c = 0; c < classes; ++c)
    if (counts[c] > 0) sums.row(c) /= static_cast<double>(counts[c]);
  return sums;
}

std::optional<double> mean_row_cosine(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument("mean_row_cosine: shape mismatch");
  double sum = 0.0;
  int used = 0;
  for (Eigen::Index c = 0; c < a.rows(); ++c) {
    const double na = a.row(c).norm(), nb = b.row(c).norm();
    if (na == 0.0 || nb == 0.0) continue;
    sum += a.row(c).dot(b.row(c)) / (na * nb);
    ++used;
  }
  if (used == 0) return std::nullopt;
  return sum / used;
}

}  // namespace fednh
