#include "fednh/hypersphere.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "fednh/rng.hpp"

namespace fednh {

namespace {

constexpr double kZeroNorm = 1e-12;

double unit_slack(Eigen::Index dim) {
  return static_cast<double>(2 * dim + 4) * std::numeric_limits<double>::epsilon();
}

Eigen::MatrixXd gaussian_matrix(int rows, int cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = normal(rng);
  return m;
}

}  // namespace

PrototypeMatrix::PrototypeMatrix(Eigen::MatrixXd rows) : rows_(std::move(rows)) {
  if (rows_.rows() < 2 || rows_.cols() < 2)
    throw std::invalid_argument("prototype matrix needs C >= 2 and d >= 2, got " +
                                std::to_string(rows_.rows()) + "x" +
                                std::to_string(rows_.cols()));
  for (Eigen::Index c = 0; c < rows_.rows(); ++c) {
    const double norm = rows_.row(c).norm();
    if (!(std::abs(norm - 1.0) <= kUnitTolerance))
      throw std::invalid_argument("prototype row " + std::to_string(c) +
                                  " is not unit norm (norm " + std::to_string(norm) + ")");
  }
}

NormalizedRows normalize_rows(const Eigen::MatrixXd& w) {
  NormalizedRows out{w, {}};
  const double slack = unit_slack(w.cols());
  for (Eigen::Index r = 0; r < w.rows(); ++r) {
    auto row = out.rows.row(r);
    double sq = row.squaredNorm();
    if (std::sqrt(sq) < kZeroNorm) {
      row.setZero();
      out.zero_rows.push_back(static_cast<int>(r));
      continue;
    }
    // A second pass is occasionally needed to land inside the slack band;
    // after that the row is a fixed point of this function.
    for (int pass = 0; pass < 3 && std::abs(sq - 1.0) > slack; ++pass) {
      row /= std::sqrt(sq);
      sq = row.squaredNorm();
    }
  }
  return out;
}

Eigen::MatrixXd random_rotation(int d, std::uint64_t seed) {
  Rng rng(seed);
  const Eigen::MatrixXd a = gaussian_matrix(d, d, rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(d, d);
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int i = 0; i < d; ++i)
    if (r(i, i) < 0.0) q.col(i) *= -1.0;
  return q;
}

PrototypeMatrix simplex_etf(int classes, int dim, std::uint64_t seed) {
  if (classes < 2) throw std::invalid_argument("simplex_etf: need at least 2 classes");
  if (dim < 2) throw std::invalid_argument("simplex_etf: need dimension >= 2");
  if (classes > dim + 1)
    throw std::invalid_argument("simplex_etf: no simplex of " + std::to_string(classes) +
                                " vertices in dimension " + std::to_string(dim));

  // Helmert basis of the hyperplane orthogonal to the all-ones vector: row i
  // is the coordinate vector of e_i - 1/C, all with the same norm.
  Eigen::MatrixXd coords = Eigen::MatrixXd::Zero(classes, dim);
  for (int k = 1; k < classes; ++k) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(k) * (k + 1));
    for (int i = 0; i < k; ++i) coords(i, k - 1) = scale;
    coords(k, k - 1) = -static_cast<double>(k) * scale;
  }
  for (int i = 0; i < classes; ++i) coords.row(i).normalize();

  const Eigen::MatrixXd rotated = coords * random_rotation(dim, seed).transpose();
  return PrototypeMatrix(normalize_rows(rotated).rows);
}

double min_pairwise_distance(const Eigen::MatrixXd& rows) {
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < rows.rows(); ++i)
    for (Eigen::Index j = i + 1; j < rows.rows(); ++j)
      best = std::min(best, (rows.row(i) - rows.row(j)).norm());
  return best;
}

double min_pairwise_distance(const PrototypeMatrix& w) { return min_pairwise_distance(w.rows()); }

SolveResult solve_uniform_prototypes(int classes, int dim, std::uint64_t seed,
                                     const SolverOptions& options) {
  if (classes < 2 || dim < 2)
    throw std::invalid_argument("solve_uniform_prototypes: need C >= 2 and d >= 2");
  if (!(options.tol > 0.0)) throw std::invalid_argument("solve_uniform_prototypes: tol must be > 0");
  if (options.max_iters < 1)
    throw std::invalid_argument("solve_uniform_prototypes: max_iters must be positive");

  if (options.analytic_fast_path && classes <= dim + 1) {
    PrototypeMatrix w = simplex_etf(classes, dim, seed);
    const double md = min_pairwise_distance(w);
    return SolveResult{std::move(w), md, true, 0, 0.0};
  }

  constexpr double kTempStart = 0.5;
  constexpr double kTempFloor = 1e-4;
  constexpr double kStepPerTemp = 0.5;
  constexpr int kCheckWindow = 500;

  Rng rng(seed);
  Eigen::MatrixXd w = normalize_rows(gaussian_matrix(classes, dim, rng)).rows;
  Eigen::MatrixXd best = w;
  double best_md = min_pairwise_distance(w);

  const int anneal_iters = std::max(1, options.max_iters / 2);
  const double log_ratio = std::log(kTempFloor / kTempStart);
  double last_check_md = best_md;
  double residual = std::numeric_limits<double>::infinity();
  bool converged = false;
  int it = 0;

  Eigen::MatrixXd weights(classes, classes);
  while (it < options.max_iters) {
    const double frac = std::min(1.0, static_cast<double>(it) / anneal_iters);
    const double temp = kTempStart * std::exp(frac * log_ratio);

    // Soft-max weights over pairs of the inner products (largest inner
    // product = smallest distance dominates as temp shrinks).
    const Eigen::MatrixXd gram = w * w.transpose();
    double max_ip = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < classes; ++i)
      for (int j = i + 1; j < classes; ++j) max_ip = std::max(max_ip, gram(i, j));
    double total = 0.0;
    weights.setZero();
    for (int i = 0; i < classes; ++i)
      for (int j = i + 1; j < classes; ++j) {
        const double e = std::exp((gram(i, j) - max_ip) / temp);
        weights(i, j) = e;
        weights(j, i) = e;
        total += e;
      }
    weights /= total;

    Eigen::MatrixXd grad = weights * w;
    for (int i = 0; i < classes; ++i) grad.row(i) -= grad.row(i).dot(w.row(i)) * w.row(i);
    w -= (kStepPerTemp * temp) * grad;
    w = normalize_rows(w).rows;
    ++it;

    const double md = min_pairwise_distance(w);
    if (md > best_md) {
      best_md = md;
      best = w;
    }
    if (it >= anneal_iters && (it - anneal_iters) % kCheckWindow == 0) {
      residual = std::abs(best_md - last_check_md);
      last_check_md = best_md;
      if (it > anneal_iters && residual < options.tol) {
        converged = true;
        break;
      }
    }
  }

  return SolveResult{PrototypeMatrix(normalize_rows(best).rows), best_md, converged, it, residual};
}

}  // namespace fednh
