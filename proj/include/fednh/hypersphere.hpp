#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace fednh {

/// C x d matrix whose rows are unit-norm class prototypes.
class PrototypeMatrix {
 public:
  static constexpr double kUnitTolerance = 1e-9;

  PrototypeMatrix() = default;
  /// Throws std::invalid_argument unless C >= 2, d >= 2 and every row has
  /// norm 1 within kUnitTolerance.
  explicit PrototypeMatrix(Eigen::MatrixXd rows);

  const Eigen::MatrixXd& rows() const { return rows_; }
  int classes() const { return static_cast<int>(rows_.rows()); }
  int dim() const { return static_cast<int>(rows_.cols()); }
  Eigen::VectorXd row(int c) const { return rows_.row(c).transpose(); }

  friend bool operator==(const PrototypeMatrix& a, const PrototypeMatrix& b) {
    return a.rows_.rows() == b.rows_.rows() && a.rows_.cols() == b.rows_.cols() &&
           a.rows_ == b.rows_;
  }

 private:
  Eigen::MatrixXd rows_;
};

struct NormalizedRows {
  Eigen::MatrixXd rows;
  std::vector<int> zero_rows;  // rows with norm < 1e-12, left as zero

  bool degenerate() const { return !zero_rows.empty(); }
};

/// Scales every nonzero row to unit norm. Rows already within a few ulp of
/// unit norm are left untouched so the operation is bitwise idempotent.
NormalizedRows normalize_rows(const Eigen::MatrixXd& w);

/// Uniform random rotation of R^d drawn from the QR decomposition of a seeded
/// Gaussian matrix.
Eigen::MatrixXd random_rotation(int d, std::uint64_t seed);

/// Analytic simplex equiangular tight frame: C unit vectors in R^d with all
/// pairwise inner products -1/(C-1), rotated by random_rotation(d, seed).
/// Requires 2 <= C <= d+1.
PrototypeMatrix simplex_etf(int classes, int dim, std::uint64_t seed);

double min_pairwise_distance(const PrototypeMatrix& w);
double min_pairwise_distance(const Eigen::MatrixXd& rows);

struct SolverOptions {
  double tol = 1e-4;
  int max_iters = 20000;
  // Use the closed-form simplex when C <= d+1. Disable to force the
  // iterative solver (used to cross-check it against the analytic optimum).
  bool analytic_fast_path = true;
};

struct SolveResult {
  PrototypeMatrix prototypes;  // best configuration seen
  double min_distance = 0.0;
  bool converged = false;
  int iterations = 0;
  double residual = 0.0;
};

/// Maximally separated, equidistant unit prototypes. For C > d+1 (or when the
/// fast path is disabled) runs projected gradient descent on a log-sum-exp
/// smoothing of the maximum pairwise inner product with an annealed
/// temperature. Non-convergence is reported through SolveResult::converged.
SolveResult solve_uniform_prototypes(int classes, int dim, std::uint64_t seed,
                                     const SolverOptions& options = {});

}  // namespace fednh
