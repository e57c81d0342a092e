#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace fednh {

/// N labeled points of dimension p. Row i of `points` is sample i.
struct LabeledDataset {
  Eigen::MatrixXd points;
  std::vector<int> labels;
  int num_classes = 0;

  std::size_t size() const { return labels.size(); }
  int input_dim() const { return static_cast<int>(points.cols()); }
  /// Throws std::invalid_argument if the invariants are broken.
  void validate() const;
};

/// Per-client sample indices into a LabeledDataset.
struct Partition {
  std::vector<std::vector<std::size_t>> clients;

  int num_clients() const { return static_cast<int>(clients.size()); }
  /// true for clients that received no samples at all
  std::vector<bool> empty_clients() const;
};

enum class SpiralArms {
  Paper,    // six arms at k*pi/3; any other class count is rejected
  General,  // C arms at 2*k*pi/C
};

/// Spiral arms: for class k with n_k points, point i (0-based) has radius
/// 1 + 9 i/(n_k-1) and angle a_k + i a_k/(n_k-1) + b, b ~ N(0, noise_std^2),
/// mapped to (r sin w, r cos w).
LabeledDataset gen_spiral(std::span<const int> counts, double noise_std, std::uint64_t seed,
                          SpiralArms arms = SpiralArms::Paper);

/// Per class, draws client proportions from Dirichlet(beta) and cuts the
/// shuffled class indices contiguously (largest-remainder rounding).
Partition dirichlet_partition(const LabeledDataset& ds, int num_clients, double beta,
                              std::uint64_t seed);

std::vector<std::size_t> class_histogram(
    const LabeledDataset& ds, std::optional<std::span<const std::size_t>> subset = std::nullopt);

/// Base angle of spiral arm k.
double spiral_arm_angle(int k, int num_classes, SpiralArms arms);

}  // namespace fednh
