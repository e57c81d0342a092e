#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fednh/config.hpp"
#include "fednh/fedcore.hpp"

namespace fednh {

struct RunOptions {
  int threads = 1;
  bool write_files = true;
};

struct RunSummary {
  SimulationResult result;
  ExperimentData data;
  std::filesystem::path output_dir;
};

/// Column order of log.csv.
const std::vector<std::string>& log_columns();

/// log.csv contents. Missing values (GM of the local method, prototype
/// distance of a model without a global head) are written as `nan`.
std::string log_csv(const ExperimentLog& log);
std::string timing_csv(const ExperimentLog& log);
/// Rows of `m`, one per class, with shortest round-trip number formatting.
std::string matrix_csv(const Eigen::MatrixXd& m, const std::string& row_label,
                       const std::string& column_prefix);

/// Builds the data, runs the configured method and writes log.csv,
/// timing.csv, prototypes_final.csv, similarity.csv, config.resolved and,
/// for a 2-D latent space, repr_scatter_round{t}.svg and similarity_heatmap.svg.
RunSummary run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

struct SweepRow {
  double rho = 0.0;
  double pm_v = 0.0;
  double pm_l = 0.0;
  std::optional<double> gm;
  double gain_pm_v = 0.0;  // relative to the smallest rho
  double gain_pm_l = 0.0;
  std::optional<double> gain_gm;
};

/// One same-seeded run per rho (outputs in rho_<value>/ under the output
/// directory) and a sweep.csv summary with gains relative to the smallest rho.
std::vector<SweepRow> rho_sweep(const ExperimentConfig& config, std::span<const double> rhos,
                                const RunOptions& options = {});
std::string sweep_csv(std::span<const SweepRow> rows);

/// Parses "0.1,0.3,0.5"; every value must lie in (0, 1].
std::vector<double> parse_rho_list(const std::string& text);

}  // namespace fednh
