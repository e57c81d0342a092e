#include "fednh/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "fednh/metrics.hpp"
#include "fednh/svg.hpp"

namespace fednh {
namespace {

namespace fs = std::filesystem;

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string num(const std::optional<double>& v) { return v ? num(*v) : "nan"; }

void write_file(const fs::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << contents;
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

// At most `cap` evenly strided columns, so large test sets keep the SVGs small.
std::vector<Eigen::Index> plot_subset(Eigen::Index n, Eigen::Index cap) {
  std::vector<Eigen::Index> idx;
  const Eigen::Index stride = std::max<Eigen::Index>(1, (n + cap - 1) / cap);
  for (Eigen::Index i = 0; i < n; i += stride) idx.push_back(i);
  return idx;
}

std::string scatter_for(const BodyParams& body, const HeadState& head, const Eigen::MatrixXd& inputs,
                        std::span<const int> labels, const std::string& title) {
  const auto idx = plot_subset(inputs.cols(), 3000);
  Eigen::MatrixXd x(inputs.rows(), static_cast<Eigen::Index>(idx.size()));
  std::vector<int> lab(idx.size());
  for (std::size_t j = 0; j < idx.size(); ++j) {
    x.col(static_cast<Eigen::Index>(j)) = inputs.col(idx[j]);
    lab[j] = labels[idx[j]];
  }
  return scatter_svg(embed(body, x), lab, head.weights, title);
}

double relative_gain(double value, double base) {
  return base == 0.0 ? 0.0 : (value - base) / base;
}

}  // namespace

const std::vector<std::string>& log_columns() {
  static const std::vector<std::string> cols{
      "round", "participants", "lr",       "train_loss",     "gm_acc",          "pm_v",
      "pm_l",  "fairness_std", "min_proto_dist", "excluded_clients", "unsampled_clients"};
  return cols;
}

std::string log_csv(const ExperimentLog& log) {
  std::string out;
  for (std::size_t i = 0; i < log_columns().size(); ++i)
    out += (i ? "," : "") + log_columns()[i];
  out += '\n';
  for (const auto& r : log.records) {
    out += std::to_string(r.round) + ',' + std::to_string(r.participants) + ',' + num(r.lr) + ',' +
           num(r.train_loss) + ',' + num(r.gm) + ',' + num(r.pm_v) + ',' + num(r.pm_l) + ',' +
           num(r.fairness) + ',' + num(r.min_proto_dist) + ',' + std::to_string(r.excluded) + ',' +
           std::to_string(r.unsampled) + '\n';
  }
  return out;
}

std::string timing_csv(const ExperimentLog& log) {
  std::string out = "round,wall_ms\n";
  for (const auto& r : log.records) out += std::to_string(r.round) + ',' + num(r.wall_ms) + '\n';
  return out;
}

std::string matrix_csv(const Eigen::MatrixXd& m, const std::string& row_label,
                       const std::string& column_prefix) {
  std::string out = row_label;
  for (Eigen::Index j = 0; j < m.cols(); ++j) out += ',' + column_prefix + std::to_string(j);
  out += '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out += std::to_string(i);
    for (Eigen::Index j = 0; j < m.cols(); ++j) out += ',' + num(m(i, j));
    out += '\n';
  }
  return out;
}

RunSummary run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  RunSummary summary;
  summary.data = build_data(config);
  summary.output_dir = config.output_dir;
  const FederatedConfig fed = to_federated(config, options.threads);
  const FederatedData data{summary.data.train, summary.data.partition, summary.data.test};

  const bool plots = options.write_files && config.latent_dim == 2;
  if (options.write_files) fs::create_directories(summary.output_dir);

  Eigen::MatrixXd test_inputs;
  if (plots) test_inputs = input_matrix(summary.data.test);
  const std::string method = to_string(config.method);

  RoundObserver observer;
  if (plots) {
    observer = [&](const SimulationState& s) {
      const bool due = s.round == 0 || s.round == config.rounds ||
                       (config.scatter_every > 0 && s.round % config.scatter_every == 0);
      if (!due) return;
      // Local training has no global model; plot the lowest-id client instead.
      const bool local = config.method == Method::Local;
      const BodyParams& body = local ? s.clients.front().body : s.global_body;
      const HeadState& head = local ? s.clients.front().head : s.global_head;
      const std::string title = method + (local ? " client 0" : " global") + ", round " +
                                std::to_string(s.round);
      write_file(summary.output_dir / ("repr_scatter_round" + std::to_string(s.round) + ".svg"),
                 scatter_for(body, head, test_inputs, summary.data.test.labels, title));
    };
  }

  summary.result = run_federated(fed, data, observer);
  if (!options.write_files) return summary;

  const auto& result = summary.result;
  const HeadState& head =
      config.method == Method::Local ? result.clients.front().head : result.global_head;
  const Eigen::MatrixXd similarity = prototype_similarity(normalize_rows(head.weights).rows);
  write_file(summary.output_dir / "log.csv", log_csv(result.log));
  write_file(summary.output_dir / "timing.csv", timing_csv(result.log));
  write_file(summary.output_dir / "prototypes_final.csv", matrix_csv(head.weights, "class", "w"));
  write_file(summary.output_dir / "similarity.csv", matrix_csv(similarity, "class", "c"));
  write_file(summary.output_dir / "config.resolved", to_text(config));
  if (!result.warnings.empty()) {
    std::string w;
    for (const auto& line : result.warnings) w += line + '\n';
    write_file(summary.output_dir / "warnings.txt", w);
  }
  if (plots)
    write_file(summary.output_dir / "similarity_heatmap.svg",
               heatmap_svg(similarity, method + " prototype similarity, round " +
                                           std::to_string(config.rounds)));
  return summary;
}

std::string sweep_csv(std::span<const SweepRow> rows) {
  std::string out = "rho,pm_v,pm_l,gm_acc,gain_pm_v,gain_pm_l,gain_gm_acc\n";
  for (const auto& r : rows)
    out += num(r.rho) + ',' + num(r.pm_v) + ',' + num(r.pm_l) + ',' + num(r.gm) + ',' +
           num(r.gain_pm_v) + ',' + num(r.gain_pm_l) + ',' + num(r.gain_gm) + '\n';
  return out;
}

std::vector<SweepRow> rho_sweep(const ExperimentConfig& config, std::span<const double> rhos,
                                const RunOptions& options) {
  if (rhos.empty()) throw std::invalid_argument("rho_sweep: no rho values given");
  for (double r : rhos)
    if (!(r > 0.0 && r <= 1.0))
      throw std::invalid_argument("rho_sweep: rho " + num(r) + " outside (0, 1]");

  std::vector<SweepRow> rows;
  for (double rho : rhos) {
    ExperimentConfig c = config;
    c.rho = rho;
    c.output_dir = (fs::path(config.output_dir) / ("rho_" + num(rho))).string();
    const RunSummary run = run_experiment(c, options);
    SweepRow row;
    row.rho = rho;
    if (!run.result.log.records.empty()) {
      const auto& last = run.result.log.records.back();
      row.pm_v = last.pm_v;
      row.pm_l = last.pm_l;
      row.gm = last.gm;
    }
    rows.push_back(row);
  }
  const auto base = std::min_element(rows.begin(), rows.end(),
                                     [](const SweepRow& a, const SweepRow& b) { return a.rho < b.rho; });
  const SweepRow ref = *base;
  for (auto& r : rows) {
    r.gain_pm_v = relative_gain(r.pm_v, ref.pm_v);
    r.gain_pm_l = relative_gain(r.pm_l, ref.pm_l);
    if (r.gm && ref.gm) r.gain_gm = relative_gain(*r.gm, *ref.gm);
  }
  if (options.write_files) {
    fs::create_directories(config.output_dir);
    write_file(fs::path(config.output_dir) / "sweep.csv", sweep_csv(rows));
  }
  return rows;
}

std::vector<double> parse_rho_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto first = item.find_first_not_of(" \t");
    const auto last = item.find_last_not_of(" \t");
    const std::string t = first == std::string::npos ? "" : item.substr(first, last - first + 1);
    double v = 0.0;
    auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || res.ec != std::errc{} || res.ptr != t.data() + t.size() || !(v > 0.0 && v <= 1.0))
      throw std::invalid_argument("rho list: expected values in (0, 1], got '" + t + "'");
    out.push_back(v);
  }
  if (out.empty()) throw std::invalid_argument("rho list is empty");
  return out;
}

}  // namespace fednh
