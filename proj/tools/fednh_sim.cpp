#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "fednh/config.hpp"
#include "fednh/datagen.hpp"
#include "fednh/experiment.hpp"
#include "fednh/hypersphere.hpp"
#include "fednh/rng.hpp"

using namespace fednh;

namespace {

struct ConfigFlags {
  std::string preset_name;
  std::string config_path;
  std::string method;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> sets;
  std::optional<int> threads;

  void add_to(CLI::App* cmd, bool with_output) {
    cmd->add_option("--preset", preset_name, "Start from a named preset");
    cmd->add_option("--config", config_path, "key = value config file")->check(CLI::ExistingFile);
    cmd->add_option("--method", method, "fednh, fedavg, fedavg_uh or local");
    cmd->add_option("--seed", seed, "Master seed");
    cmd->add_option("--set", sets, "Override any config key, e.g. --set rounds=10");
    if (with_output) {
      cmd->add_option("--out", out, "Output directory");
      cmd->add_option("--threads", threads, "Worker threads (default: $FEDNH_SIM_THREADS or 1)")
          ->check(CLI::PositiveNumber);
    }
  }

  // Precedence: preset, then config file, then --set, then the dedicated flags.
  ExperimentConfig resolve() const {
    ExperimentConfig c = preset_name.empty() ? ExperimentConfig{} : preset(preset_name);
    if (!config_path.empty()) c = parse_config_file(config_path, c);
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
      apply_setting(c, s.substr(0, eq), s.substr(eq + 1));
    }
    if (!method.empty()) apply_setting(c, "method", method);
    if (seed) c.seed = *seed;
    if (!out.empty()) c.output_dir = out;
    validate(c);
    return c;
  }

  int thread_count() const {
    if (threads) return *threads;
    if (const char* env = std::getenv("FEDNH_SIM_THREADS")) {
      try {
        const int n = std::stoi(env);
        if (n > 0) return n;
      } catch (const std::exception&) {
      }
      throw ConfigError(std::string("FEDNH_SIM_THREADS must be a positive integer, got '") + env +
                        "'");
    }
    return 1;
  }
};

void print_round(const RoundRecord& r) {
  std::cerr << "round " << r.round << "  loss " << r.train_loss;
  if (r.gm) std::cerr << "  gm " << *r.gm;
  std::cerr << "  pm_v " << r.pm_v << "  pm_l " << r.pm_l << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated learning simulator: FedNH and baselines on spiral data"};
  app.require_subcommand(1);

  ConfigFlags run_flags;
  auto* run = app.add_subcommand("run", "Run one experiment and write its artifacts");
  run_flags.add_to(run, true);

  ConfigFlags sweep_flags;
  std::string rhos_text = "0.1,0.3,0.5,0.7,0.9";
  auto* sweep = app.add_subcommand("sweep-rho", "Run FedNH once per rho and summarize");
  sweep_flags.add_to(sweep, true);
  sweep->add_option("--rhos", rhos_text, "Comma-separated rho values in (0, 1]");

  int proto_classes = 6, proto_dim = 2;
  std::uint64_t proto_seed = 0;
  auto* protos = app.add_subcommand("dump-prototypes", "Print uniform prototypes as CSV");
  protos->add_option("--classes", proto_classes, "Number of classes")->required();
  protos->add_option("--dim", proto_dim, "Latent dimension")->required();
  protos->add_option("--seed", proto_seed, "Solver seed");

  ConfigFlags data_flags;
  std::string split = "train";
  auto* dataset = app.add_subcommand("dump-dataset", "Print the generated spiral data as CSV");
  data_flags.add_to(dataset, false);
  dataset->add_option("--split", split, "train or test")->check(CLI::IsMember({"train", "test"}));

  ConfigFlags part_flags;
  auto* partition = app.add_subcommand("dump-partition", "Print per-client class counts as CSV");
  part_flags.add_to(partition, false);

  ConfigFlags show_flags;
  auto* show = app.add_subcommand("show-config", "Print the resolved configuration");
  show_flags.add_to(show, false);

  auto* presets = app.add_subcommand("presets", "List the shipped presets");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      const ExperimentConfig c = run_flags.resolve();
      const RunSummary s = run_experiment(c, RunOptions{run_flags.thread_count(), true});
      if (!s.result.log.records.empty()) print_round(s.result.log.records.back());
      for (const auto& w : s.result.warnings) std::cerr << "warning: " << w << '\n';
      std::cerr << "artifacts in " << s.output_dir.string() << '\n';
    } else if (sweep->parsed()) {
      ExperimentConfig c = sweep_flags.resolve();
      if (c.method != Method::FedNH)
        std::cerr << "note: sweeping rho with method " << to_string(c.method)
                  << " (rho only affects fednh)\n";
      const auto rhos = parse_rho_list(rhos_text);
      const auto rows = rho_sweep(c, rhos, RunOptions{sweep_flags.thread_count(), true});
      std::cout << sweep_csv(rows);
    } else if (protos->parsed()) {
      const SolveResult r = solve_uniform_prototypes(
          proto_classes, proto_dim, derive_seed(proto_seed, Stream::Prototypes));
      std::cout << matrix_csv(r.prototypes.rows(), "class", "w");
      std::cerr << "min_pairwise_distance " << r.min_distance << (r.converged ? "" : " (not converged)")
                << '\n';
    } else if (dataset->parsed()) {
      const ExperimentConfig c = data_flags.resolve();
      const ExperimentData d = build_data(c);
      const LabeledDataset& ds = split == "train" ? d.train : d.test;
      Eigen::MatrixXd m(static_cast<Eigen::Index>(ds.size()), ds.input_dim() + 1);
      m.leftCols(ds.input_dim()) = ds.points;
      for (std::size_t i = 0; i < ds.size(); ++i) m(static_cast<Eigen::Index>(i), ds.input_dim()) = ds.labels[i];
      std::cout << "index,x,y,label\n";
      std::string csv = matrix_csv(m, "index", "v");
      std::cout << csv.substr(csv.find('\n') + 1);
    } else if (partition->parsed()) {
      const ExperimentConfig c = part_flags.resolve();
      const ExperimentData d = build_data(c);
      std::cout << "client";
      for (int k = 0; k < d.train.num_classes; ++k) std::cout << ",class" << k;
      std::cout << '\n';
      for (int k = 0; k < d.partition.num_clients(); ++k) {
        std::cout << k;
        for (auto n : class_histogram(d.train, d.partition.clients[k])) std::cout << ',' << n;
        std::cout << '\n';
      }
    } else if (show->parsed()) {
      std::cout << to_text(show_flags.resolve());
    } else if (presets->parsed()) {
      for (const auto& n : preset_names()) std::cout << n << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "fednh-sim: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
