#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "fednh/datagen.hpp"
#include "fednh/fedcore.hpp"

namespace fednh {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything needed to reproduce one run. Defaults follow the published
/// training setup (SGD lr 0.01, momentum 0.9, weight decay 1e-5, 5 local
/// epochs, batch 64, rho 0.9, 100 clients at 10% participation).
struct ExperimentConfig {
  Method method = Method::FedNH;

  std::vector<int> train_counts{3000, 3000, 3000, 3000, 3000, 3000};
  int test_count = 1000;  // per class, balanced
  double noise_std = 1.0;
  bool general_classes = false;

  int clients = 100;
  double participation = 0.1;
  int rounds = 200;
  double rho = 0.9;
  AlphaRule alpha_rule = AlphaRule::Uniform;
  double beta = 0.3;

  int local_epochs = 5;
  int batch_size = 64;
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-5;
  double lr_decay = 0.99;

  int latent_dim = 2;
  std::vector<int> hidden_widths{64, 64, 64};
  double scale_init = 1.0;
  bool scale_trainable = true;
  double proto_tol = 1e-4;
  int proto_max_iters = 20000;

  std::uint64_t seed = 0;
  std::string output_dir = "out";
  int scatter_every = 0;  // 0: only the initial and final rounds

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

/// Keys in their canonical order.
const std::vector<std::string>& config_keys();

/// Sets one key from its text value. Throws ConfigError naming the key and
/// the expected range on malformed or out-of-range input.
void apply_setting(ExperimentConfig& config, const std::string& key, const std::string& value);

/// Parses `key = value` lines ('#' starts a comment) on top of `base`.
/// Unknown keys are rejected; errors carry `source:line`.
ExperimentConfig parse_config_text(std::string_view text, const std::string& source,
                                   ExperimentConfig base = {});
ExperimentConfig parse_config_file(const std::string& path, ExperimentConfig base = {});

/// Cross-field checks; throws ConfigError.
void validate(const ExperimentConfig& config);

/// Lossless text form; parse_config_text(to_text(c)) == c.
std::string to_text(const ExperimentConfig& config);

std::vector<std::string> preset_names();
/// Throws ConfigError for unknown names.
ExperimentConfig preset(const std::string& name);

FederatedConfig to_federated(const ExperimentConfig& config, int threads);

struct ExperimentData {
  LabeledDataset train;
  LabeledDataset test;
  Partition partition;
};

ExperimentData build_data(const ExperimentConfig& config);

}  // namespace fednh
