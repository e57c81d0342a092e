#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fednh/datagen.hpp"
#include "fednh/hypersphere.hpp"
#include "fednh/model.hpp"
#include "fednh/rng.hpp"

namespace fednh {

enum class Method {
  FedNH,     // uniform initial head, EMA semantic infusion of prototypes
  FedAvg,    // free head trained by gradient and averaged with the body
  FedAvgUH,  // uniform head fixed forever
  Local,     // no aggregation; clients train on the FedAvg schedule
};

std::string to_string(Method m);
Method method_from_string(const std::string& s);

enum class AlphaRule {
  Uniform,      // alpha_k = 1/|S^t| over all reports (absent classes add zero)
  PresentOnly,  // alpha_k = 1/#{k in S^t owning class c}
};

struct ClientReport {
  int client_id = 0;
  BodyParams body;
  HeadState head;              // head after local training (s or W may move)
  Eigen::MatrixXd mu;          // C x d local class means, zero rows for absent
  std::vector<bool> present;   // empty when prototypes were not requested
  std::size_t sample_count = 0;
  double mean_loss = 0.0;      // mean mini-batch loss over the local run

  /// Throws std::logic_error if mu and present disagree.
  void validate() const;
};

struct LocalTraining {
  int epochs = 5;
  int batch_size = 64;
  double momentum = 0.9;
  double weight_decay = 1e-5;
};

struct LocalPrototypes {
  Eigen::MatrixXd mu;
  std::vector<bool> present;
};

/// Per-class arithmetic mean of the body's representations, without
/// renormalization; zero rows for classes the client does not hold.
LocalPrototypes local_prototypes(const BodyParams& body, const LabeledDataset& data,
                                 std::span<const std::size_t> indices);

/// Shuffled mini-batch SGD on the body (and trainable head parameters) for
/// `epochs` passes, starting from a fresh optimizer state.
ClientReport client_update(int client_id, const BodyParams& body_in, const HeadState& head_in,
                           const LabeledDataset& data, std::span<const std::size_t> indices,
                           const LocalTraining& training, double lr, Rng& rng,
                           bool report_prototypes);

struct ClientSample {
  std::vector<int> ids;  // ascending
  bool pool_too_small = false;
};

/// Uniformly samples ceil(gamma*K) distinct non-empty clients.
ClientSample sample_clients(int num_clients, double gamma, const std::vector<bool>& empty,
                            Rng& rng);
int participants_per_round(int num_clients, double gamma);

/// Unweighted coordinate-wise mean, summed in ascending client id.
BodyParams server_aggregate_body(std::span<const ClientReport> reports);
/// Averages whatever the head trains (scale or free weights) the same way.
HeadState server_aggregate_head(const HeadState& current, std::span<const ClientReport> reports);

struct PrototypeUpdate {
  PrototypeMatrix prototypes;
  std::vector<int> kept_previous;  // rows that collapsed to zero
};

/// W_c <- rho W_c + (1 - rho) sum_k alpha_k mu_{k,c}, then row renormalization.
PrototypeUpdate server_update_prototypes(const PrototypeMatrix& w,
                                         std::span<const ClientReport> reports, double rho,
                                         AlphaRule rule = AlphaRule::Uniform);

struct FederatedConfig {
  Method method = Method::FedNH;
  double participation = 0.1;
  int rounds = 200;
  double rho = 0.9;
  AlphaRule alpha_rule = AlphaRule::Uniform;
  LocalTraining local;
  double lr = 0.01;
  double lr_decay = 0.99;
  std::vector<int> hidden_widths{64, 64, 64};
  int latent_dim = 2;
  double scale_init = 1.0;
  bool scale_trainable = true;
  SolverOptions prototype_solver;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct FederatedData {
  const LabeledDataset& train;
  const Partition& partition;
  const LabeledDataset& test;
};

struct RoundRecord {
  int round = 0;
  int participants = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  std::optional<double> gm;
  double pm_v = 0.0;
  double pm_l = 0.0;
  double fairness = 0.0;
  std::optional<double> min_proto_dist;
  int excluded = 0;
  int unsampled = 0;
  double wall_ms = 0.0;  // not part of the deterministic log
};

struct ExperimentLog {
  std::vector<RoundRecord> records;
};

/// A client's personalized model: its latest local body with the head it
/// trained against. Never-sampled clients hold the initial global model.
struct ClientModel {
  BodyParams body;
  HeadState head;
  int last_round = -1;
  int times_sampled = 0;
};

struct SimulationState {
  int round = 0;  // completed rounds
  const BodyParams& global_body;
  const HeadState& global_head;
  std::span<const ClientModel> clients;
};

using RoundObserver = std::function<void(const SimulationState&)>;

struct SimulationResult {
  ExperimentLog log;
  BodyParams global_body;
  HeadState global_head;
  HeadState initial_head;
  std::vector<ClientModel> clients;
  std::vector<std::vector<int>> schedule;
  std::vector<std::string> warnings;
};

class SimulationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Runs `config.method` for `config.rounds` rounds. The observer, if set, is
/// called with round 0 before training and after every round.
SimulationResult run_federated(const FederatedConfig& config, const FederatedData& data,
                               const RoundObserver& observer = {});

SimulationResult run_fednh(FederatedConfig config, const FederatedData& data,
                           const RoundObserver& observer = {});
SimulationResult run_baseline(FederatedConfig config, const FederatedData& data, Method mode,
                              const RoundObserver& observer = {});

/// Learning rate used in round t (0-based).
double round_learning_rate(const FederatedConfig& config, int round);

/// Initial global body and head for a configuration. Shared by every method
/// so that runs with the same seed start from the same body.
std::pair<BodyParams, HeadState> initial_model(const FederatedConfig& config, int input_dim,
                                               int classes, std::vector<std::string>* warnings);

}  // namespace fednh
