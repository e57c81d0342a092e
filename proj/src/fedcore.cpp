#include "fednh/fedcore.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "fednh/metrics.hpp"
#include "fednh/parallel.hpp"

namespace fednh {

std::string to_string(Method m) {
  switch (m) {
    case Method::FedNH: return "fednh";
    case Method::FedAvg: return "fedavg";
    case Method::FedAvgUH: return "fedavg_uh";
    case Method::Local: return "local";
  }
  return "unknown";
}

Method method_from_string(const std::string& s) {
  if (s == "fednh") return Method::FedNH;
  if (s == "fedavg") return Method::FedAvg;
  if (s == "fedavg_uh") return Method::FedAvgUH;
  if (s == "local") return Method::Local;
  throw std::invalid_argument("unknown method '" + s + "' (expected fednh|fedavg|fedavg_uh|local)");
}

void ClientReport::validate() const {
  if (!body.all_finite())
    throw std::logic_error("client " + std::to_string(client_id) + " reported non-finite body");
  if (present.empty()) {
    if (mu.size() != 0)
      throw std::logic_error("client " + std::to_string(client_id) + " sent prototypes without mask");
    return;
  }
  if (static_cast<std::size_t>(mu.rows()) != present.size())
    throw std::logic_error("client " + std::to_string(client_id) + " prototype/mask size mismatch");
  for (std::size_t c = 0; c < present.size(); ++c) {
    const bool zero = mu.row(static_cast<Eigen::Index>(c)).isZero(0.0);
    if (present[c] == zero)
      throw std::logic_error("client " + std::to_string(client_id) + " class " +
                             std::to_string(c) + ": prototype must be zero iff class is absent");
  }
}

LocalPrototypes local_prototypes(const BodyParams& body, const LabeledDataset& data,
                                 std::span<const std::size_t> indices) {
  const int classes = data.num_classes;
  LocalPrototypes out{Eigen::MatrixXd::Zero(classes, body.latent_dim()),
                      std::vector<bool>(classes, false)};
  if (indices.empty()) return out;
  const Batch batch = make_batch(data, indices);
  const Eigen::MatrixXd reps = embed(body, batch.inputs);
  std::vector<std::size_t> counts(classes, 0);
  for (std::size_t j = 0; j < batch.size(); ++j) {
    out.mu.row(batch.labels[j]) += reps.col(static_cast<Eigen::Index>(j)).transpose();
    ++counts[batch.labels[j]];
  }
  for (int c = 0; c < classes; ++c) {
    if (counts[c] == 0) continue;
    out.mu.row(c) /= static_cast<double>(counts[c]);
    out.present[c] = true;
  }
  return out;
}

ClientReport client_update(int client_id, const BodyParams& body_in, const HeadState& head_in,
                           const LabeledDataset& data, std::span<const std::size_t> indices,
                           const LocalTraining& training, double lr, Rng& rng,
                           bool report_prototypes) {
  if (indices.empty())
    throw std::invalid_argument("client " + std::to_string(client_id) + " has no data");
  if (training.batch_size < 1) throw std::invalid_argument("batch size must be positive");

  ClientReport report;
  report.client_id = client_id;
  report.body = body_in;
  report.head = head_in;
  report.sample_count = indices.size();

  OptimizerState opt = OptimizerState::create(report.body, report.head, lr, training.momentum,
                                              training.weight_decay);
  std::vector<std::size_t> order(indices.begin(), indices.end());
  const std::size_t bs = static_cast<std::size_t>(training.batch_size);
  double loss_sum = 0.0;
  std::size_t steps = 0;
  for (int epoch = 0; epoch < training.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t len = std::min(bs, order.size() - start);
      const Batch batch = make_batch(data, std::span(order).subspan(start, len));
      const LossAndGrads lg = loss_and_grads(report.body, report.head, batch);
      sgd_step(report.body, report.head, lg.grads, opt);
      loss_sum += lg.loss;
      ++steps;
    }
  }
  report.mean_loss = steps > 0 ? loss_sum / static_cast<double>(steps)
                               : batch_loss(report.body, report.head, make_batch(data, indices));
  if (!std::isfinite(report.mean_loss) || !report.body.all_finite())
    throw DivergenceError("client " + std::to_string(client_id) + " diverged");

  if (report_prototypes) {
    LocalPrototypes protos = local_prototypes(report.body, data, indices);
    report.mu = std::move(protos.mu);
    report.present = std::move(protos.present);
  }
  return report;
}

int participants_per_round(int num_clients, double gamma) {
  // The small offset keeps products like 0.3 * 10 = 3.0000000000000004 at 3.
  const int m = static_cast<int>(std::ceil(gamma * num_clients - 1e-9));
  return std::clamp(m, 1, num_clients);
}

ClientSample sample_clients(int num_clients, double gamma, const std::vector<bool>& empty,
                            Rng& rng) {
  if (!(gamma > 0.0 && gamma <= 1.0))
    throw std::invalid_argument("participation rate must be in (0, 1]");
  std::vector<int> pool;
  for (int k = 0; k < num_clients; ++k)
    if (k >= static_cast<int>(empty.size()) || !empty[k]) pool.push_back(k);
  const int wanted = participants_per_round(num_clients, gamma);
  ClientSample out;
  if (wanted > static_cast<int>(pool.size())) {
    out.pool_too_small = true;
    out.ids = pool;
    return out;
  }
  for (int i = 0; i < wanted; ++i) {
    std::uniform_int_distribution<int> pick(i, static_cast<int>(pool.size()) - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  out.ids.assign(pool.begin(), pool.begin() + wanted);
  std::sort(out.ids.begin(), out.ids.end());
  return out;
}

namespace {

std::vector<const ClientReport*> by_client_id(std::span<const ClientReport> reports) {
  std::vector<const ClientReport*> sorted;
  for (const auto& r : reports) sorted.push_back(&r);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const ClientReport* a, const ClientReport* b) { return a->client_id < b->client_id; });
  return sorted;
}

}  // namespace

BodyParams server_aggregate_body(std::span<const ClientReport> reports) {
  if (reports.empty()) throw std::invalid_argument("server_aggregate_body: no reports");
  const auto sorted = by_client_id(reports);
  BodyParams sum = BodyParams::zeros_like(sorted.front()->body);
  for (const ClientReport* r : sorted) {
    if (!r->body.same_shape(sum))
      throw std::invalid_argument("server_aggregate_body: client " + std::to_string(r->client_id) +
                                  " sent a body of a different shape");
    for (std::size_t l = 0; l < sum.layers.size(); ++l) {
      sum.layers[l].weight += r->body.layers[l].weight;
      sum.layers[l].bias += r->body.layers[l].bias;
    }
  }
  const double n = static_cast<double>(sorted.size());
  for (auto& layer : sum.layers) {
    layer.weight /= n;
    layer.bias /= n;
  }
  return sum;
}

HeadState server_aggregate_head(const HeadState& current, std::span<const ClientReport> reports) {
  HeadState out = current;
  if (reports.empty()) return out;
  const auto sorted = by_client_id(reports);
  const double n = static_cast<double>(sorted.size());
  if (current.trains_scale()) {
    double s = 0.0;
    for (const ClientReport* r : sorted) s += r->head.scale;
    out.scale = s / n;
  } else if (current.trains_weights()) {
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(current.weights.rows(), current.weights.cols());
    for (const ClientReport* r : sorted) w += r->head.weights;
    out.weights = w / n;
  }
  return out;
}

PrototypeUpdate server_update_prototypes(const PrototypeMatrix& w,
                                         std::span<const ClientReport> reports, double rho,
                                         AlphaRule rule) {
  if (!(rho >= 0.0 && rho <= 1.0)) throw std::invalid_argument("rho must be in [0, 1]");
  if (rho == 1.0) return PrototypeUpdate{w, {}};

  const auto sorted = by_client_id(reports);
  const int classes = w.classes();
  Eigen::MatrixXd aggregate = Eigen::MatrixXd::Zero(classes, w.dim());
  for (int c = 0; c < classes; ++c) {
    int owners = 0;
    for (const ClientReport* r : sorted) {
      if (r->present.empty()) throw std::invalid_argument("report without local prototypes");
      if (r->present[c]) ++owners;
    }
    const double denom = rule == AlphaRule::Uniform ? static_cast<double>(sorted.size())
                                                    : static_cast<double>(owners);
    if (denom == 0.0) continue;
    for (const ClientReport* r : sorted) aggregate.row(c) += r->mu.row(c) / denom;
  }

  const Eigen::MatrixXd blended = rho * w.rows() + (1.0 - rho) * aggregate;
  NormalizedRows normalized = normalize_rows(blended);
  for (int c : normalized.zero_rows) normalized.rows.row(c) = w.rows().row(c);
  return PrototypeUpdate{PrototypeMatrix(std::move(normalized.rows)), normalized.zero_rows};
}

double round_learning_rate(const FederatedConfig& config, int round) {
  return config.lr * std::pow(config.lr_decay, round);
}

std::pair<BodyParams, HeadState> initial_model(const FederatedConfig& config, int input_dim,
                                               int classes, std::vector<std::string>* warnings) {
  Architecture arch;
  arch.widths.push_back(input_dim);
  arch.widths.insert(arch.widths.end(), config.hidden_widths.begin(), config.hidden_widths.end());
  arch.widths.push_back(config.latent_dim);
  const bool uniform_head = config.method == Method::FedNH || config.method == Method::FedAvgUH;
  arch.normalize_output = uniform_head;
  BodyParams body = BodyParams::init(arch, derive_seed(config.seed, Stream::Init, 0));

  if (!uniform_head)
    return {std::move(body),
            HeadState::free_init(classes, config.latent_dim, derive_seed(config.seed, Stream::Init, 1))};

  SolveResult solved = solve_uniform_prototypes(
      classes, config.latent_dim, derive_seed(config.seed, Stream::Prototypes), config.prototype_solver);
  if (!solved.converged && warnings)
    warnings->push_back("prototype solver hit its iteration cap (residual " +
                        std::to_string(solved.residual) + "); using best configuration found");
  return {std::move(body),
          HeadState::cosine(solved.prototypes, config.scale_init, config.scale_trainable)};
}

namespace {

void check_config(const FederatedConfig& config, const FederatedData& data) {
  data.train.validate();
  data.test.validate();
  if (data.partition.num_clients() < 1) throw std::invalid_argument("partition has no clients");
  if (data.train.num_classes != data.test.num_classes)
    throw std::invalid_argument("train and test sets disagree on the class count");
  if (!(config.participation > 0.0 && config.participation <= 1.0))
    throw std::invalid_argument("participation must be in (0, 1]");
  if (config.rounds < 0) throw std::invalid_argument("rounds must be >= 0");
  if (!(config.rho > 0.0 && config.rho <= 1.0)) throw std::invalid_argument("rho must be in (0, 1]");
  if (config.local.epochs < 0) throw std::invalid_argument("local epochs must be >= 0");
  if (config.latent_dim < 2) throw std::invalid_argument("latent dimension must be >= 2");
}

std::pair<std::optional<double>, std::optional<double>> personalized_accuracy(
    const ClientModel& model, const Eigen::MatrixXd& test_inputs, const std::vector<int>& labels,
    std::span<const std::size_t> histogram) {
  const std::vector<int> pred = predict(model.body, model.head, test_inputs);
  return {weighted_accuracy(pred, labels, EvalWeights::presence(histogram)),
          weighted_accuracy(pred, labels, EvalWeights::empirical(histogram))};
}

}  // namespace

SimulationResult run_federated(const FederatedConfig& config, const FederatedData& data,
                               const RoundObserver& observer) {
  check_config(config, data);
  using Clock = std::chrono::steady_clock;

  const int num_clients = data.partition.num_clients();
  const int classes = data.train.num_classes;
  const Method method = config.method;

  SimulationResult result;
  auto [body0, head0] = initial_model(config, data.train.input_dim(), classes, &result.warnings);
  result.global_body = body0;
  result.global_head = head0;
  result.initial_head = head0;
  result.clients.assign(num_clients, ClientModel{body0, head0, -1, 0});

  const std::vector<bool> empty = data.partition.empty_clients();
  for (int k = 0; k < num_clients; ++k)
    if (empty[k]) result.warnings.push_back("client " + std::to_string(k) + " holds no samples");

  std::vector<std::vector<std::size_t>> histograms(num_clients);
  for (int k = 0; k < num_clients; ++k)
    histograms[k] = class_histogram(data.train, data.partition.clients[k]);

  const Eigen::MatrixXd test_inputs = input_matrix(data.test);
  const std::vector<int>& test_labels = data.test.labels;

  std::vector<std::optional<double>> pm_v(num_clients);
  std::vector<std::optional<double>> pm_l(num_clients);
  {
    const std::vector<int> pred = predict(body0, head0, test_inputs);
    for (int k = 0; k < num_clients; ++k) {
      pm_v[k] = weighted_accuracy(pred, test_labels, EvalWeights::presence(histograms[k]));
      pm_l[k] = weighted_accuracy(pred, test_labels, EvalWeights::empirical(histograms[k]));
    }
  }

  auto notify = [&](int round) {
    if (observer)
      observer(SimulationState{round, result.global_body, result.global_head, result.clients});
  };
  notify(0);

  bool warned_pool = false;
  for (int t = 0; t < config.rounds; ++t) {
    const auto started = Clock::now();
    Rng sampling_rng = make_rng(config.seed, Stream::Sampling, static_cast<std::uint64_t>(t));
    ClientSample sample = sample_clients(num_clients, config.participation, empty, sampling_rng);
    if (sample.pool_too_small && !warned_pool) {
      result.warnings.push_back("fewer non-empty clients than ceil(gamma*K); sampling all of them");
      warned_pool = true;
    }
    result.schedule.push_back(sample.ids);
    const double lr = round_learning_rate(config, t);

    std::vector<ClientReport> reports(sample.ids.size());
    try {
      parallel_for(sample.ids.size(), config.threads, [&](std::size_t i) {
        const int k = sample.ids[i];
        const ClientModel& start = result.clients[k];
        const BodyParams& body_in = method == Method::Local ? start.body : result.global_body;
        const HeadState& head_in = method == Method::Local ? start.head : result.global_head;
        Rng rng = make_rng(config.seed, Stream::Training, static_cast<std::uint64_t>(k),
                           static_cast<std::uint64_t>(t));
        reports[i] = client_update(k, body_in, head_in, data.train, data.partition.clients[k],
                                   config.local, lr, rng, method == Method::FedNH);
        reports[i].validate();
      });
    } catch (const DivergenceError& e) {
      throw DivergenceError("round " + std::to_string(t) + ": " + e.what());
    } catch (const std::exception& e) {
      throw SimulationError("round " + std::to_string(t) + ": " + e.what());
    }

    for (const auto& report : reports) {
      ClientModel& model = result.clients[report.client_id];
      model.body = report.body;
      model.head = report.head;
      model.last_round = t;
      ++model.times_sampled;
    }

    if (method != Method::Local) {
      HeadState next_head = server_aggregate_head(result.global_head, reports);
      if (method == Method::FedNH) {
        PrototypeUpdate update = server_update_prototypes(
            PrototypeMatrix(result.global_head.weights), reports, config.rho, config.alpha_rule);
        for (int c : update.kept_previous)
          result.warnings.push_back("round " + std::to_string(t) + ": prototype " +
                                    std::to_string(c) + " collapsed to zero; kept previous");
        next_head.weights = update.prototypes.rows();
      }
      result.global_body = server_aggregate_body(reports);
      result.global_head = std::move(next_head);
    }

    // Personalized accuracies only change for clients trained this round.
    std::optional<double> gm;
    std::vector<int> global_pred;
    const std::size_t jobs = sample.ids.size() + (method != Method::Local ? 1 : 0);
    parallel_for(jobs, config.threads, [&](std::size_t i) {
      if (i == sample.ids.size()) {
        global_pred = predict(result.global_body, result.global_head, test_inputs);
        return;
      }
      const int k = sample.ids[i];
      std::tie(pm_v[k], pm_l[k]) =
          personalized_accuracy(result.clients[k], test_inputs, test_labels, histograms[k]);
    });
    if (method != Method::Local)
      gm = weighted_accuracy(global_pred, test_labels, EvalWeights::uniform(classes));
    RoundMetrics metrics = summarize_clients(gm, pm_v, pm_l);

    RoundRecord rec;
    rec.round = t + 1;
    rec.participants = static_cast<int>(reports.size());
    rec.lr = lr;
    double loss = 0.0;
    for (const auto& r : reports) loss += r.mean_loss;  // ascending client id
    rec.train_loss = loss / static_cast<double>(reports.size());
    rec.gm = metrics.gm;
    rec.pm_v = metrics.pm_v;
    rec.pm_l = metrics.pm_l;
    rec.fairness = metrics.fairness;
    if (method == Method::FedNH || method == Method::FedAvgUH) {
      rec.min_proto_dist = min_pairwise_distance(result.global_head.weights);
    } else if (method == Method::FedAvg) {
      rec.min_proto_dist = min_pairwise_distance(normalize_rows(result.global_head.weights).rows);
    }
    rec.excluded = metrics.excluded;
    rec.unsampled = static_cast<int>(std::count_if(
        result.clients.begin(), result.clients.end(),
        [](const ClientModel& m) { return m.times_sampled == 0; }));
    rec.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - started).count();
    result.log.records.push_back(rec);
    notify(t + 1);
  }
  return result;
}

SimulationResult run_fednh(FederatedConfig config, const FederatedData& data,
                           const RoundObserver& observer) {
  config.method = Method::FedNH;
  return run_federated(config, data, observer);
}

SimulationResult run_baseline(FederatedConfig config, const FederatedData& data, Method mode,
                              const RoundObserver& observer) {
  if (mode == Method::FedNH) throw std::invalid_argument("run_baseline: fednh is not a baseline");
  config.method = mode;
  return run_federated(config, data, observer);
}

}  // namespace fednh
