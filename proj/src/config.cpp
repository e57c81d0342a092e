#include "fednh/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

#include "fednh/rng.hpp"

namespace fednh {
namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

[[noreturn]] void bad(const std::string& key, const std::string& expected,
                      const std::string& value) {
  throw ConfigError("key '" + key + "': expected " + expected + ", got '" + value + "'");
}

std::string fmt_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& key, const std::string& value, const std::string& range,
                    const std::function<bool(double)>& ok) {
  double v = 0.0;
  const char* end = value.data() + value.size();
  auto res = std::from_chars(value.data(), end, v);
  if (value.empty() || res.ec != std::errc{} || res.ptr != end || !std::isfinite(v) || !ok(v))
    bad(key, range, value);
  return v;
}

long long parse_int(const std::string& key, const std::string& value, const std::string& range,
                    long long lo, long long hi) {
  long long v = 0;
  const char* end = value.data() + value.size();
  auto res = std::from_chars(value.data(), end, v);
  if (value.empty() || res.ec != std::errc{} || res.ptr != end || v < lo || v > hi)
    bad(key, range, value);
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  bad(key, "true or false", value);
}

std::vector<int> parse_int_list(const std::string& key, const std::string& value, int lo,
                                bool allow_empty) {
  std::vector<int> out;
  const std::string range = "comma-separated integers >= " + std::to_string(lo);
  if (value.empty()) {
    if (!allow_empty) bad(key, range, value);
    return out;
  }
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const std::string t = trim(item);
    try {
      out.push_back(static_cast<int>(parse_int(key, t, range, lo, std::numeric_limits<int>::max())));
    } catch (const ConfigError&) {
      bad(key, range, value);
    }
  }
  if (!value.empty() && value.back() == ',') bad(key, range, value);
  return out;
}

std::string join(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

constexpr int kIntMax = std::numeric_limits<int>::max();

struct Field {
  std::string key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <typename Pred>
Field real(std::string key, double ExperimentConfig::*member, std::string range, Pred ok) {
  return {key,
          [=](ExperimentConfig& c, const std::string& v) {
            c.*member = parse_double(key, v, range, ok);
          },
          [=](const ExperimentConfig& c) { return fmt_double(c.*member); }};
}

Field integer(std::string key, int ExperimentConfig::*member, int lo) {
  const std::string range = "an integer >= " + std::to_string(lo);
  return {key,
          [=](ExperimentConfig& c, const std::string& v) {
            c.*member = static_cast<int>(parse_int(key, v, range, lo, kIntMax));
          },
          [=](const ExperimentConfig& c) { return std::to_string(c.*member); }};
}

Field boolean(std::string key, bool ExperimentConfig::*member) {
  return {key, [=](ExperimentConfig& c, const std::string& v) { c.*member = parse_bool(key, v); },
          [=](const ExperimentConfig& c) { return std::string(c.*member ? "true" : "false"); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back({"method",
                 [](ExperimentConfig& c, const std::string& v) {
                   try {
                     c.method = method_from_string(v);
                   } catch (const std::exception&) {
                     bad("method", "one of fednh, fedavg, fedavg_uh, local", v);
                   }
                 },
                 [](const ExperimentConfig& c) { return to_string(c.method); }});
    f.push_back({"train_counts",
                 [](ExperimentConfig& c, const std::string& v) {
                   auto counts = parse_int_list("train_counts", v, 1, false);
                   if (counts.size() < 2)
                     bad("train_counts", "at least 2 comma-separated integers >= 1", v);
                   c.train_counts = std::move(counts);
                 },
                 [](const ExperimentConfig& c) { return join(c.train_counts); }});
    f.push_back(integer("test_count", &ExperimentConfig::test_count, 1));
    f.push_back(real("noise_std", &ExperimentConfig::noise_std, "a number >= 0",
                     [](double x) { return x >= 0.0; }));
    f.push_back(boolean("general_classes", &ExperimentConfig::general_classes));
    f.push_back(integer("clients", &ExperimentConfig::clients, 1));
    f.push_back(real("participation", &ExperimentConfig::participation, "a number in (0, 1]",
                     [](double x) { return x > 0.0 && x <= 1.0; }));
    f.push_back(integer("rounds", &ExperimentConfig::rounds, 0));
    f.push_back(real("rho", &ExperimentConfig::rho, "a number in [0, 1]",
                     [](double x) { return x >= 0.0 && x <= 1.0; }));
    f.push_back({"alpha_rule",
                 [](ExperimentConfig& c, const std::string& v) {
                   if (v == "uniform")
                     c.alpha_rule = AlphaRule::Uniform;
                   else if (v == "present_only")
                     c.alpha_rule = AlphaRule::PresentOnly;
                   else
                     bad("alpha_rule", "uniform or present_only", v);
                 },
                 [](const ExperimentConfig& c) {
                   return std::string(c.alpha_rule == AlphaRule::Uniform ? "uniform"
                                                                         : "present_only");
                 }});
    f.push_back(real("beta", &ExperimentConfig::beta, "a number > 0",
                     [](double x) { return x > 0.0; }));
    f.push_back(integer("local_epochs", &ExperimentConfig::local_epochs, 1));
    f.push_back(integer("batch_size", &ExperimentConfig::batch_size, 1));
    f.push_back(real("lr", &ExperimentConfig::lr, "a number > 0",
                     [](double x) { return x > 0.0; }));
    f.push_back(real("momentum", &ExperimentConfig::momentum, "a number in [0, 1)",
                     [](double x) { return x >= 0.0 && x < 1.0; }));
    f.push_back(real("weight_decay", &ExperimentConfig::weight_decay, "a number >= 0",
                     [](double x) { return x >= 0.0; }));
    f.push_back(real("lr_decay", &ExperimentConfig::lr_decay, "a number in (0, 1]",
                     [](double x) { return x > 0.0 && x <= 1.0; }));
    f.push_back(integer("latent_dim", &ExperimentConfig::latent_dim, 2));
    f.push_back({"hidden_widths",
                 [](ExperimentConfig& c, const std::string& v) {
                   c.hidden_widths = parse_int_list("hidden_widths", v, 1, true);
                 },
                 [](const ExperimentConfig& c) { return join(c.hidden_widths); }});
    f.push_back({"scale_mode",
                 [](ExperimentConfig& c, const std::string& v) {
                   if (v == "trainable")
                     c.scale_trainable = true;
                   else if (v == "fixed")
                     c.scale_trainable = false;
                   else
                     bad("scale_mode", "trainable or fixed", v);
                 },
                 [](const ExperimentConfig& c) {
                   return std::string(c.scale_trainable ? "trainable" : "fixed");
                 }});
    f.push_back(real("scale_init", &ExperimentConfig::scale_init, "a number > 0",
                     [](double x) { return x > 0.0; }));
    f.push_back(real("proto_tol", &ExperimentConfig::proto_tol, "a number > 0",
                     [](double x) { return x > 0.0; }));
    f.push_back(integer("proto_max_iters", &ExperimentConfig::proto_max_iters, 1));
    f.push_back({"seed",
                 [](ExperimentConfig& c, const std::string& v) {
                   std::uint64_t s = 0;
                   const char* end = v.data() + v.size();
                   auto res = std::from_chars(v.data(), end, s);
                   if (v.empty() || res.ec != std::errc{} || res.ptr != end)
                     bad("seed", "an unsigned 64-bit integer", v);
                   c.seed = s;
                 },
                 [](const ExperimentConfig& c) { return std::to_string(c.seed); }});
    f.push_back({"output_dir",
                 [](ExperimentConfig& c, const std::string& v) {
                   if (v.empty()) bad("output_dir", "a non-empty path", v);
                   c.output_dir = v;
                 },
                 [](const ExperimentConfig& c) { return c.output_dir; }});
    f.push_back(integer("scatter_every", &ExperimentConfig::scatter_every, 0));
    return f;
  }();
  return table;
}

const Field* find_field(const std::string& key) {
  for (const auto& f : fields())
    if (f.key == key) return &f;
  return nullptr;
}

ExperimentConfig centralized(std::vector<int> counts, int rounds) {
  ExperimentConfig c;
  c.method = Method::FedAvgUH;
  c.train_counts = std::move(counts);
  c.noise_std = 0.3;
  c.clients = 1;
  c.participation = 1.0;
  c.rounds = rounds;
  c.local_epochs = 1;
  c.lr = 0.1;
  c.latent_dim = 2;
  return c;
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& f : fields()) k.push_back(f.key);
    return k;
  }();
  return keys;
}

void apply_setting(ExperimentConfig& config, const std::string& key, const std::string& value) {
  const Field* f = find_field(key);
  if (!f) throw ConfigError("unknown key '" + key + "'");
  f->set(config, value);
}

ExperimentConfig parse_config_text(std::string_view text, const std::string& source,
                                   ExperimentConfig base) {
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    const std::string body = trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    const std::string where = source + ":" + std::to_string(lineno) + ": ";
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value', got '" + body + "'");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    try {
      apply_setting(base, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  return base;
}

ExperimentConfig parse_config_file(const std::string& path, ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path, std::move(base));
}

void validate(const ExperimentConfig& config) {
  if (!config.general_classes && config.train_counts.size() != 6)
    throw ConfigError("key 'train_counts': the six-arm spiral needs exactly 6 classes (got " +
                      std::to_string(config.train_counts.size()) +
                      "); set general_classes = true for other class counts");
  if (config.train_counts.size() < 2)
    throw ConfigError("key 'train_counts': at least 2 classes required");
  long long total = 0;
  for (int n : config.train_counts) {
    if (n < 1) throw ConfigError("key 'train_counts': every count must be >= 1");
    total += n;
  }
  if (config.latent_dim < 2) throw ConfigError("key 'latent_dim': expected an integer >= 2");
  if (config.clients < 1) throw ConfigError("key 'clients': expected an integer >= 1");
  if (config.test_count < 1) throw ConfigError("key 'test_count': expected an integer >= 1");
  if (!(config.participation > 0.0 && config.participation <= 1.0))
    throw ConfigError("key 'participation': expected a number in (0, 1]");
  if (!(config.rho >= 0.0 && config.rho <= 1.0))
    throw ConfigError("key 'rho': expected a number in [0, 1]");
  if (total < config.clients)
    throw ConfigError("key 'clients': more clients (" + std::to_string(config.clients) +
                      ") than training samples (" + std::to_string(total) + ")");
}

std::string to_text(const ExperimentConfig& config) {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(config) + "\n";
  return out;
}

std::vector<std::string> preset_names() {
  return {"spiral-centralized-balanced", "spiral-centralized-imbalanced", "spiral-federated",
          "spiral-federated-paper"};
}

ExperimentConfig preset(const std::string& name) {
  if (name == "spiral-centralized-balanced") return centralized({3000, 3000, 3000, 3000, 3000, 3000}, 30);
  if (name == "spiral-centralized-imbalanced") return centralized({3000, 1500, 750, 375, 187, 93}, 100);
  if (name == "spiral-federated" || name == "spiral-federated-paper") {
    ExperimentConfig c;
    c.noise_std = 0.3;
    c.lr = 0.05;
    c.latent_dim = 5;
    c.beta = 0.3;
    if (name == "spiral-federated") {
      c.clients = 20;
      c.participation = 0.25;
      c.rounds = 60;
    } else {
      c.clients = 100;
      c.participation = 0.1;
      c.rounds = 200;
    }
    return c;
  }
  std::string known;
  for (const auto& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
  throw ConfigError("unknown preset '" + name + "' (known: " + known + ")");
}

FederatedConfig to_federated(const ExperimentConfig& config, int threads) {
  FederatedConfig f;
  f.method = config.method;
  f.participation = config.participation;
  f.rounds = config.rounds;
  f.rho = config.rho;
  f.alpha_rule = config.alpha_rule;
  f.local.epochs = config.local_epochs;
  f.local.batch_size = config.batch_size;
  f.local.momentum = config.momentum;
  f.local.weight_decay = config.weight_decay;
  f.lr = config.lr;
  f.lr_decay = config.lr_decay;
  f.hidden_widths = config.hidden_widths;
  f.latent_dim = config.latent_dim;
  f.scale_init = config.scale_init;
  f.scale_trainable = config.scale_trainable;
  f.prototype_solver.tol = config.proto_tol;
  f.prototype_solver.max_iters = config.proto_max_iters;
  f.seed = config.seed;
  f.threads = threads;
  return f;
}

ExperimentData build_data(const ExperimentConfig& config) {
  validate(config);
  const auto arms = config.general_classes ? SpiralArms::General : SpiralArms::Paper;
  const std::vector<int> test_counts(config.train_counts.size(), config.test_count);
  ExperimentData d;
  d.train = gen_spiral(config.train_counts, config.noise_std,
                       derive_seed(config.seed, Stream::TrainData), arms);
  d.test = gen_spiral(test_counts, config.noise_std, derive_seed(config.seed, Stream::TestData), arms);
  d.partition = dirichlet_partition(d.train, config.clients, config.beta,
                                    derive_seed(config.seed, Stream::Partition));
  return d;
}

}  // namespace fednh
