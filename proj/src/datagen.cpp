#include "fednh/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>

#include "fednh/rng.hpp"

namespace fednh {

void LabeledDataset::validate() const {
  if (labels.empty()) throw std::invalid_argument("dataset is empty");
  if (static_cast<std::size_t>(points.rows()) != labels.size())
    throw std::invalid_argument("dataset has " + std::to_string(points.rows()) + " points but " +
                                std::to_string(labels.size()) + " labels");
  for (int y : labels)
    if (y < 0 || y >= num_classes)
      throw std::invalid_argument("label " + std::to_string(y) + " outside [0, " +
                                  std::to_string(num_classes) + ")");
}

std::vector<bool> Partition::empty_clients() const {
  std::vector<bool> out(clients.size());
  for (std::size_t k = 0; k < clients.size(); ++k) out[k] = clients[k].empty();
  return out;
}

double spiral_arm_angle(int k, int num_classes, SpiralArms arms) {
  if (arms == SpiralArms::Paper) return k * std::numbers::pi / 3.0;
  return 2.0 * k * std::numbers::pi / num_classes;
}

LabeledDataset gen_spiral(std::span<const int> counts, double noise_std, std::uint64_t seed,
                          SpiralArms arms) {
  const int classes = static_cast<int>(counts.size());
  if (classes < 2) throw std::invalid_argument("gen_spiral: need at least 2 classes");
  if (arms == SpiralArms::Paper && classes != 6)
    throw std::invalid_argument("gen_spiral: the paper spiral has exactly 6 arms, got " +
                                std::to_string(classes) + " (enable general class counts)");
  if (!(noise_std >= 0.0)) throw std::invalid_argument("gen_spiral: noise_std must be >= 0");
  for (int n : counts)
    if (n < 1) throw std::invalid_argument("gen_spiral: every class count must be >= 1");

  const std::size_t total = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  LabeledDataset ds;
  ds.points.resize(static_cast<Eigen::Index>(total), 2);
  ds.labels.reserve(total);
  ds.num_classes = classes;

  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::Index row = 0;
  for (int k = 0; k < classes; ++k) {
    const int n = counts[k];
    const double span = n > 1 ? static_cast<double>(n - 1) : 1.0;
    const double base = spiral_arm_angle(k, classes, arms);
    for (int i = 0; i < n; ++i) {
      const double r = 1.0 + i * 9.0 / span;
      const double b = noise_std > 0.0 ? noise_std * normal(rng) : 0.0;
      const double omega = base + i * base / span + b;
      ds.points(row, 0) = r * std::sin(omega);
      ds.points(row, 1) = r * std::cos(omega);
      ds.labels.push_back(k);
      ++row;
    }
  }
  return ds;
}

namespace {

std::vector<double> sample_dirichlet(int k, double beta, Rng& rng) {
  std::gamma_distribution<double> gamma(beta, 1.0);
  std::vector<double> p(k);
  double total = 0.0;
  for (double& v : p) {
    v = gamma(rng);
    total += v;
  }
  if (!(total > 0.0)) {
    // Every draw underflowed (tiny beta): the limit is a one-hot vector.
    std::fill(p.begin(), p.end(), 0.0);
    p[std::uniform_int_distribution<int>(0, k - 1)(rng)] = 1.0;
    return p;
  }
  for (double& v : p) v /= total;
  return p;
}

std::vector<std::size_t> largest_remainder(std::size_t n, const std::vector<double>& p) {
  const std::size_t k = p.size();
  std::vector<std::size_t> counts(k);
  std::vector<double> frac(k);
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const double quota = static_cast<double>(n) * p[i];
    counts[i] = static_cast<std::size_t>(std::floor(quota));
    frac[i] = quota - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
  // floor() can overshoot by rounding only in pathological cases; clamp.
  while (assigned > n) {
    auto it = std::max_element(counts.begin(), counts.end());
    --*it;
    --assigned;
  }
  for (std::size_t i = 0; assigned < n; i = (i + 1) % k) {
    ++counts[order[i]];
    ++assigned;
  }
  return counts;
}

}  // namespace

Partition dirichlet_partition(const LabeledDataset& ds, int num_clients, double beta,
                              std::uint64_t seed) {
  if (num_clients < 1) throw std::invalid_argument("dirichlet_partition: need at least 1 client");
  if (!(beta > 0.0)) throw std::invalid_argument("dirichlet_partition: beta must be > 0");

  std::vector<std::vector<std::size_t>> by_class(ds.num_classes);
  for (std::size_t i = 0; i < ds.labels.size(); ++i) by_class[ds.labels[i]].push_back(i);

  Rng rng(seed);
  Partition part;
  part.clients.resize(num_clients);
  for (auto& members : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    const auto p = sample_dirichlet(num_clients, beta, rng);
    const auto counts = largest_remainder(members.size(), p);
    std::size_t offset = 0;
    for (int k = 0; k < num_clients; ++k) {
      auto& dst = part.clients[k];
      dst.insert(dst.end(), members.begin() + offset, members.begin() + offset + counts[k]);
      offset += counts[k];
    }
  }
  for (auto& idx : part.clients) std::sort(idx.begin(), idx.end());
  return part;
}

std::vector<std::size_t> class_histogram(const LabeledDataset& ds,
                                         std::optional<std::span<const std::size_t>> subset) {
  std::vector<std::size_t> hist(ds.num_classes, 0);
  if (!subset) {
    for (int y : ds.labels) ++hist[y];
    return hist;
  }
  for (std::size_t i : *subset) {
    if (i >= ds.labels.size())
      throw std::out_of_range("class_histogram: index " + std::to_string(i) + " out of range");
    ++hist[ds.labels[i]];
  }
  return hist;
}

}  // namespace fednh
