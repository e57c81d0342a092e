#include "fednh/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fednh/rng.hpp"

namespace fednh {

namespace {

void check_architecture(const Architecture& arch) {
  if (arch.widths.size() < 2) throw std::invalid_argument("architecture needs at least 2 widths");
  for (int w : arch.widths)
    if (w < 1) throw std::invalid_argument("architecture widths must be positive");
}

struct ForwardCache {
  std::vector<Eigen::MatrixXd> pre;   // Z_l per layer
  std::vector<Eigen::MatrixXd> post;  // A_l per layer (post.back() = raw latent)
  Eigen::MatrixXd latent;             // normalized (or raw) output, d x B
  Eigen::VectorXd norms;              // pre-normalization norms
};

ForwardCache forward_cached(const BodyParams& body, const Eigen::MatrixXd& inputs) {
  ForwardCache cache;
  const std::size_t n_layers = body.layers.size();
  cache.pre.reserve(n_layers);
  cache.post.reserve(n_layers);
  const Eigen::MatrixXd* prev = &inputs;
  for (std::size_t l = 0; l < n_layers; ++l) {
    const auto& layer = body.layers[l];
    Eigen::MatrixXd z(layer.weight.rows(), prev->cols());
    z.noalias() = layer.weight * *prev;
    z.colwise() += layer.bias;
    cache.pre.push_back(std::move(z));
    if (l + 1 < n_layers)
      cache.post.push_back(cache.pre.back().cwiseMax(0.0));
    else
      cache.post.push_back(cache.pre.back());
    prev = &cache.post.back();
  }
  const Eigen::MatrixXd& raw = cache.post.back();
  if (body.normalize_output) {
    cache.norms = raw.colwise().norm().transpose();
    cache.latent = raw;
    for (Eigen::Index j = 0; j < raw.cols(); ++j) cache.latent.col(j) /= norm_denominator(cache.norms(j));
  } else {
    cache.latent = raw;
  }
  return cache;
}

// Softmax probabilities and per-column loss; returns the summed loss.
double softmax_cross_entropy(const Eigen::MatrixXd& logit, const std::vector<int>& labels,
                             Eigen::MatrixXd& probs) {
  probs.resize(logit.rows(), logit.cols());
  double total = 0.0;
  for (Eigen::Index j = 0; j < logit.cols(); ++j) {
    const auto col = logit.col(j);
    const double m = col.maxCoeff();
    probs.col(j) = (col.array() - m).exp().matrix();
    probs.col(j) /= probs.col(j).sum();
    total += cross_entropy(col, labels[j]);
  }
  return total;
}

}  // namespace

BodyParams BodyParams::init(const Architecture& arch, std::uint64_t seed) {
  check_architecture(arch);
  Rng rng(seed);
  BodyParams body;
  body.normalize_output = arch.normalize_output;
  for (std::size_t l = 0; l + 1 < arch.widths.size(); ++l) {
    const int in = arch.widths[l];
    const int out = arch.widths[l + 1];
    const double w_bound = 1.0 / std::sqrt(static_cast<double>(in));
    const double b_bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> uw(-w_bound, w_bound);
    std::uniform_real_distribution<double> ub(-b_bound, b_bound);
    DenseLayer layer{Eigen::MatrixXd(out, in), Eigen::VectorXd(out)};
    for (int i = 0; i < out; ++i)
      for (int j = 0; j < in; ++j) layer.weight(i, j) = uw(rng);
    for (int i = 0; i < out; ++i) layer.bias(i) = ub(rng);
    body.layers.push_back(std::move(layer));
  }
  return body;
}

BodyParams BodyParams::zeros_like(const BodyParams& like) {
  BodyParams out;
  out.normalize_output = like.normalize_output;
  for (const auto& layer : like.layers)
    out.layers.push_back({Eigen::MatrixXd::Zero(layer.weight.rows(), layer.weight.cols()),
                          Eigen::VectorXd::Zero(layer.bias.size())});
  return out;
}

Architecture BodyParams::architecture() const {
  Architecture arch;
  arch.normalize_output = normalize_output;
  arch.widths.push_back(input_dim());
  for (const auto& layer : layers) arch.widths.push_back(static_cast<int>(layer.weight.rows()));
  return arch;
}

std::size_t BodyParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers) n += layer.weight.size() + layer.bias.size();
  return n;
}

bool BodyParams::all_finite() const {
  return std::all_of(layers.begin(), layers.end(), [](const DenseLayer& l) {
    return l.weight.allFinite() && l.bias.allFinite();
  });
}

bool BodyParams::same_shape(const BodyParams& other) const {
  if (layers.size() != other.layers.size() || normalize_output != other.normalize_output)
    return false;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].weight.rows() != other.layers[l].weight.rows() ||
        layers[l].weight.cols() != other.layers[l].weight.cols() ||
        layers[l].bias.size() != other.layers[l].bias.size())
      return false;
  }
  return true;
}

bool operator==(const BodyParams& a, const BodyParams& b) {
  if (!a.same_shape(b)) return false;
  for (std::size_t l = 0; l < a.layers.size(); ++l)
    if (a.layers[l].weight != b.layers[l].weight || a.layers[l].bias != b.layers[l].bias)
      return false;
  return true;
}

HeadState HeadState::cosine(const PrototypeMatrix& w, double scale, bool trainable) {
  if (!(scale > 0.0)) throw std::invalid_argument("head scale must be positive");
  return HeadState{HeadKind::Cosine, w.rows(), scale, trainable};
}

HeadState HeadState::free(Eigen::MatrixXd w) {
  return HeadState{HeadKind::Free, std::move(w), 1.0, false};
}

HeadState HeadState::free_init(int classes, int dim, std::uint64_t seed) {
  Rng rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  std::uniform_real_distribution<double> u(-bound, bound);
  Eigen::MatrixXd w(classes, dim);
  for (int i = 0; i < classes; ++i)
    for (int j = 0; j < dim; ++j) w(i, j) = u(rng);
  return free(std::move(w));
}

bool operator==(const HeadState& a, const HeadState& b) {
  return a.kind == b.kind && a.scale == b.scale && a.scale_trainable == b.scale_trainable &&
         a.weights.rows() == b.weights.rows() && a.weights.cols() == b.weights.cols() &&
         a.weights == b.weights;
}

Batch make_batch(const LabeledDataset& ds, std::span<const std::size_t> indices) {
  Batch batch;
  batch.inputs.resize(ds.points.cols(), static_cast<Eigen::Index>(indices.size()));
  batch.labels.reserve(indices.size());
  for (std::size_t j = 0; j < indices.size(); ++j) {
    batch.inputs.col(static_cast<Eigen::Index>(j)) = ds.points.row(indices[j]).transpose();
    batch.labels.push_back(ds.labels[indices[j]]);
  }
  return batch;
}

Eigen::MatrixXd input_matrix(const LabeledDataset& ds) { return ds.points.transpose(); }

BodyOutput forward_body(const BodyParams& body, const Eigen::VectorXd& x) {
  if (x.size() != body.input_dim())
    throw std::invalid_argument("forward_body: input has dimension " + std::to_string(x.size()) +
                                ", expected " + std::to_string(body.input_dim()));
  const Eigen::MatrixXd in = x;
  ForwardCache cache = forward_cached(body, in);
  BodyOutput out;
  out.representation = cache.latent.col(0);
  out.degenerate = body.normalize_output && cache.norms(0) < kNormEpsilon;
  return out;
}

Eigen::MatrixXd embed(const BodyParams& body, const Eigen::MatrixXd& inputs) {
  return forward_cached(body, inputs).latent;
}

Eigen::VectorXd logits(const HeadState& head, const Eigen::VectorXd& r) {
  Eigen::VectorXd out = head.weights * r;
  if (head.kind == HeadKind::Cosine) out *= head.scale;
  return out;
}

Eigen::MatrixXd logits(const HeadState& head, const Eigen::MatrixXd& reps) {
  Eigen::MatrixXd out(head.weights.rows(), reps.cols());
  out.noalias() = head.weights * reps;
  if (head.kind == HeadKind::Cosine) out *= head.scale;
  return out;
}

std::vector<int> predict(const BodyParams& body, const HeadState& head,
                         const Eigen::MatrixXd& inputs) {
  const Eigen::MatrixXd lg = logits(head, embed(body, inputs));
  std::vector<int> out(lg.cols());
  for (Eigen::Index j = 0; j < lg.cols(); ++j) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < lg.rows(); ++c)
      if (lg(c, j) > lg(best, j)) best = c;
    out[j] = static_cast<int>(best);
  }
  return out;
}

double cross_entropy(const Eigen::VectorXd& logit, int label) {
  const double m = logit.maxCoeff();
  const double ly = logit(label);
  double others = 0.0;
  for (Eigen::Index c = 0; c < logit.size(); ++c)
    if (c != label) others += std::exp(logit(c) - m);
  if (ly == m) return std::log1p(others);
  return std::log(others + std::exp(ly - m)) - (ly - m);
}

Gradients Gradients::zeros_like(const BodyParams& body, const HeadState& head) {
  Gradients g;
  g.body = BodyParams::zeros_like(body);
  if (head.trains_scale()) g.scale = 0.0;
  if (head.trains_weights()) g.head = Eigen::MatrixXd::Zero(head.weights.rows(), head.weights.cols());
  return g;
}

LossAndGrads loss_and_grads(const BodyParams& body, const HeadState& head, const Batch& batch) {
  if (batch.size() == 0) throw std::invalid_argument("loss_and_grads: empty batch");
  const auto n = static_cast<double>(batch.size());
  const std::size_t n_layers = body.layers.size();

  ForwardCache cache = forward_cached(body, batch.inputs);
  const Eigen::MatrixXd lg = logits(head, cache.latent);
  Eigen::MatrixXd probs;
  const double loss = softmax_cross_entropy(lg, batch.labels, probs) / n;

  // dL/dlogits
  Eigen::MatrixXd g = probs;
  for (std::size_t j = 0; j < batch.size(); ++j) g(batch.labels[j], static_cast<Eigen::Index>(j)) -= 1.0;
  g /= n;

  LossAndGrads out;
  out.loss = loss;
  out.grads.body = BodyParams::zeros_like(body);

  Eigen::MatrixXd d_latent(head.weights.cols(), g.cols());
  d_latent.noalias() = head.weights.transpose() * g;
  if (head.kind == HeadKind::Cosine) {
    d_latent *= head.scale;
    if (head.scale_trainable) {
      // logits = s * (W r), so dL/ds = sum(g .* W r)
      out.grads.scale = (g.array() * (lg.array() / head.scale)).sum();
    }
  } else {
    Eigen::MatrixXd dw(head.weights.rows(), head.weights.cols());
    dw.noalias() = g * cache.latent.transpose();
    out.grads.head = std::move(dw);
  }

  // Back through r = z / (|z| + eps).
  Eigen::MatrixXd dz;
  if (body.normalize_output) {
    const Eigen::MatrixXd& raw = cache.post.back();
    dz.resize(raw.rows(), raw.cols());
    for (Eigen::Index j = 0; j < raw.cols(); ++j) {
      const double nrm = cache.norms(j);
      const double denom = norm_denominator(nrm);
      dz.col(j) = d_latent.col(j) / denom;
      if (nrm > 0.0) {
        dz.col(j) -= raw.col(j) * (raw.col(j).dot(d_latent.col(j)) / (nrm * denom * denom));
      }
      if (nrm < kNormEpsilon) ++out.degenerate_samples;
    }
  } else {
    dz = std::move(d_latent);
  }

  for (std::size_t l = n_layers; l-- > 0;) {
    const Eigen::MatrixXd& input = l == 0 ? batch.inputs : cache.post[l - 1];
    auto& grad_layer = out.grads.body.layers[l];
    grad_layer.weight.noalias() = dz * input.transpose();
    grad_layer.bias = dz.rowwise().sum();
    if (l == 0) break;
    Eigen::MatrixXd da(body.layers[l].weight.cols(), dz.cols());
    da.noalias() = body.layers[l].weight.transpose() * dz;
    dz = (cache.pre[l - 1].array() > 0.0).select(da, 0.0);
  }

  bool finite = std::isfinite(loss) && out.grads.body.all_finite();
  if (out.grads.scale) finite = finite && std::isfinite(*out.grads.scale);
  if (out.grads.head) finite = finite && out.grads.head->allFinite();
  if (!finite)
    throw DivergenceError("non-finite loss or gradient (loss " + std::to_string(loss) +
                          ", batch of " + std::to_string(batch.size()) + ")");
  return out;
}

double batch_loss(const BodyParams& body, const HeadState& head, const Batch& batch) {
  const Eigen::MatrixXd lg = logits(head, embed(body, batch.inputs));
  double total = 0.0;
  for (Eigen::Index j = 0; j < lg.cols(); ++j) total += cross_entropy(lg.col(j), batch.labels[j]);
  return total / static_cast<double>(batch.size());
}

OptimizerState OptimizerState::create(const BodyParams& body, const HeadState& head, double lr,
                                      double momentum, double weight_decay) {
  if (!(lr >= 0.0)) throw std::invalid_argument("learning rate must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must be in [0, 1)");
  return OptimizerState{lr, momentum, weight_decay, Gradients::zeros_like(body, head)};
}

void sgd_step(BodyParams& body, HeadState& head, const Gradients& grads, OptimizerState& opt) {
  if (!body.same_shape(grads.body) || !body.same_shape(opt.velocity.body))
    throw std::invalid_argument("sgd_step: gradient shape mismatch");
  for (std::size_t l = 0; l < body.layers.size(); ++l) {
    auto& p = body.layers[l];
    auto& v = opt.velocity.body.layers[l];
    const auto& g = grads.body.layers[l];
    v.weight = opt.momentum * v.weight + (g.weight + opt.weight_decay * p.weight);
    p.weight -= opt.lr * v.weight;
    v.bias = opt.momentum * v.bias + (g.bias + opt.weight_decay * p.bias);
    p.bias -= opt.lr * v.bias;
  }
  if (head.trains_scale() && grads.scale) {
    double& v = *opt.velocity.scale;
    v = opt.momentum * v + (*grads.scale + opt.weight_decay * head.scale);
    head.scale -= opt.lr * v;
  }
  if (head.trains_weights() && grads.head) {
    Eigen::MatrixXd& v = *opt.velocity.head;
    v = opt.momentum * v + (*grads.head + opt.weight_decay * head.weights);
    head.weights -= opt.lr * v;
  }
}

double finite_diff_check(const BodyParams& body, const HeadState& head, const Batch& batch,
                         double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("finite_diff_check: eps must be > 0");
  const LossAndGrads analytic = loss_and_grads(body, head, batch);
  double worst = 0.0;
  auto compare = [&](double a, double numeric) {
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
    worst = std::max(worst, std::abs(a - numeric) / denom);
  };

  BodyParams probe = body;
  HeadState probe_head = head;
  for (std::size_t l = 0; l < body.layers.size(); ++l) {
    auto perturb = [&](double& coord, double analytic_value) {
      const double saved = coord;
      coord = saved + eps;
      const double up = batch_loss(probe, probe_head, batch);
      coord = saved - eps;
      const double down = batch_loss(probe, probe_head, batch);
      coord = saved;
      compare(analytic_value, (up - down) / (2.0 * eps));
    };
    auto& layer = probe.layers[l];
    const auto& grad = analytic.grads.body.layers[l];
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i)
      perturb(layer.weight.data()[i], grad.weight.data()[i]);
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i)
      perturb(layer.bias.data()[i], grad.bias.data()[i]);
  }
  if (analytic.grads.scale) {
    const double saved = probe_head.scale;
    probe_head.scale = saved + eps;
    const double up = batch_loss(probe, probe_head, batch);
    probe_head.scale = saved - eps;
    const double down = batch_loss(probe, probe_head, batch);
    probe_head.scale = saved;
    compare(*analytic.grads.scale, (up - down) / (2.0 * eps));
  }
  if (analytic.grads.head) {
    for (Eigen::Index i = 0; i < probe_head.weights.size(); ++i) {
      double& coord = probe_head.weights.data()[i];
      const double saved = coord;
      coord = saved + eps;
      const double up = batch_loss(probe, probe_head, batch);
      coord = saved - eps;
      const double down = batch_loss(probe, probe_head, batch);
      coord = saved;
      compare(analytic.grads.head->data()[i], (up - down) / (2.0 * eps));
    }
  }
  return worst;
}

}  // namespace fednh
