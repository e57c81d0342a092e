#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fednh/datagen.hpp"
#include "fednh/hypersphere.hpp"

namespace fednh {

/// Layer widths from input to latent, e.g. {2, 64, 64, 64, d}. ReLU follows
/// every linear map except the last one.
struct Architecture {
  std::vector<int> widths;
  // L2-normalize the latent output (FedNH body). The free-head baselines use
  // the raw linear output instead.
  bool normalize_output = true;
};

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

struct BodyParams {
  std::vector<DenseLayer> layers;
  bool normalize_output = true;

  /// Fan-in scaled uniform init (Kaiming-uniform with a = sqrt(5), the
  /// PyTorch Linear default): weights and biases uniform in +-1/sqrt(fan_in).
  static BodyParams init(const Architecture& arch, std::uint64_t seed);
  static BodyParams zeros_like(const BodyParams& like);

  int input_dim() const { return static_cast<int>(layers.front().weight.cols()); }
  int latent_dim() const { return static_cast<int>(layers.back().weight.rows()); }
  Architecture architecture() const;
  std::size_t parameter_count() const;
  bool all_finite() const;
  bool same_shape(const BodyParams& other) const;

  friend bool operator==(const BodyParams& a, const BodyParams& b);
};

enum class HeadKind {
  Cosine,  // logits s * <W_c, r>, W fixed during local training
  Free,    // logits <W_c, h>, W trained by gradient
};

struct HeadState {
  HeadKind kind = HeadKind::Cosine;
  Eigen::MatrixXd weights;  // C x d
  double scale = 1.0;       // used by Cosine only
  bool scale_trainable = false;

  static HeadState cosine(const PrototypeMatrix& w, double scale, bool trainable);
  static HeadState free(Eigen::MatrixXd w);
  /// PyTorch-style default linear init: uniform in +-1/sqrt(d).
  static HeadState free_init(int classes, int dim, std::uint64_t seed);

  int classes() const { return static_cast<int>(weights.rows()); }
  int dim() const { return static_cast<int>(weights.cols()); }
  bool trains_weights() const { return kind == HeadKind::Free; }
  bool trains_scale() const { return kind == HeadKind::Cosine && scale_trainable; }

  friend bool operator==(const HeadState& a, const HeadState& b);
};

/// Column-major mini-batch: inputs is p x B.
struct Batch {
  Eigen::MatrixXd inputs;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

Batch make_batch(const LabeledDataset& ds, std::span<const std::size_t> indices);
/// All samples of a dataset as a p x N matrix.
Eigen::MatrixXd input_matrix(const LabeledDataset& ds);

constexpr double kNormEpsilon = 1e-12;

/// Divisor used by the normalization layer: the norm itself, or norm + eps
/// when the norm falls below kNormEpsilon.
constexpr double norm_denominator(double norm) {
  return norm < kNormEpsilon ? norm + kNormEpsilon : norm;
}

struct BodyOutput {
  Eigen::VectorXd representation;
  bool degenerate = false;  // pre-normalization norm below kNormEpsilon
};

BodyOutput forward_body(const BodyParams& body, const Eigen::VectorXd& x);
/// Batched forward pass, d x N.
Eigen::MatrixXd embed(const BodyParams& body, const Eigen::MatrixXd& inputs);

Eigen::VectorXd logits(const HeadState& head, const Eigen::VectorXd& r);
Eigen::MatrixXd logits(const HeadState& head, const Eigen::MatrixXd& reps);

/// Argmax class per column, lowest class id on ties.
std::vector<int> predict(const BodyParams& body, const HeadState& head,
                         const Eigen::MatrixXd& inputs);

struct Gradients {
  BodyParams body;
  std::optional<double> scale;
  std::optional<Eigen::MatrixXd> head;

  static Gradients zeros_like(const BodyParams& body, const HeadState& head);
};

struct LossAndGrads {
  double loss = 0.0;
  Gradients grads;
  int degenerate_samples = 0;
};

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mean cross-entropy of the head's logits over the batch with exact
/// gradients, including the normalization layer's Jacobian. The head weights
/// are differentiated only for HeadKind::Free. Throws DivergenceError on a
/// non-finite loss or gradient.
LossAndGrads loss_and_grads(const BodyParams& body, const HeadState& head, const Batch& batch);
double batch_loss(const BodyParams& body, const HeadState& head, const Batch& batch);

/// Cross-entropy of one logit vector against a label.
double cross_entropy(const Eigen::VectorXd& logit, int label);

struct OptimizerState {
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0;
  Gradients velocity;

  static OptimizerState create(const BodyParams& body, const HeadState& head, double lr,
                               double momentum, double weight_decay);
};

/// Per tensor: g = grad + wd * p; v = momentum * v + g; p -= lr * v.
/// Prototype weights of a cosine head and a fixed scale are never touched.
void sgd_step(BodyParams& body, HeadState& head, const Gradients& grads, OptimizerState& opt);

/// Largest relative error between loss_and_grads and central differences
/// over every trainable coordinate; |a - n| / max(|a|, |n|, 1e-6).
double finite_diff_check(const BodyParams& body, const HeadState& head, const Batch& batch,
                         double eps = 1e-5);

}  // namespace fednh
