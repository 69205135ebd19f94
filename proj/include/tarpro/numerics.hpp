#pragma once

// Dense tensors, MLP chains with exact reverse-mode gradients, first-order
// optimizers and a central-difference gradient checker.

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "tarpro/errors.hpp"
#include "tarpro/rng.hpp"

namespace tarpro {

/// Row-major matrix of doubles. Rows are examples, columns are features.
using Tensor2 = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

bool all_finite(const Tensor2& t);
void require_finite(const Tensor2& t, const std::string& what);

struct Activation {
  enum class Kind { kRelu, kLeakyRelu, kIdentity };
  Kind kind = Kind::kIdentity;
  double slope = 0.2;  // only used by kLeakyRelu

  static Activation relu() { return {Kind::kRelu, 0.0}; }
  static Activation leaky_relu(double slope = 0.2);
  static Activation identity() { return {Kind::kIdentity, 0.0}; }

  bool operator==(const Activation&) const = default;
};

std::string to_string(const Activation& a);

struct Layer {
  Tensor2 weight;  // in x out
  Tensor2 bias;    // 1 x out
  Activation activation;

  std::size_t in_dim() const { return static_cast<std::size_t>(weight.rows()); }
  std::size_t out_dim() const { return static_cast<std::size_t>(weight.cols()); }
};

/// Gradients with the same layout as Mlp::layers.
struct MlpGrads {
  std::vector<Tensor2> weight;
  std::vector<Tensor2> bias;

  void scale(double s);
  void add(const MlpGrads& other);
  bool finite() const;
};

/// Activations saved by a forward pass, consumed by backward.
struct ForwardCache {
  std::vector<Tensor2> inputs;  // input to each layer
  std::vector<Tensor2> pre;     // pre-activation of each layer
  Tensor2 output;
};

class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<Layer> layers);

  /// Glorot-uniform weights, zero biases. `dims` has one more entry than the
  /// number of layers; the last layer uses `output_act`.
  static Mlp init(std::span<const std::size_t> dims, Activation hidden_act, Activation output_act,
                  Rng& rng);

  Tensor2 forward(const Tensor2& input) const;
  ForwardCache forward_cached(const Tensor2& input) const;

  /// Reverse-mode pass: `upstream` is dLoss/dOutput. Returns parameter
  /// gradients; writes dLoss/dInput to `input_grad` when non-null.
  MlpGrads backward(const ForwardCache& cache, const Tensor2& upstream,
                    Tensor2* input_grad = nullptr) const;

  /// dLoss/dInput only; skips the weight-gradient products.
  Tensor2 input_gradient(const ForwardCache& cache, const Tensor2& upstream) const;

  MlpGrads zero_grads() const;

  std::size_t in_dim() const;
  std::size_t out_dim() const;
  std::size_t num_layers() const { return layers_.size(); }
  std::size_t num_parameters() const;
  bool empty() const { return layers_.empty(); }

  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }

  /// Pointers to every weight/bias, in layer order (w0, b0, w1, b1, ...).
  std::vector<Tensor2*> parameters();
  std::vector<const Tensor2*> parameters() const;

  /// FNV-1a hash of all parameter bytes; used to prove immutability.
  std::uint64_t checksum() const;

  bool operator==(const Mlp& other) const;

 private:
  void validate() const;
  std::vector<Layer> layers_;
};

/// Grads laid out like Mlp::parameters().
std::vector<const Tensor2*> grad_pointers(const MlpGrads& g);

struct SgdConfig {
  double lr = 0.01;
  double momentum = 0.0;
};

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First-order optimizer holding per-parameter accumulators. Accumulators are
/// created on the first step and must keep the same shapes afterwards.
class Optimizer {
 public:
  using Kind = std::variant<SgdConfig, AdamConfig>;

  explicit Optimizer(Kind kind);

  void step(std::span<Tensor2* const> params, std::span<const Tensor2* const> grads);
  void step(Mlp& net, const MlpGrads& grads);

  const Kind& kind() const { return kind_; }
  double learning_rate() const;
  std::size_t steps_taken() const { return t_; }

 private:
  Kind kind_;
  std::vector<Tensor2> m_;
  std::vector<Tensor2> v_;
  std::size_t t_ = 0;
};

/// Loss and gradient of an objective with respect to a set of tensors.
struct GradCheckProblem {
  std::vector<Tensor2*> params;
  /// Evaluates the loss at the current parameter values.
  std::function<double()> loss;
  /// Analytic gradients at the current values, same layout as params.
  std::function<std::vector<Tensor2>()> gradient;
};

/// max over all parameter entries of |analytic - numeric| / max(1, |numeric|),
/// numeric by central differences. Parameters are restored on return.
double grad_check(const GradCheckProblem& problem, double h = 1e-6);

/// Softmax cross-entropy averaged over rows; writes dLoss/dLogits when asked.
double softmax_cross_entropy(const Tensor2& logits, std::span<const int> labels,
                             Tensor2* grad = nullptr);

/// Row-wise L2 normalization with its Jacobian-vector product for backward.
Tensor2 normalize_rows(const Tensor2& x, Tensor2* norms = nullptr);
Tensor2 normalize_rows_backward(const Tensor2& normalized, const Tensor2& norms,
                                const Tensor2& upstream);

}  // namespace tarpro
