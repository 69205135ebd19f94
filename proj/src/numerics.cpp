#include "tarpro/numerics.hpp"

#include <cmath>
#include <cstring>
#include <type_traits>

namespace tarpro {

bool all_finite(const Tensor2& t) { return t.allFinite(); }

void require_finite(const Tensor2& t, const std::string& what) {
  if (!t.allFinite()) throw NumericError("non-finite values in " + what);
}

Activation Activation::leaky_relu(double slope) {
  if (!(slope > 0.0 && slope < 1.0)) throw ShapeError("leaky_relu slope must lie in (0,1)");
  return {Kind::kLeakyRelu, slope};
}

std::string to_string(const Activation& a) {
  switch (a.kind) {
    case Activation::Kind::kRelu:
      return "relu";
    case Activation::Kind::kLeakyRelu:
      return "leaky_relu(" + std::to_string(a.slope) + ")";
    case Activation::Kind::kIdentity:
      return "identity";
  }
  return "?";
}

namespace {

void apply_activation(const Activation& act, Tensor2& x) {
  switch (act.kind) {
    case Activation::Kind::kRelu:
      x = x.cwiseMax(0.0);
      break;
    case Activation::Kind::kLeakyRelu: {
      const double s = act.slope;
      x = x.unaryExpr([s](double v) { return v > 0.0 ? v : s * v; });
      break;
    }
    case Activation::Kind::kIdentity:
      break;
  }
}

// upstream * act'(pre), in place on upstream.
void activation_backward(const Activation& act, const Tensor2& pre, Tensor2& grad) {
  switch (act.kind) {
    case Activation::Kind::kRelu:
      grad = (pre.array() > 0.0).select(grad, 0.0);
      break;
    case Activation::Kind::kLeakyRelu:
      grad = (pre.array() > 0.0).select(grad, act.slope * grad);
      break;
    case Activation::Kind::kIdentity:
      break;
  }
}

}  // namespace

void MlpGrads::scale(double s) {
  for (auto& w : weight) w *= s;
  for (auto& b : bias) b *= s;
}

void MlpGrads::add(const MlpGrads& other) {
  if (other.weight.size() != weight.size()) throw ShapeError("gradient layouts differ");
  for (std::size_t i = 0; i < weight.size(); ++i) {
    weight[i] += other.weight[i];
    bias[i] += other.bias[i];
  }
}

bool MlpGrads::finite() const {
  for (std::size_t i = 0; i < weight.size(); ++i) {
    if (!weight[i].allFinite() || !bias[i].allFinite()) return false;
  }
  return true;
}

Mlp::Mlp(std::vector<Layer> layers) : layers_(std::move(layers)) { validate(); }

void Mlp::validate() const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.bias.rows() != 1 || l.bias.cols() != l.weight.cols()) {
      throw ShapeError("layer " + std::to_string(i) + ": bias must be 1x" +
                       std::to_string(l.weight.cols()));
    }
    if (i > 0 && layers_[i - 1].out_dim() != l.in_dim()) {
      throw ShapeError("layer " + std::to_string(i) + ": input dim " + std::to_string(l.in_dim()) +
                       " does not match previous output dim " +
                       std::to_string(layers_[i - 1].out_dim()));
    }
    if (l.activation.kind == Activation::Kind::kLeakyRelu &&
        !(l.activation.slope > 0.0 && l.activation.slope < 1.0)) {
      throw ShapeError("layer " + std::to_string(i) + ": leaky_relu slope outside (0,1)");
    }
  }
}

Mlp Mlp::init(std::span<const std::size_t> dims, Activation hidden_act, Activation output_act,
              Rng& rng) {
  if (dims.size() < 2) throw ShapeError("an MLP needs at least input and output dims");
  std::vector<Layer> layers;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const auto fan_in = dims[i];
    const auto fan_out = dims[i + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> uni(-limit, limit);
    Layer layer;
    layer.weight.resize(static_cast<Eigen::Index>(fan_in), static_cast<Eigen::Index>(fan_out));
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = uni(rng);
    layer.bias = Tensor2::Zero(1, static_cast<Eigen::Index>(fan_out));
    layer.activation = (i + 2 == dims.size()) ? output_act : hidden_act;
    layers.push_back(std::move(layer));
  }
  return Mlp(std::move(layers));
}

std::size_t Mlp::in_dim() const { return layers_.empty() ? 0 : layers_.front().in_dim(); }
std::size_t Mlp::out_dim() const { return layers_.empty() ? 0 : layers_.back().out_dim(); }

std::size_t Mlp::num_parameters() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

Tensor2 Mlp::forward(const Tensor2& input) const {
  if (layers_.empty()) throw ShapeError("forward on an empty MLP");
  if (static_cast<std::size_t>(input.cols()) != in_dim()) {
    throw ShapeError("forward: input has " + std::to_string(input.cols()) +
                     " columns, network expects " + std::to_string(in_dim()));
  }
  Tensor2 x = input;
  for (const auto& l : layers_) {
    Tensor2 pre = x * l.weight;
    pre.rowwise() += l.bias.row(0);
    apply_activation(l.activation, pre);
    x = std::move(pre);
  }
  return x;
}

ForwardCache Mlp::forward_cached(const Tensor2& input) const {
  if (layers_.empty()) throw ShapeError("forward on an empty MLP");
  if (static_cast<std::size_t>(input.cols()) != in_dim()) {
    throw ShapeError("forward: input has " + std::to_string(input.cols()) +
                     " columns, network expects " + std::to_string(in_dim()));
  }
  ForwardCache cache;
  cache.inputs.reserve(layers_.size());
  cache.pre.reserve(layers_.size());
  Tensor2 x = input;
  for (const auto& l : layers_) {
    Tensor2 pre = x * l.weight;
    pre.rowwise() += l.bias.row(0);
    cache.inputs.push_back(std::move(x));
    x = pre;
    apply_activation(l.activation, x);
    cache.pre.push_back(std::move(pre));
  }
  cache.output = std::move(x);
  return cache;
}

MlpGrads Mlp::backward(const ForwardCache& cache, const Tensor2& upstream,
                       Tensor2* input_grad) const {
  if (cache.pre.size() != layers_.size()) throw ShapeError("backward: cache from another network");
  if (upstream.rows() != cache.output.rows() || upstream.cols() != cache.output.cols()) {
    throw ShapeError("backward: upstream gradient shape does not match output");
  }
  MlpGrads g;
  g.weight.resize(layers_.size());
  g.bias.resize(layers_.size());
  Tensor2 grad = upstream;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const auto& l = layers_[k];
    activation_backward(l.activation, cache.pre[k], grad);
    g.weight[k].noalias() = cache.inputs[k].transpose() * grad;
    g.bias[k] = grad.colwise().sum();
    if (k > 0 || input_grad != nullptr) {
      Tensor2 next = grad * l.weight.transpose();
      grad = std::move(next);
    }
  }
  if (input_grad != nullptr) *input_grad = std::move(grad);
  return g;
}

Tensor2 Mlp::input_gradient(const ForwardCache& cache, const Tensor2& upstream) const {
  if (cache.pre.size() != layers_.size()) throw ShapeError("backward: cache from another network");
  if (upstream.rows() != cache.output.rows() || upstream.cols() != cache.output.cols()) {
    throw ShapeError("backward: upstream gradient shape does not match output");
  }
  Tensor2 grad = upstream;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    activation_backward(layers_[k].activation, cache.pre[k], grad);
    Tensor2 next = grad * layers_[k].weight.transpose();
    grad = std::move(next);
  }
  return grad;
}

MlpGrads Mlp::zero_grads() const {
  MlpGrads g;
  for (const auto& l : layers_) {
    g.weight.push_back(Tensor2::Zero(l.weight.rows(), l.weight.cols()));
    g.bias.push_back(Tensor2::Zero(1, l.bias.cols()));
  }
  return g;
}

std::vector<Tensor2*> Mlp::parameters() {
  std::vector<Tensor2*> out;
  for (auto& l : layers_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

std::vector<const Tensor2*> Mlp::parameters() const {
  std::vector<const Tensor2*> out;
  for (const auto& l : layers_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

std::uint64_t Mlp::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto* t : parameters()) {
    feed(t->data(), static_cast<std::size_t>(t->size()) * sizeof(double));
  }
  for (const auto& l : layers_) {
    const auto kind = static_cast<int>(l.activation.kind);
    feed(&kind, sizeof kind);
    feed(&l.activation.slope, sizeof l.activation.slope);
  }
  return h;
}

bool Mlp::operator==(const Mlp& other) const {
  if (layers_.size() != other.layers_.size()) return false;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& a = layers_[i];
    const auto& b = other.layers_[i];
    if (!(a.activation == b.activation)) return false;
    if (a.weight.rows() != b.weight.rows() || a.weight.cols() != b.weight.cols()) return false;
    if (a.weight != b.weight || a.bias != b.bias) return false;
  }
  return true;
}

std::vector<const Tensor2*> grad_pointers(const MlpGrads& g) {
  std::vector<const Tensor2*> out;
  for (std::size_t i = 0; i < g.weight.size(); ++i) {
    out.push_back(&g.weight[i]);
    out.push_back(&g.bias[i]);
  }
  return out;
}

Optimizer::Optimizer(Kind kind) : kind_(std::move(kind)) {
  if (learning_rate() <= 0.0) throw NumericError("learning rate must be positive");
}

double Optimizer::learning_rate() const {
  return std::visit([](const auto& k) { return k.lr; }, kind_);
}

void Optimizer::step(std::span<Tensor2* const> params, std::span<const Tensor2* const> grads) {
  if (params.size() != grads.size()) throw ShapeError("optimizer: params/grads count differ");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->rows() != grads[i]->rows() || params[i]->cols() != grads[i]->cols()) {
      throw ShapeError("optimizer: gradient " + std::to_string(i) + " shape mismatch");
    }
    if (!grads[i]->allFinite()) throw NumericError("optimizer: non-finite gradient");
  }
  if (m_.empty()) {
    for (const auto* p : params) {
      m_.push_back(Tensor2::Zero(p->rows(), p->cols()));
      v_.push_back(Tensor2::Zero(p->rows(), p->cols()));
    }
  } else if (m_.size() != params.size()) {
    throw ShapeError("optimizer: parameter count changed between steps");
  }
  ++t_;
  std::visit(
      [&](const auto& cfg) {
        using T = std::decay_t<decltype(cfg)>;
        for (std::size_t i = 0; i < params.size(); ++i) {
          auto& p = *params[i];
          const auto& g = *grads[i];
          if (m_[i].rows() != p.rows() || m_[i].cols() != p.cols()) {
            throw ShapeError("optimizer: accumulator shape mismatch");
          }
          if constexpr (std::is_same_v<T, SgdConfig>) {
            if (cfg.momentum == 0.0) {
              p -= cfg.lr * g;
            } else {
              m_[i] = cfg.momentum * m_[i] + g;
              p -= cfg.lr * m_[i];
            }
          } else {
            m_[i] = cfg.beta1 * m_[i] + (1.0 - cfg.beta1) * g;
            v_[i] = cfg.beta2 * v_[i] + (1.0 - cfg.beta2) * g.cwiseProduct(g);
            const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t_));
            const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t_));
            const double eps = cfg.eps;
            p.array() -= cfg.lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + eps);
          }
        }
      },
      kind_);
}

void Optimizer::step(Mlp& net, const MlpGrads& grads) {
  auto params = net.parameters();
  auto gp = grad_pointers(grads);
  step(params, gp);
}

double grad_check(const GradCheckProblem& problem, double h) {
  const auto analytic = problem.gradient();
  if (analytic.size() != problem.params.size()) throw ShapeError("grad_check: layout mismatch");
  double worst = 0.0;
  for (std::size_t k = 0; k < problem.params.size(); ++k) {
    Tensor2& p = *problem.params[k];
    if (analytic[k].rows() != p.rows() || analytic[k].cols() != p.cols()) {
      throw ShapeError("grad_check: gradient " + std::to_string(k) + " shape mismatch");
    }
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      const double saved = p.data()[i];
      p.data()[i] = saved + h;
      const double up = problem.loss();
      p.data()[i] = saved - h;
      const double down = problem.loss();
      p.data()[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NumericError("grad_check: non-finite loss");
      }
      const double numeric = (up - down) / (2.0 * h);
      const double err = std::abs(analytic[k].data()[i] - numeric) / std::max(1.0, std::abs(numeric));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

double softmax_cross_entropy(const Tensor2& logits, std::span<const int> labels, Tensor2* grad) {
  const auto n = logits.rows();
  if (static_cast<std::size_t>(n) != labels.size()) throw ShapeError("cross-entropy: label count");
  if (n == 0) throw ShapeError("cross-entropy on an empty batch");
  double total = 0.0;
  if (grad != nullptr) grad->resize(n, logits.cols());
  for (Eigen::Index r = 0; r < n; ++r) {
    const int y = labels[static_cast<std::size_t>(r)];
    if (y < 0 || y >= logits.cols()) throw ShapeError("cross-entropy: label out of range");
    const double mx = logits.row(r).maxCoeff();
    RowVector e = (logits.row(r).array() - mx).exp().matrix();
    const double z = e.sum();
    total += std::log(z) + mx - logits(r, y);
    if (grad != nullptr) {
      grad->row(r) = e / z;
      (*grad)(r, y) -= 1.0;
    }
  }
  if (grad != nullptr) *grad /= static_cast<double>(n);
  return total / static_cast<double>(n);
}

Tensor2 normalize_rows(const Tensor2& x, Tensor2* norms) {
  Tensor2 out = x;
  Tensor2 nrm(x.rows(), 1);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double n = x.row(r).norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
      throw NumericError("row " + std::to_string(r) + " has zero or non-finite norm");
    }
    nrm(r, 0) = n;
    out.row(r) /= n;
  }
  if (norms != nullptr) *norms = std::move(nrm);
  return out;
}

Tensor2 normalize_rows_backward(const Tensor2& normalized, const Tensor2& norms,
                                const Tensor2& upstream) {
  Tensor2 out(upstream.rows(), upstream.cols());
  for (Eigen::Index r = 0; r < upstream.rows(); ++r) {
    const double d = normalized.row(r).dot(upstream.row(r));
    out.row(r) = (upstream.row(r) - d * normalized.row(r)) / norms(r, 0);
  }
  return out;
}

}  // namespace tarpro
