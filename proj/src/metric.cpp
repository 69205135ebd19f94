#include "tarpro/metric.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "tarpro/parallel.hpp"

namespace tarpro {

namespace {

constexpr double kProbClamp = 1e-12;

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor2 gather_rows(const Tensor2& src, std::span<const std::size_t> idx) {
  Tensor2 out(static_cast<Eigen::Index>(idx.size()), src.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = src.row(static_cast<Eigen::Index>(idx[i]));
  }
  return out;
}

std::vector<int> gather(std::span<const int> src, std::span<const std::size_t> idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(src[i]);
  return out;
}

}  // namespace

FeatureBank FeatureBank::filter_domains(const std::vector<int>& keep) const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < domains.size(); ++i) {
    if (std::find(keep.begin(), keep.end(), domains[i]) != keep.end()) idx.push_back(i);
  }
  FeatureBank out;
  out.features = gather_rows(features, idx);
  out.labels = gather(labels, idx);
  out.domains = gather(domains, idx);
  out.num_classes = num_classes;
  return out;
}

double cosine_sim(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("cosine_sim: dimension mismatch");
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (!(na > 0.0) || !(nb > 0.0)) throw NumericError("cosine_sim: zero-norm input");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double cosine_sim(const RowVector& a, const RowVector& b) {
  return cosine_sim(std::span<const double>(a.data(), static_cast<std::size_t>(a.size())),
                    std::span<const double>(b.data(), static_cast<std::size_t>(b.size())));
}

double pair_prob(double s, double tau) {
  if (!(tau > 0.0)) throw NumericError("pair_prob: tau must be positive");
  return sigmoid(s / tau);
}

double pairwise_loss(const Tensor2& features, std::span<const int> labels, double tau,
                     Tensor2* grad) {
  const auto n = features.rows();
  if (n == 0) throw ShapeError("L_A on an empty batch");
  if (static_cast<std::size_t>(n) != labels.size()) throw ShapeError("L_A: label count mismatch");
  if (!(tau > 0.0)) throw NumericError("L_A: tau must be positive");
  Tensor2 norms;
  const Tensor2 unit = normalize_rows(features, &norms);
  const Tensor2 sim = unit * unit.transpose();
  const double inv_pairs = 1.0 / static_cast<double>(n * n);
  Tensor2 dsim;
  if (grad != nullptr) dsim.resize(n, n);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double logit = sim(i, j) / tau;
      const double p = sigmoid(logit);
      const double q = sigmoid(-logit);
      const bool same = labels[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(j)];
      const double pc = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
      const double qc = std::clamp(q, kProbClamp, 1.0 - kProbClamp);
      total += same ? -std::log(pc) : -std::log(qc);
      if (grad != nullptr) {
        // d BCE / d logit = p - y inside the clamp window, zero where clamped.
        double g = 0.0;
        if (same && p == pc) g = -q;
        if (!same && q == qc) g = p;
        dsim(i, j) = g * inv_pairs / tau;
      }
    }
  }
  if (grad != nullptr) {
    const Tensor2 dunit = (dsim + dsim.transpose()) * unit;
    *grad = normalize_rows_backward(unit, norms, dunit);
  }
  return total * inv_pairs;
}

MetricModel init_metric(std::size_t input_dim, const MetricConfig& config) {
  if (!(config.tau > 0.0)) throw NumericError("tau must be positive");
  std::vector<std::size_t> dims{input_dim};
  dims.insert(dims.end(), config.hidden.begin(), config.hidden.end());
  dims.push_back(config.feature_dim);
  Rng rng = make_rng(config.seed, kStreamMetric);
  MetricModel m;
  m.net = Mlp::init(dims, Activation::leaky_relu(config.leaky_slope), Activation::identity(), rng);
  m.tau = config.tau;
  m.feature_dim = config.feature_dim;
  m.normalize = config.normalize;
  return m;
}

double batch_loss_LA(const MetricModel& model, const Tensor2& inputs, std::span<const int> labels) {
  return pairwise_loss(model.net.forward(inputs), labels, model.tau);
}

double batch_loss_LA(const MetricModel& model, const std::vector<LabeledExample>& batch) {
  if (batch.empty()) throw ShapeError("L_A on an empty batch");
  Tensor2 x(static_cast<Eigen::Index>(batch.size()), static_cast<Eigen::Index>(batch[0].x.size()));
  std::vector<int> y;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i].x.size() != batch[0].x.size()) throw ShapeError("L_A: ragged batch");
    for (std::size_t c = 0; c < batch[i].x.size(); ++c) {
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = batch[i].x[c];
    }
    y.push_back(batch[i].label);
  }
  return batch_loss_LA(model, x, y);
}

double batch_loss_LA_grad(const MetricModel& model, const Tensor2& inputs,
                          std::span<const int> labels, MlpGrads& grads) {
  const auto cache = model.net.forward_cached(inputs);
  Tensor2 dz;
  const double loss = pairwise_loss(cache.output, labels, model.tau, &dz);
  grads = model.net.backward(cache, dz);
  return loss;
}

namespace {

double eval_loss(const MetricModel& model, const Tensor2& x, std::span<const int> y,
                 std::size_t batch) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t start = 0; start < y.size(); start += batch) {
    const std::size_t len = std::min(batch, y.size() - start);
    sum += batch_loss_LA(model, x.middleRows(static_cast<Eigen::Index>(start),
                                             static_cast<Eigen::Index>(len)),
                         y.subspan(start, len));
    ++count;
  }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

}  // namespace

void fit_metric(MetricModel& model, const Dataset& data, const MetricConfig& config,
                TrainingLog* log) {
  if (data.empty()) throw ShapeError("train_metric: empty dataset");
  if (config.batch_size == 0) throw ShapeError("train_metric: batch_size must be positive");
  const Tensor2 x = data.inputs();
  const std::vector<int> y = data.labels();
  Optimizer opt(SgdConfig{config.lr, config.momentum});
  Rng rng = make_rng(config.seed, kStreamMetric + 100);
  std::vector<std::size_t> order(y.size());
  std::iota(order.begin(), order.end(), 0);
  if (log != nullptr) log->loss.push_back(eval_loss(model, x, y, config.batch_size));
  MlpGrads grads;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t len = std::min(config.batch_size, order.size() - start);
      const std::span<const std::size_t> idx(order.data() + start, len);
      const Tensor2 xb = gather_rows(x, idx);
      const auto yb = gather(y, idx);
      batch_loss_LA_grad(model, xb, yb, grads);
      opt.step(model.net, grads);
    }
    if (log != nullptr) log->loss.push_back(eval_loss(model, x, y, config.batch_size));
  }
}

MetricModel train_metric(const Dataset& sources, const MetricConfig& config, TrainingLog* log) {
  const auto labels = sources.labels();
  if (std::set<int>(labels.begin(), labels.end()).size() < 2) {
    throw ShapeError("train_metric: need at least two classes (pairwise loss is degenerate)");
  }
  MetricModel model = init_metric(sources.dim, config);
  fit_metric(model, sources, config, log);
  return model;
}

Tensor2 embed_inputs(const MetricModel& model, const Tensor2& inputs, std::size_t threads) {
  Tensor2 out(inputs.rows(), static_cast<Eigen::Index>(model.net.out_dim()));
  constexpr Eigen::Index kShard = 256;
  const auto shards = static_cast<std::size_t>((inputs.rows() + kShard - 1) / kShard);
  parallel_for(
      shards,
      [&](std::size_t s) {
        const Eigen::Index start = static_cast<Eigen::Index>(s) * kShard;
        const Eigen::Index len = std::min(kShard, inputs.rows() - start);
        out.middleRows(start, len) = model.net.forward(inputs.middleRows(start, len));
      },
      threads);
  if (model.normalize) {
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
      const double n = out.row(r).norm();
      if (!(n > 0.0) || !std::isfinite(n)) {
        throw NumericError("embed: example " + std::to_string(r) +
                           " maps to a zero or non-finite feature");
      }
      out.row(r) /= n;
    }
  }
  return out;
}

FeatureBank embed(const MetricModel& model, const Dataset& dataset, std::size_t threads) {
  if (dataset.dim != model.net.in_dim()) {
    throw ShapeError("embed: dataset dim " + std::to_string(dataset.dim) + " but model expects " +
                     std::to_string(model.net.in_dim()));
  }
  FeatureBank bank;
  bank.features = embed_inputs(model, dataset.inputs(), threads);
  bank.labels = dataset.labels();
  bank.domains = dataset.domains();
  bank.num_classes = dataset.num_classes;
  return bank;
}

}  // namespace tarpro
