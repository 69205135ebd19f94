#include "tarpro/projection.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "tarpro/log.hpp"
#include "tarpro/parallel.hpp"

namespace tarpro {

void ProjectionConfig::validate() const {
  if (!(beta > 0.0)) throw NumericError("projection: beta must be positive");
  if (max_iters < 3) throw ShapeError("projection: max_iters must be at least 3");
  if (window == 0 || window % 2 == 0) throw ShapeError("projection: window must be odd");
  if (restarts == 0) throw ShapeError("projection: restarts must be at least 1");
  if (store_stride == 0) throw ShapeError("projection: store_stride must be positive");
}

const RowVector& ProjectionTrace::latent(std::size_t i) const {
  if (i % stride != 0 || i / stride >= latents.size()) {
    throw ShapeError("latent iterate " + std::to_string(i) + " was not stored (stride " +
                     std::to_string(stride) + ")");
  }
  return latents[i / stride];
}

double loss_LS(const RowVector& z_t, const RowVector& z) {
  RowVector unused;
  return loss_LS_grad(z_t, z, unused);
}

double loss_LS_grad(const RowVector& z_t, const RowVector& z, RowVector& dz) {
  if (z_t.size() != z.size()) throw ShapeError("loss_LS: dimension mismatch");
  const double nt = z_t.norm();
  const double nz = z.norm();
  if (!(nt > 0.0) || !(nz > 0.0)) throw NumericError("loss_LS: zero-norm input");
  const RowVector ut = z_t / nt;
  const RowVector uz = z / nz;
  const double c = ut.dot(uz);
  dz = -(ut - c * uz) / nz;
  return 1.0 - std::clamp(c, -1.0, 1.0);
}

namespace {

// Allocation-free forward/backward of a decoder on one latent vector.
class DecoderWorkspace {
 public:
  explicit DecoderWorkspace(const Mlp& decoder) : net_(decoder) {
    for (const auto& l : net_.layers()) {
      pre_.emplace_back(l.out_dim());
      act_.emplace_back(l.out_dim());
      grad_.emplace_back(l.in_dim());
    }
  }

  double loss_and_grad(const RowVector& z_t, const RowVector& u, RowVector* du) {
    const auto& layers = net_.layers();
    const Eigen::VectorXd* x = nullptr;
    in_ = u.transpose();
    x = &in_;
    for (std::size_t k = 0; k < layers.size(); ++k) {
      const auto& l = layers[k];
      pre_[k].noalias() = l.weight.transpose() * (*x);
      pre_[k] += l.bias.row(0).transpose();
      switch (l.activation.kind) {
        case Activation::Kind::kRelu:
          act_[k] = pre_[k].cwiseMax(0.0);
          break;
        case Activation::Kind::kLeakyRelu: {
          const double s = l.activation.slope;
          act_[k] = pre_[k].unaryExpr([s](double v) { return v > 0.0 ? v : s * v; });
          break;
        }
        case Activation::Kind::kIdentity:
          act_[k] = pre_[k];
          break;
      }
      x = &act_[k];
    }
    const RowVector z = x->transpose();
    RowVector dz;
    const double loss = loss_LS_grad(z_t, z, dz);
    if (du == nullptr) return loss;
    upstream_ = dz.transpose();
    for (std::size_t k = layers.size(); k-- > 0;) {
      const auto& l = layers[k];
      switch (l.activation.kind) {
        case Activation::Kind::kRelu:
          upstream_ = (pre_[k].array() > 0.0).select(upstream_, 0.0);
          break;
        case Activation::Kind::kLeakyRelu:
          upstream_ = (pre_[k].array() > 0.0).select(upstream_, l.activation.slope * upstream_);
          break;
        case Activation::Kind::kIdentity:
          break;
      }
      grad_[k].noalias() = l.weight * upstream_;
      upstream_ = grad_[k];
    }
    *du = upstream_.transpose();
    return loss;
  }

 private:
  const Mlp& net_;
  Eigen::VectorXd in_;
  Eigen::VectorXd upstream_;
  std::vector<Eigen::VectorXd> pre_;
  std::vector<Eigen::VectorXd> act_;
  std::vector<Eigen::VectorXd> grad_;
};

}  // namespace

double projection_loss_and_grad(const Mlp& decoder, const RowVector& z_t, const RowVector& u,
                                RowVector* du) {
  if (static_cast<std::size_t>(u.size()) != decoder.in_dim()) {
    throw ShapeError("projection: latent dim " + std::to_string(u.size()) +
                     ", decoder expects " + std::to_string(decoder.in_dim()));
  }
  DecoderWorkspace ws(decoder);
  return ws.loss_and_grad(z_t, u, du);
}

std::vector<double> smooth(const std::vector<double>& values, std::size_t window) {
  if (window == 0 || window % 2 == 0) throw ShapeError("smooth: window must be odd");
  const std::size_t n = values.size();
  const std::size_t half = window / 2;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(n - 1, i + half);
    double s = 0.0;
    for (std::size_t k = lo; k <= hi; ++k) s += values[k];
    out[i] = s / static_cast<double>(hi - lo + 1);
  }
  return out;
}

std::size_t elbow_index(const std::vector<double>& smoothed) {
  if (smoothed.size() < 3) throw ShapeError("elbow_index: need at least 3 values");
  std::size_t best = 1;
  double best_val = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i + 1 < smoothed.size(); ++i) {
    const double d2 = smoothed[i + 1] - 2.0 * smoothed[i] + smoothed[i - 1];
    if (d2 > best_val) {
      best_val = d2;
      best = i;
    }
  }
  return best;
}

namespace {

struct DescentRun {
  bool ok = true;
  std::vector<RowVector> latents;
  std::vector<double> loss;
  RowVector u0;
};

DescentRun descend(const Mlp& decoder, const RowVector& z_t, RowVector u,
                   const ProjectionConfig& config) {
  DecoderWorkspace ws(decoder);
  DescentRun run;
  run.u0 = u;
  run.loss.reserve(config.max_iters);
  run.latents.reserve(config.max_iters / config.store_stride + 1);
  RowVector du;
  for (std::size_t i = 0; i < config.max_iters; ++i) {
    const double loss = ws.loss_and_grad(z_t, u, &du);
    if (!std::isfinite(loss) || !du.allFinite()) {
      run.ok = false;
      return run;
    }
    if (i % config.store_stride == 0) run.latents.push_back(u);
    run.loss.push_back(loss);
    u -= config.beta * du;
  }
  return run;
}

RowVector replay_to(const Mlp& decoder, const RowVector& z_t, RowVector u, std::size_t steps,
                    const ProjectionConfig& config) {
  DecoderWorkspace ws(decoder);
  RowVector du;
  for (std::size_t i = 0; i < steps; ++i) {
    ws.loss_and_grad(z_t, u, &du);
    u -= config.beta * du;
  }
  return u;
}

}  // namespace

ProjectionTrace project(const RowVector& z_t, const Mlp& decoder, const ProjectionConfig& config) {
  config.validate();
  if (static_cast<std::size_t>(z_t.size()) != decoder.out_dim()) {
    throw ShapeError("project: target dim " + std::to_string(z_t.size()) +
                     " does not match decoder output " + std::to_string(decoder.out_dim()));
  }
  if (!(z_t.norm() > 0.0)) throw NumericError("project: zero target feature");
  const auto L = static_cast<Eigen::Index>(decoder.in_dim());

  ProjectionTrace best;
  bool have_best = false;
  std::size_t failures = 0;
  for (std::size_t r = 0; r < config.restarts; ++r) {
    Rng rng(derive_seed(config.init_seed, r));
    const RowVector u0 = standard_normal(1, L, rng).row(0);
    DescentRun run = descend(decoder, z_t, u0, config);
    if (!run.ok) {
      ++failures;
      log_warn("projection restart " + std::to_string(r) + " hit a non-finite loss; discarded");
      continue;
    }
    ProjectionTrace t;
    t.stride = config.store_stride;
    t.latents = std::move(run.latents);
    t.loss = std::move(run.loss);
    t.smoothed = smooth(t.loss, config.window);
    t.n_star = elbow_index(t.smoothed);
    t.initial_loss = t.loss.front();
    t.final_loss = t.loss.back();
    t.restart = r;
    if (!have_best || t.loss_at_n_star() < best.loss_at_n_star()) {
      if (config.store_stride == 1) {
        t.u_star = t.latents[t.n_star];
      } else {
        t.u_star = replay_to(decoder, z_t, run.u0, t.n_star, config);
      }
      best = std::move(t);
      have_best = true;
    }
  }
  if (!have_best) throw NumericError("project: every restart produced a non-finite loss");
  best.failed_restarts = failures;
  best.z_t_star = decoder.forward(Tensor2(best.u_star)).row(0);
  return best;
}

ProjectionTrace project(const RowVector& z_t, const Sampler& sampler,
                        const ProjectionConfig& config) {
  return project(z_t, generator_net(sampler), config);
}

std::uint64_t target_seed(std::uint64_t run_seed, std::size_t index) {
  return derive_seed(derive_seed(run_seed, kStreamProjection), index);
}

namespace {

int classify_feature(const ClassifierModel& classifier, const RowVector& z, bool normalize) {
  Tensor2 in = z;
  if (normalize) in = normalize_rows(in);
  return argmax_logits(classifier.net.forward(in).row(0));
}

}  // namespace

InferResult infer_feature(const RowVector& z_t, const Sampler& sampler,
                          const ClassifierModel& classifier, const ProjectionConfig& config) {
  InferResult out;
  if (const auto* knn = std::get_if<KnnSampler>(&sampler)) {
    auto [row, idx] = knn_project(*knn, z_t);
    out.knn_index = idx;
    out.trace.loss = {loss_LS(z_t, row)};
    out.trace.smoothed = out.trace.loss;
    out.trace.initial_loss = out.trace.final_loss = out.trace.loss[0];
    out.trace.z_t_star = row;
    // Bank rows are classified as stored.
    out.label = argmax_logits(classifier.net.forward(Tensor2(row)).row(0));
    return out;
  }
  out.trace = project(z_t, sampler, config);
  out.label = classify_feature(classifier, out.trace.z_t_star, config.normalize_output);
  return out;
}

InferResult infer(const RowVector& x_t, const MetricModel& metric, const Sampler& sampler,
                  const ClassifierModel& classifier, const ProjectionConfig& config) {
  const RowVector z_t = embed_inputs(metric, Tensor2(x_t)).row(0);
  return infer_feature(z_t, sampler, classifier, config);
}

std::vector<InferResult> infer_features(const Tensor2& z_t, const Sampler& sampler,
                                        const ClassifierModel& classifier,
                                        const ProjectionConfig& config, std::size_t threads) {
  std::vector<InferResult> out(static_cast<std::size_t>(z_t.rows()));
  parallel_for(
      out.size(),
      [&](std::size_t i) {
        ProjectionConfig c = config;
        c.init_seed = target_seed(config.init_seed, i);
        out[i] = infer_feature(z_t.row(static_cast<Eigen::Index>(i)), sampler, classifier, c);
      },
      threads);
  return out;
}

std::vector<double> sweep_epsilon(const std::vector<ProjectionTrace>& traces,
                                  const std::vector<double>& epsilons, const Sampler& sampler,
                                  const ClassifierModel& classifier, std::span<const int> truth,
                                  const ProjectionConfig& config, EpsilonMode mode) {
  if (traces.size() != truth.size()) throw ShapeError("sweep_epsilon: traces/labels differ");
  std::vector<double> out;
  for (double eps : epsilons) {
    std::size_t correct = 0;
    for (std::size_t t = 0; t < traces.size(); ++t) {
      const auto& tr = traces[t];
      const double offset =
          mode == EpsilonMode::kAbsolute ? eps : std::round(eps * static_cast<double>(tr.n_star));
      const double last = static_cast<double>(tr.loss.size() - 1);
      const double want = std::clamp(static_cast<double>(tr.n_star) + offset, 0.0, last);
      const auto idx = static_cast<std::size_t>(want);
      const RowVector z = decode(sampler, tr.latent(idx));
      correct += classify_feature(classifier, z, config.normalize_output) == truth[t] ? 1 : 0;
    }
    out.push_back(traces.empty() ? 0.0
                                 : static_cast<double>(correct) / static_cast<double>(traces.size()));
  }
  return out;
}

namespace {
std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
}  // namespace

std::string trace_csv(const ProjectionTrace& trace) {
  std::string out = "iter,loss,smoothed_loss\n";
  for (std::size_t i = 0; i < trace.loss.size(); ++i) {
    out += std::to_string(i) + "," + fmt(trace.loss[i]) + "," + fmt(trace.smoothed[i]) + "\n";
  }
  return out;
}

std::string summary_csv(const std::vector<InferResult>& results, std::span<const int> truth) {
  if (results.size() != truth.size()) throw ShapeError("summary_csv: length mismatch");
  std::string out = "target_index,n_star,initial_loss,final_loss,pred,true\n";
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    out += std::to_string(i) + "," + std::to_string(r.trace.n_star) + "," +
           fmt(r.trace.initial_loss) + "," + fmt(r.trace.final_loss) + "," +
           std::to_string(r.label) + "," + std::to_string(truth[i]) + "\n";
  }
  return out;
}

}  // namespace tarpro
