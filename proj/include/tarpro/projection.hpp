#pragma once

// Inference-time projection of target features onto the source manifold:
// gradient descent on 1 - cos(z_t, G(u)) over the latent u, window-averaged
// loss curve, and elbow (max second difference) stopping.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tarpro/classifier.hpp"
#include "tarpro/generative.hpp"
#include "tarpro/metric.hpp"

namespace tarpro {

struct ProjectionConfig {
  double beta = 0.01;         // latent step size
  std::size_t max_iters = 2000;
  std::size_t window = 25;    // odd
  std::uint64_t init_seed = 0;
  std::size_t restarts = 8;
  /// Keep every k-th latent iterate; u* is recovered by replaying the
  /// deterministic descent when k > 1.
  std::size_t store_stride = 1;
  /// L2-normalize G(u*) before it reaches the classifier.
  bool normalize_output = true;

  void validate() const;
};

struct ProjectionTrace {
  /// Latent iterates: latents[k] is U[k * stride]; U[i] is the latent at which
  /// loss[i] was measured, so loss[i] == loss_LS(z_t, G(U[i])).
  std::vector<RowVector> latents;
  std::size_t stride = 1;
  std::vector<double> loss;
  std::vector<double> smoothed;
  std::size_t n_star = 0;
  RowVector u_star;
  RowVector z_t_star;  // G(u_star), not normalized
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::size_t restart = 0;  // which restart produced this trace
  std::size_t failed_restarts = 0;

  double loss_at_n_star() const { return loss.at(n_star); }
  /// U[i]; requires the iterate to be stored.
  const RowVector& latent(std::size_t i) const;
};

/// 1 - cos(z_t, z), in [0, 2].
double loss_LS(const RowVector& z_t, const RowVector& z);
/// Same, writing dLoss/dz.
double loss_LS_grad(const RowVector& z_t, const RowVector& z, RowVector& dz);

/// dLoss/du through the decoder at u; returns the loss.
double projection_loss_and_grad(const Mlp& decoder, const RowVector& z_t, const RowVector& u,
                                RowVector* du);

/// Centered moving average with window W (odd). Near the ends the window is
/// clipped to the sequence, so edge entries average fewer values.
std::vector<double> smooth(const std::vector<double>& values, std::size_t window);

/// argmax over interior i of L[i+1] - 2 L[i] + L[i-1]; earliest i on ties.
std::size_t elbow_index(const std::vector<double>& smoothed);

/// Runs exactly max_iters descent steps per restart, then selects n*.
ProjectionTrace project(const RowVector& z_t, const Sampler& sampler,
                        const ProjectionConfig& config);
ProjectionTrace project(const RowVector& z_t, const Mlp& decoder, const ProjectionConfig& config);

/// Per-target seed derived from the run seed and the target index.
std::uint64_t target_seed(std::uint64_t run_seed, std::size_t index);

struct InferResult {
  int label = 0;
  ProjectionTrace trace;
  std::size_t knn_index = 0;  // only for the 1-NN sampler
};

/// Classifies one already-embedded target feature.
InferResult infer_feature(const RowVector& z_t, const Sampler& sampler,
                          const ClassifierModel& classifier, const ProjectionConfig& config);

/// z_t = f(x_t) (normalized as the metric model specifies), projected and
/// classified. No model is modified.
InferResult infer(const RowVector& x_t, const MetricModel& metric, const Sampler& sampler,
                  const ClassifierModel& classifier, const ProjectionConfig& config);

/// All rows of `z_t`, in parallel; the result order follows the input order
/// and is independent of the thread count. config.init_seed is the run seed.
std::vector<InferResult> infer_features(const Tensor2& z_t, const Sampler& sampler,
                                        const ClassifierModel& classifier,
                                        const ProjectionConfig& config, std::size_t threads = 0);

enum class EpsilonMode { kAbsolute, kFractionOfNStar };

/// Accuracy of classifying G(U[clamp(n* + eps)]) for each eps. In fraction
/// mode the offset is round(eps * n*).
std::vector<double> sweep_epsilon(const std::vector<ProjectionTrace>& traces,
                                  const std::vector<double>& epsilons, const Sampler& sampler,
                                  const ClassifierModel& classifier, std::span<const int> truth,
                                  const ProjectionConfig& config,
                                  EpsilonMode mode = EpsilonMode::kAbsolute);

/// `iter,loss,smoothed_loss`
std::string trace_csv(const ProjectionTrace& trace);
/// `target_index,n_star,initial_loss,final_loss,pred,true`
std::string summary_csv(const std::vector<InferResult>& results, std::span<const int> truth);

}  // namespace tarpro
