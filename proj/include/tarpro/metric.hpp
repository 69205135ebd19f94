#pragma once

// Label-preserving feature extractor trained with the pairwise
// cosine / temperature-sigmoid / BCE objective, and the source feature bank.

#include <cstdint>
#include <span>
#include <vector>

#include "tarpro/data.hpp"
#include "tarpro/numerics.hpp"

namespace tarpro {

struct MetricConfig {
  std::vector<std::size_t> hidden{64, 64, 64};
  std::size_t feature_dim = 16;
  double leaky_slope = 0.2;
  double tau = 0.1;
  double lr = 0.05;
  double momentum = 0.9;
  std::size_t epochs = 200;
  std::size_t batch_size = 128;
  bool normalize = true;
  std::uint64_t seed = 0;
};

struct MetricModel {
  Mlp net;
  double tau = 0.1;
  std::size_t feature_dim = 0;
  bool normalize = true;

  bool operator==(const MetricModel&) const = default;
};

struct FeatureBank {
  Tensor2 features;  // one row per example
  std::vector<int> labels;
  std::vector<int> domains;
  std::size_t num_classes = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(features.cols()); }
  RowVector row(std::size_t i) const { return features.row(static_cast<Eigen::Index>(i)); }
  FeatureBank filter_domains(const std::vector<int>& keep) const;
};

struct TrainingLog {
  std::vector<double> loss;      // index 0 is the pre-training value
  std::vector<double> accuracy;  // filled by trainers that track it
};

double cosine_sim(std::span<const double> a, std::span<const double> b);
double cosine_sim(const RowVector& a, const RowVector& b);

/// sigmoid(s / tau).
double pair_prob(double s, double tau);

/// Mean BCE over all ordered pairs (i, j) of rows of `features`, including
/// i == j, between sigmoid(cos(z_i, z_j) / tau) and [y_i == y_j].
/// Writes dLoss/dFeatures when `grad` is non-null.
double pairwise_loss(const Tensor2& features, std::span<const int> labels, double tau,
                     Tensor2* grad = nullptr);

MetricModel init_metric(std::size_t input_dim, const MetricConfig& config);

double batch_loss_LA(const MetricModel& model, const Tensor2& inputs, std::span<const int> labels);
double batch_loss_LA(const MetricModel& model, const std::vector<LabeledExample>& batch);

/// L_A and its gradient with respect to the network parameters.
double batch_loss_LA_grad(const MetricModel& model, const Tensor2& inputs,
                          std::span<const int> labels, MlpGrads& grads);

MetricModel train_metric(const Dataset& sources, const MetricConfig& config,
                         TrainingLog* log = nullptr);

/// Continues training an existing model (used by few-shot fine-tuning).
void fit_metric(MetricModel& model, const Dataset& data, const MetricConfig& config,
                TrainingLog* log = nullptr);

/// Network outputs; rows are L2-normalized when model.normalize is set.
FeatureBank embed(const MetricModel& model, const Dataset& dataset, std::size_t threads = 1);
Tensor2 embed_inputs(const MetricModel& model, const Tensor2& inputs, std::size_t threads = 1);

}  // namespace tarpro
