#pragma once

// Shallow classifier on feature-bank rows, the Deep All baseline, and
// few-shot fine-tuning of a trained pipeline.

#include <cstdint>
#include <vector>

#include "tarpro/data.hpp"
#include "tarpro/generative.hpp"
#include "tarpro/metric.hpp"

namespace tarpro {

struct ClassifierConfig {
  std::size_t hidden = 64;
  double lr = 0.003;  // Adam
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
};

struct ClassifierModel {
  Mlp net;  // one hidden layer
  std::size_t num_classes = 0;

  bool operator==(const ClassifierModel&) const = default;
};

ClassifierModel init_classifier(std::size_t feature_dim, std::size_t num_classes,
                                const ClassifierConfig& config);

/// Softmax cross-entropy training; log->accuracy[e] is train accuracy after
/// epoch e (index 0 = untrained).
ClassifierModel train_classifier(const FeatureBank& bank, const ClassifierConfig& config,
                                 TrainingLog* log = nullptr);

void fit_classifier(ClassifierModel& model, const Tensor2& features, std::span<const int> labels,
                    const ClassifierConfig& config, TrainingLog* log = nullptr);

/// Argmax of the logits per row; ties go to the lowest class id.
std::vector<int> predict(const ClassifierModel& model, const Tensor2& features);
int argmax_logits(const RowVector& logits);

double accuracy(std::span<const int> predicted, std::span<const int> truth);
double evaluate(const ClassifierModel& model, const FeatureBank& bank);

struct DeepAllModel {
  MetricModel extractor;  // same architecture as the metric network
  ClassifierModel head;

  bool operator==(const DeepAllModel&) const = default;
};

struct DeepAllConfig {
  MetricConfig backbone;  // architecture, optimizer, epochs, batch size
  ClassifierConfig head;  // head width and its Adam learning rate
  /// Keep the initialized backbone fixed and train only the head exactly as
  /// train_classifier would on its features.
  bool freeze_backbone = false;
};

/// Backbone and head trained jointly with plain cross-entropy on pooled
/// sources. Backbone outputs are L2-normalized before the head, matching
/// what the classifier sees in the full pipeline.
DeepAllModel train_deepall(const Dataset& sources, const DeepAllConfig& config,
                           TrainingLog* log = nullptr);

std::vector<int> predict_deepall(const DeepAllModel& model, const Tensor2& inputs);

struct FewShotConfig {
  std::size_t epochs = 20;
  double lr_scale = 0.1;
  std::uint64_t seed = 0;
};

/// The pieces of a trained pipeline that few-shot adaptation updates.
struct PipelineModels {
  MetricModel metric;
  Sampler sampler;
  ClassifierModel classifier;
};

/// Fine-tunes metric network, sampler (VAE or GAN; a 1-NN bank gains the
/// target rows) and classifier on labelled target samples for a few epochs
/// at reduced learning rates.
void finetune_fewshot(PipelineModels& models, const Dataset& target_samples,
                      const MetricConfig& metric_cfg, const VaeConfig& vae_cfg,
                      const GanConfig& gan_cfg, const ClassifierConfig& cls_cfg,
                      const FewShotConfig& config);

}  // namespace tarpro
