#pragma once

// Desk-scale study designs: ablation grid, sampler comparison, data-fraction
// sweep, single-source training, step-size and stopping sweeps, few-shot
// adaptation. Every runner is a pure function of its plan.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tarpro/classifier.hpp"
#include "tarpro/data.hpp"
#include "tarpro/diagnostics.hpp"
#include "tarpro/generative.hpp"
#include "tarpro/metric.hpp"
#include "tarpro/projection.hpp"

namespace tarpro {

enum class Variant { kFull, kNoFTheta, kNoGPhi, kDeepAll };
enum class SamplerKind { kVae, kGan, kKnn };

std::string to_string(Variant v);
std::string to_string(SamplerKind s);
Variant parse_variant(const std::string& s);
SamplerKind parse_sampler(const std::string& s);

struct DatasetSpec {
  enum class Kind { kTwoMoons, kGaussian };
  Kind kind = Kind::kTwoMoons;
  std::vector<double> angles{0.0, 15.0, 30.0, 45.0};
  std::size_t n_per_domain = 300;
  double noise_sd = 0.08;
  std::size_t num_classes = 2;  // gaussian only
  std::size_t dim = 2;          // gaussian only

  Dataset generate(std::uint64_t seed) const;
};

struct PipelineConfig {
  MetricConfig metric;
  ClassifierConfig classifier;
  VaeConfig vae;
  GanConfig gan;
  ProjectionConfig projection;
  FewShotConfig fewshot;
  DiscriminatorConfig discriminator;
  std::size_t threads = 1;

  /// Copy with every component seed set from `seed` on its own stream.
  PipelineConfig seeded(std::uint64_t seed) const;
};

struct ExperimentPlan {
  std::string name = "experiment";
  DatasetSpec dataset;
  std::vector<int> sources{0, 1, 2};
  std::vector<int> targets{3};
  Variant variant = Variant::kFull;
  SamplerKind sampler = SamplerKind::kVae;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::map<std::string, std::string> overrides;  // informational, echoed to manifests
  PipelineConfig config;

  /// Throws ShapeError for invalid domain ids, empty seed lists, or
  /// overlapping source and target domains.
  void validate() const;
};

struct ResultRow {
  std::string experiment;
  int target = 0;
  std::string variant;  // may carry a setting suffix such as "full@beta=0.05"
  std::string sampler;  // "none" when the variant uses no sampler
  std::uint64_t seed = 0;
  double accuracy = 0.0;
};

struct AggregateRow {
  std::string experiment;
  int target = 0;
  std::string variant;
  std::string sampler;
  std::size_t n = 0;
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation, 0 when n == 1
};

struct ResultTable {
  std::vector<ResultRow> rows;

  /// Grouped by (experiment, target, variant, sampler) in first-seen order.
  std::vector<AggregateRow> aggregate() const;
  /// Mean accuracy of matching rows; target < 0 matches every target.
  double mean(const std::string& variant, const std::string& sampler = "", int target = -1) const;
  void append(const ResultTable& other);
};

/// `experiment,target,variant,sampler,seed,accuracy`
std::string results_csv(const ResultTable& table);
/// `experiment,target,variant,sampler,n,mean,sd`
std::string aggregate_csv(const ResultTable& table);

/// Models trained once per (data, sources, seed) and shared by all cells.
class TrainedPipeline {
 public:
  TrainedPipeline(Dataset data, std::vector<int> sources, PipelineConfig config);
  /// Explicit training rows, e.g. a subsample of the source domains.
  TrainedPipeline(Dataset data, Dataset sources, PipelineConfig config);

  const Dataset& data() const { return data_; }
  const Dataset& sources() const { return sources_; }
  const PipelineConfig& config() const { return config_; }

  const MetricModel& metric();
  const FeatureBank& bank();
  const ClassifierModel& classifier();
  const Sampler& sampler(SamplerKind kind);
  const DeepAllModel& deepall();
  const FeatureBank& deepall_bank();
  const VaeModel& deepall_vae();

  /// Accuracy of a variant on one target domain.
  double evaluate(Variant variant, SamplerKind sampler, int target);
  double evaluate(Variant variant, SamplerKind sampler, int target,
                  const ProjectionConfig& projection);

  /// Inference results of the full pipeline on a target (cached per config).
  const std::vector<InferResult>& infer_target(SamplerKind sampler, int target,
                                               const ProjectionConfig& projection);

 private:
  Dataset data_;
  Dataset sources_;
  PipelineConfig config_;
  std::optional<MetricModel> metric_;
  std::optional<FeatureBank> bank_;
  std::optional<ClassifierModel> classifier_;
  std::optional<Sampler> vae_;
  std::optional<Sampler> gan_;
  std::optional<Sampler> knn_;
  std::optional<DeepAllModel> deepall_;
  std::optional<FeatureBank> deepall_bank_;
  std::optional<Sampler> deepall_vae_;
  std::map<std::string, std::vector<InferResult>> infer_cache_;
};

ResultTable run_ablation(const ExperimentPlan& plan);
ResultTable run_sampler_comparison(const ExperimentPlan& plan);
ResultTable run_fraction_sweep(const ExperimentPlan& plan, const std::vector<double>& fractions);
/// Trains on each listed source alone and evaluates every other domain.
ResultTable run_single_source(const ExperimentPlan& plan);
ResultTable run_beta_sweep(const ExperimentPlan& plan, const std::vector<double>& betas);
ResultTable run_epsilon_sweep(const ExperimentPlan& plan, const std::vector<double>& epsilons,
                              EpsilonMode mode = EpsilonMode::kAbsolute);
/// |T| = shots labelled target examples per fine-tuning run; every count is
/// evaluated on the same held-out target rows.
ResultTable run_fewshot(const ExperimentPlan& plan, const std::vector<std::size_t>& shots);

}  // namespace tarpro
