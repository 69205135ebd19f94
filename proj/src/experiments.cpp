#include "tarpro/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

#include "tarpro/log.hpp"
#include "tarpro/parallel.hpp"

namespace tarpro {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string short_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

const std::string kNone = "none";

bool uses_sampler(Variant v) { return v == Variant::kFull || v == Variant::kNoFTheta; }

std::string sampler_label(Variant v, SamplerKind s) {
  return uses_sampler(v) ? to_string(s) : kNone;
}

// Runs body(seed) for every seed, in parallel, and concatenates rows in seed order.
ResultTable per_seed(const ExperimentPlan& plan,
                     const std::function<std::vector<ResultRow>(std::uint64_t)>& body) {
  std::vector<std::vector<ResultRow>> parts(plan.seeds.size());
  parallel_for(
      plan.seeds.size(), [&](std::size_t i) { parts[i] = body(plan.seeds[i]); },
      plan.config.threads);
  ResultTable t;
  for (auto& p : parts) t.rows.insert(t.rows.end(), p.begin(), p.end());
  return t;
}

ResultRow make_row(const ExperimentPlan& plan, int target, std::string variant,
                   std::string sampler, std::uint64_t seed, double acc) {
  return {plan.name, target, std::move(variant), std::move(sampler), seed, acc};
}

std::vector<int> target_labels(const Dataset& data, int target) {
  return data.filter_domains({target}).labels();
}

}  // namespace

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kFull: return "full";
    case Variant::kNoFTheta: return "no_f_theta";
    case Variant::kNoGPhi: return "no_G_phi";
    case Variant::kDeepAll: return "deepall";
  }
  return "full";
}

std::string to_string(SamplerKind s) {
  switch (s) {
    case SamplerKind::kVae: return "vae";
    case SamplerKind::kGan: return "gan";
    case SamplerKind::kKnn: return "knn";
  }
  return "vae";
}

Variant parse_variant(const std::string& s) {
  for (Variant v : {Variant::kFull, Variant::kNoFTheta, Variant::kNoGPhi, Variant::kDeepAll}) {
    if (to_string(v) == s) return v;
  }
  throw Error("unknown variant '" + s + "' (full, no_f_theta, no_G_phi, deepall)");
}

SamplerKind parse_sampler(const std::string& s) {
  for (SamplerKind k : {SamplerKind::kVae, SamplerKind::kGan, SamplerKind::kKnn}) {
    if (to_string(k) == s) return k;
  }
  throw Error("unknown sampler '" + s + "' (vae, gan, knn)");
}

Dataset DatasetSpec::generate(std::uint64_t seed) const {
  if (kind == Kind::kTwoMoons) return default_two_moons(angles, n_per_domain, noise_sd, seed);
  std::vector<ShiftSpec> shifts;
  for (std::size_t i = 0; i < angles.size(); ++i) shifts.push_back(ShiftSpec::rotation(angles[i], i));
  return gen_gaussian_classes(shifts, n_per_domain, num_classes, dim, seed);
}

PipelineConfig PipelineConfig::seeded(std::uint64_t seed) const {
  PipelineConfig c = *this;
  c.metric.seed = seed;
  c.classifier.seed = seed;
  c.vae.seed = seed;
  c.gan.seed = seed;
  c.projection.init_seed = seed;
  c.fewshot.seed = seed;
  c.discriminator.seed = seed;
  return c;
}

void ExperimentPlan::validate() const {
  const auto n = static_cast<int>(dataset.angles.size());
  if (seeds.empty()) throw ShapeError("plan '" + name + "': no seeds");
  if (sources.empty()) throw ShapeError("plan '" + name + "': no source domains");
  std::set<int> src(sources.begin(), sources.end());
  for (int d : sources) {
    if (d < 0 || d >= n) throw ShapeError("plan '" + name + "': source domain " + std::to_string(d) + " out of range");
  }
  for (int d : targets) {
    if (d < 0 || d >= n) throw ShapeError("plan '" + name + "': target domain " + std::to_string(d) + " out of range");
    if (src.count(d)) throw ShapeError("plan '" + name + "': domain " + std::to_string(d) + " is both source and target");
  }
  config.projection.validate();
}

std::vector<AggregateRow> ResultTable::aggregate() const {
  std::vector<AggregateRow> out;
  std::vector<std::vector<double>> values;
  for (const auto& r : rows) {
    auto it = std::find_if(out.begin(), out.end(), [&](const AggregateRow& a) {
      return a.experiment == r.experiment && a.target == r.target && a.variant == r.variant &&
             a.sampler == r.sampler;
    });
    if (it == out.end()) {
      out.push_back({r.experiment, r.target, r.variant, r.sampler, 0, 0.0, 0.0});
      values.emplace_back();
      it = out.end() - 1;
    }
    values[static_cast<std::size_t>(it - out.begin())].push_back(r.accuracy);
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto& v = values[i];
    out[i].n = v.size();
    out[i].mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - out[i].mean) * (x - out[i].mean);
    out[i].sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  }
  return out;
}

double ResultTable::mean(const std::string& variant, const std::string& sampler, int target) const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : rows) {
    if (r.variant != variant) continue;
    if (!sampler.empty() && r.sampler != sampler) continue;
    if (target >= 0 && r.target != target) continue;
    sum += r.accuracy;
    ++n;
  }
  if (n == 0) throw Error("no rows for variant '" + variant + "'");
  return sum / static_cast<double>(n);
}

void ResultTable::append(const ResultTable& other) {
  rows.insert(rows.end(), other.rows.begin(), other.rows.end());
}

std::string results_csv(const ResultTable& table) {
  std::string out = "experiment,target,variant,sampler,seed,accuracy\n";
  for (const auto& r : table.rows) {
    out += r.experiment + "," + std::to_string(r.target) + "," + r.variant + "," + r.sampler + "," +
           std::to_string(r.seed) + "," + fmt(r.accuracy) + "\n";
  }
  return out;
}

std::string aggregate_csv(const ResultTable& table) {
  std::string out = "experiment,target,variant,sampler,n,mean,sd\n";
  for (const auto& a : table.aggregate()) {
    out += a.experiment + "," + std::to_string(a.target) + "," + a.variant + "," + a.sampler + "," +
           std::to_string(a.n) + "," + fmt(a.mean) + "," + fmt(a.sd) + "\n";
  }
  return out;
}

TrainedPipeline::TrainedPipeline(Dataset data, std::vector<int> sources, PipelineConfig config)
    : data_(std::move(data)), config_(std::move(config)) {
  sources_ = data_.filter_domains(sources);
}

TrainedPipeline::TrainedPipeline(Dataset data, Dataset sources, PipelineConfig config)
    : data_(std::move(data)), sources_(std::move(sources)), config_(std::move(config)) {}

const MetricModel& TrainedPipeline::metric() {
  if (!metric_) metric_ = train_metric(sources_, config_.metric);
  return *metric_;
}

const FeatureBank& TrainedPipeline::bank() {
  if (!bank_) bank_ = embed(metric(), sources_);
  return *bank_;
}

const ClassifierModel& TrainedPipeline::classifier() {
  if (!classifier_) classifier_ = train_classifier(bank(), config_.classifier);
  return *classifier_;
}

const Sampler& TrainedPipeline::sampler(SamplerKind kind) {
  switch (kind) {
    case SamplerKind::kVae:
      if (!vae_) vae_ = Sampler(train_vae(bank(), config_.vae));
      return *vae_;
    case SamplerKind::kGan:
      if (!gan_) gan_ = Sampler(train_gan(bank(), config_.gan));
      return *gan_;
    case SamplerKind::kKnn:
      if (!knn_) knn_ = Sampler(KnnSampler{bank()});
      return *knn_;
  }
  throw Error("unknown sampler");
}

const DeepAllModel& TrainedPipeline::deepall() {
  if (!deepall_) {
    DeepAllConfig dc;
    dc.backbone = config_.metric;
    dc.head = config_.classifier;
    deepall_ = train_deepall(sources_, dc);
  }
  return *deepall_;
}

const FeatureBank& TrainedPipeline::deepall_bank() {
  if (!deepall_bank_) deepall_bank_ = embed(deepall().extractor, sources_);
  return *deepall_bank_;
}

const VaeModel& TrainedPipeline::deepall_vae() {
  if (!deepall_vae_) deepall_vae_ = Sampler(train_vae(deepall_bank(), config_.vae));
  return std::get<VaeModel>(*deepall_vae_);
}

const std::vector<InferResult>& TrainedPipeline::infer_target(SamplerKind kind, int target,
                                                              const ProjectionConfig& projection) {
  const std::string key = to_string(kind) + "/" + std::to_string(target) + "/" +
                          fmt(projection.beta) + "/" + std::to_string(projection.max_iters) + "/" +
                          std::to_string(projection.window) + "/" +
                          std::to_string(projection.restarts) + "/" +
                          std::to_string(projection.init_seed);
  auto it = infer_cache_.find(key);
  if (it != infer_cache_.end()) return it->second;
  const Dataset t = data_.filter_domains({target});
  const FeatureBank z = embed(metric(), t);
  auto results = infer_features(z.features, sampler(kind), classifier(), projection, 1);
  return infer_cache_.emplace(key, std::move(results)).first->second;
}

double TrainedPipeline::evaluate(Variant variant, SamplerKind kind, int target) {
  return evaluate(variant, kind, target, config_.projection);
}

double TrainedPipeline::evaluate(Variant variant, SamplerKind kind, int target,
                                 const ProjectionConfig& projection) {
  const Dataset t = data_.filter_domains({target});
  if (t.empty()) throw ShapeError("evaluate: target domain " + std::to_string(target) + " is empty");
  const auto truth = t.labels();
  switch (variant) {
    case Variant::kDeepAll:
      return accuracy(predict_deepall(deepall(), t.inputs()), truth);
    case Variant::kNoGPhi:
      return accuracy(predict(classifier(), embed(metric(), t).features), truth);
    case Variant::kNoFTheta: {
      const Sampler s(deepall_vae());
      const FeatureBank z = embed(deepall().extractor, t);
      const auto res = infer_features(z.features, s, deepall().head, projection, 1);
      std::vector<int> pred;
      for (const auto& r : res) pred.push_back(r.label);
      return accuracy(pred, truth);
    }
    case Variant::kFull: {
      const auto& res = infer_target(kind, target, projection);
      std::vector<int> pred;
      for (const auto& r : res) pred.push_back(r.label);
      return accuracy(pred, truth);
    }
  }
  throw Error("unknown variant");
}

ResultTable run_ablation(const ExperimentPlan& plan) {
  plan.validate();
  return per_seed(plan, [&](std::uint64_t seed) {
    TrainedPipeline p(plan.dataset.generate(seed), plan.sources, plan.config.seeded(seed));
    std::vector<ResultRow> rows;
    for (int target : plan.targets) {
      for (Variant v : {Variant::kDeepAll, Variant::kNoGPhi, Variant::kNoFTheta, Variant::kFull}) {
        rows.push_back(make_row(plan, target, to_string(v), sampler_label(v, plan.sampler), seed,
                                p.evaluate(v, plan.sampler, target)));
      }
    }
    return rows;
  });
}

ResultTable run_sampler_comparison(const ExperimentPlan& plan) {
  plan.validate();
  return per_seed(plan, [&](std::uint64_t seed) {
    TrainedPipeline p(plan.dataset.generate(seed), plan.sources, plan.config.seeded(seed));
    std::vector<ResultRow> rows;
    for (int target : plan.targets) {
      for (SamplerKind s : {SamplerKind::kVae, SamplerKind::kGan, SamplerKind::kKnn}) {
        rows.push_back(make_row(plan, target, "full", to_string(s), seed,
                                p.evaluate(Variant::kFull, s, target)));
      }
    }
    return rows;
  });
}

ResultTable run_fraction_sweep(const ExperimentPlan& plan, const std::vector<double>& fractions) {
  plan.validate();
  for (double f : fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw ShapeError("fraction sweep: fraction " + short_num(f) + " outside (0, 1]");
  }
  return per_seed(plan, [&](std::uint64_t seed) {
    const Dataset data = plan.dataset.generate(seed);
    const Dataset sources = data.filter_domains(plan.sources);
    std::vector<ResultRow> rows;
    for (double f : fractions) {
      TrainedPipeline p(data, subsample_fraction(sources, f, seed), plan.config.seeded(seed));
      for (int target : plan.targets) {
        rows.push_back(make_row(plan, target, to_string(plan.variant) + "@fraction=" + short_num(f),
                                sampler_label(plan.variant, plan.sampler), seed,
                                p.evaluate(plan.variant, plan.sampler, target)));
      }
    }
    return rows;
  });
}

ResultTable run_single_source(const ExperimentPlan& plan) {
  if (plan.seeds.empty()) throw ShapeError("plan '" + plan.name + "': no seeds");
  const auto n = static_cast<int>(plan.dataset.angles.size());
  for (int s : plan.sources) {
    if (s < 0 || s >= n) throw ShapeError("single source: domain " + std::to_string(s) + " out of range");
  }
  return per_seed(plan, [&](std::uint64_t seed) {
    const Dataset data = plan.dataset.generate(seed);
    std::vector<ResultRow> rows;
    for (int s : plan.sources) {
      TrainedPipeline p(data, std::vector<int>{s}, plan.config.seeded(seed));
      for (int target = 0; target < n; ++target) {
        if (target == s) continue;
        for (Variant v : {Variant::kDeepAll, Variant::kNoGPhi, Variant::kNoFTheta, Variant::kFull}) {
          rows.push_back(make_row(plan, target, to_string(v) + "@source=" + std::to_string(s),
                                  sampler_label(v, plan.sampler), seed,
                                  p.evaluate(v, plan.sampler, target)));
        }
      }
    }
    return rows;
  });
}

ResultTable run_beta_sweep(const ExperimentPlan& plan, const std::vector<double>& betas) {
  plan.validate();
  return per_seed(plan, [&](std::uint64_t seed) {
    const PipelineConfig cfg = plan.config.seeded(seed);
    TrainedPipeline p(plan.dataset.generate(seed), plan.sources, cfg);
    std::vector<ResultRow> rows;
    for (double b : betas) {
      ProjectionConfig pc = cfg.projection;
      pc.beta = b;
      pc.validate();
      for (int target : plan.targets) {
        rows.push_back(make_row(plan, target, to_string(plan.variant) + "@beta=" + short_num(b),
                                sampler_label(plan.variant, plan.sampler), seed,
                                p.evaluate(plan.variant, plan.sampler, target, pc)));
      }
    }
    return rows;
  });
}

ResultTable run_epsilon_sweep(const ExperimentPlan& plan, const std::vector<double>& epsilons,
                              EpsilonMode mode) {
  plan.validate();
  if (plan.sampler == SamplerKind::kKnn) throw Error("epsilon sweep needs a generative sampler");
  return per_seed(plan, [&](std::uint64_t seed) {
    const PipelineConfig cfg = plan.config.seeded(seed);
    TrainedPipeline p(plan.dataset.generate(seed), plan.sources, cfg);
    std::vector<ResultRow> rows;
    for (int target : plan.targets) {
      const auto& res = p.infer_target(plan.sampler, target, cfg.projection);
      std::vector<ProjectionTrace> traces;
      for (const auto& r : res) traces.push_back(r.trace);
      const auto accs = sweep_epsilon(traces, epsilons, p.sampler(plan.sampler), p.classifier(),
                                      target_labels(p.data(), target), cfg.projection, mode);
      for (std::size_t i = 0; i < epsilons.size(); ++i) {
        rows.push_back(make_row(plan, target, "full@eps=" + short_num(epsilons[i]),
                                to_string(plan.sampler), seed, accs[i]));
      }
    }
    return rows;
  });
}

ResultTable run_fewshot(const ExperimentPlan& plan, const std::vector<std::size_t>& shots) {
  plan.validate();
  if (shots.empty()) return {};
  const std::size_t max_shot = *std::max_element(shots.begin(), shots.end());
  return per_seed(plan, [&](std::uint64_t seed) {
    const PipelineConfig cfg = plan.config.seeded(seed);
    TrainedPipeline p(plan.dataset.generate(seed), plan.sources, cfg);
    std::vector<ResultRow> rows;
    for (int target : plan.targets) {
      const Dataset t = p.data().filter_domains({target});
      if (t.size() <= max_shot) throw ShapeError("few-shot: target domain smaller than |T|");
      std::vector<std::size_t> order(t.size());
      std::iota(order.begin(), order.end(), 0);
      Rng rng = make_rng(derive_seed(seed, static_cast<std::uint64_t>(target)), kStreamFewShot);
      std::shuffle(order.begin(), order.end(), rng);
      Dataset eval = t;
      eval.examples.clear();
      for (std::size_t i = max_shot; i < order.size(); ++i) eval.examples.push_back(t.examples[order[i]]);
      const auto truth = eval.labels();
      for (std::size_t k : shots) {
        PipelineModels models{p.metric(), p.sampler(plan.sampler), p.classifier()};
        Dataset labelled = t;
        labelled.examples.clear();
        for (std::size_t i = 0; i < k; ++i) labelled.examples.push_back(t.examples[order[i]]);
        finetune_fewshot(models, labelled, cfg.metric, cfg.vae, cfg.gan, cfg.classifier, cfg.fewshot);
        const FeatureBank z = embed(models.metric, eval);
        const auto res = infer_features(z.features, models.sampler, models.classifier, cfg.projection, 1);
        std::vector<int> pred;
        for (const auto& r : res) pred.push_back(r.label);
        rows.push_back(make_row(plan, target, "full@shots=" + std::to_string(k),
                                to_string(plan.sampler), seed, accuracy(pred, truth)));
      }
    }
    return rows;
  });
}

}  // namespace tarpro
