#include "doctest.h"

#include <cmath>
#include <numeric>
#include <set>

#include "tarpro/experiments.hpp"

using namespace tarpro;

namespace {

// Small enough that every runner finishes in a few seconds.
ExperimentPlan tiny_plan() {
  ExperimentPlan p;
  p.name = "tiny";
  p.dataset.n_per_domain = 60;
  p.seeds = {0, 1};
  PipelineConfig& c = p.config;
  c.metric.hidden = {16, 16};
  c.metric.feature_dim = 6;
  c.metric.epochs = 15;
  c.classifier.epochs = 10;
  c.vae.hidden = {8};
  c.vae.latent_dim = 3;
  c.vae.epochs = 10;
  c.gan.hidden = {8};
  c.gan.latent_dim = 3;
  c.gan.epochs = 5;
  c.projection.max_iters = 40;
  c.projection.window = 5;
  c.projection.restarts = 1;
  c.fewshot.epochs = 2;
  return p;
}

}  // namespace

TEST_CASE("plan validation") {
  ExperimentPlan p = tiny_plan();
  p.validate();
  p.targets = {1};
  CHECK_THROWS_AS(p.validate(), ShapeError);
  p = tiny_plan();
  p.seeds.clear();
  CHECK_THROWS_AS(p.validate(), ShapeError);
  p = tiny_plan();
  p.sources = {0, 7};
  CHECK_THROWS_AS(p.validate(), ShapeError);
  CHECK(parse_variant("no_G_phi") == Variant::kNoGPhi);
  CHECK(to_string(SamplerKind::kKnn) == "knn");
  CHECK_THROWS(parse_sampler("flow"));
}

TEST_CASE("ablation: four variants per seed, deterministic, valid accuracies") {
  const ExperimentPlan p = tiny_plan();
  const ResultTable t = run_ablation(p);
  CHECK(t.rows.size() == 4 * p.seeds.size());
  std::set<std::string> variants;
  for (const auto& r : t.rows) {
    variants.insert(r.variant);
    CHECK(r.accuracy >= 0.0);
    CHECK(r.accuracy <= 1.0);
    CHECK(r.target == 3);
  }
  CHECK(variants == std::set<std::string>{"full", "no_f_theta", "no_G_phi", "deepall"});
  CHECK(results_csv(run_ablation(p)) == results_csv(t));
}

TEST_CASE("aggregate: mean and sample sd recomputed by hand") {
  ResultTable t;
  for (std::uint64_t s = 0; s < 3; ++s) t.rows.push_back({"e", 3, "full", "vae", s, 0.5 + 0.1 * static_cast<double>(s)});
  t.rows.push_back({"e", 3, "deepall", "none", 0, 0.4});
  const auto agg = t.aggregate();
  REQUIRE(agg.size() == 2);
  CHECK(agg[0].n == 3);
  CHECK(agg[0].mean == doctest::Approx(0.6).epsilon(1e-14));
  CHECK(agg[0].sd == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(agg[1].sd == 0.0);
  CHECK(t.mean("full", "vae") == doctest::Approx(0.6));
  CHECK(aggregate_csv(t).rfind("experiment,target,variant,sampler,n,mean,sd\n", 0) == 0);
  CHECK(results_csv(t).rfind("experiment,target,variant,sampler,seed,accuracy\n", 0) == 0);
}

TEST_CASE("sampler comparison: three samplers per seed, knn reruns identically") {
  const ExperimentPlan p = tiny_plan();
  const ResultTable t = run_sampler_comparison(p);
  CHECK(t.rows.size() == 3 * p.seeds.size());
  const ResultTable again = run_sampler_comparison(p);
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    if (t.rows[i].sampler == "knn") CHECK(t.rows[i].accuracy == again.rows[i].accuracy);
  }
}

TEST_CASE("fraction sweep: one row per fraction and seed; fraction 1 equals the standard run") {
  const ExperimentPlan p = tiny_plan();
  const std::vector<double> fr{0.5, 1.0};
  const ResultTable t = run_fraction_sweep(p, fr);
  CHECK(t.rows.size() == fr.size() * p.seeds.size());
  ExperimentPlan full = p;
  full.variant = Variant::kFull;
  const ResultTable standard = run_sampler_comparison(full);
  for (const auto& r : t.rows) {
    if (r.variant != "full@fraction=1") continue;
    for (const auto& s : standard.rows) {
      if (s.sampler == "vae" && s.seed == r.seed) CHECK(s.accuracy == r.accuracy);
    }
  }
}

TEST_CASE("single source, beta, epsilon and few-shot runners have the planned shape") {
  ExperimentPlan p = tiny_plan();
  p.seeds = {0};
  // 3 sources x 3 other domains x 4 variants
  CHECK(run_single_source(p).rows.size() == 36);
  CHECK(run_beta_sweep(p, {0.05, 0.01}).rows.size() == 2);
  const ResultTable eps = run_epsilon_sweep(p, {-10, 0, 10});
  CHECK(eps.rows.size() == 3);
  CHECK(eps.rows[1].accuracy == run_beta_sweep(p, {p.config.projection.beta}).rows[0].accuracy);
  ExperimentPlan knn = p;
  knn.sampler = SamplerKind::kKnn;
  CHECK_THROWS(run_epsilon_sweep(knn, {0}));
  const ResultTable shots = run_fewshot(p, {0, 3, 5});
  REQUIRE(shots.rows.size() == 3);
  CHECK(shots.rows[0].variant == "full@shots=0");
}
