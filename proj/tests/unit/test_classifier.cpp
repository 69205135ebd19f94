#include "doctest.h"
#include "helpers.hpp"

#include <cmath>

#include "tarpro/classifier.hpp"

using namespace tarpro;
using tarpro::test::random_tensor;

namespace {

FeatureBank clustered_bank(std::size_t per_class, std::size_t classes, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> n(0.0, 0.05);
  FeatureBank b;
  b.num_classes = classes;
  b.features.resize(static_cast<Eigen::Index>(per_class * classes), static_cast<Eigen::Index>(classes + 2));
  Eigen::Index r = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t i = 0; i < per_class; ++i, ++r) {
      for (Eigen::Index k = 0; k < b.features.cols(); ++k) b.features(r, k) = n(rng);
      b.features(r, static_cast<Eigen::Index>(c)) += 1.0;
      b.labels.push_back(static_cast<int>(c));
      b.domains.push_back(0);
    }
  }
  return b;
}

}  // namespace

TEST_CASE("argmax: larger logit wins, ties go to the lowest class") {
  RowVector a(2);
  a << 0.2, 0.9;
  CHECK(argmax_logits(a) == 1);
  RowVector t(3);
  t << 0.5, 0.5, 0.5;
  CHECK(argmax_logits(t) == 0);
}

TEST_CASE("predict is invariant to a constant added to every logit") {
  Rng rng(1);
  ClassifierModel m = init_classifier(4, 3, ClassifierConfig{});
  const Tensor2 x = random_tensor(50, 4, rng);
  const auto before = predict(m, x);
  m.net.layers().back().bias.array() += 3.25;
  CHECK(predict(m, x) == before);
}

TEST_CASE("train_classifier: separated clusters reach 0.99, log matches evaluate") {
  const FeatureBank b = clustered_bank(60, 3, 2);
  TrainingLog log;
  const ClassifierModel m = train_classifier(b, ClassifierConfig{}, &log);
  CHECK(evaluate(m, b) >= 0.99);
  CHECK(log.accuracy.back() == evaluate(m, b));
  CHECK(train_classifier(b, ClassifierConfig{}) == m);
}

TEST_CASE("train_classifier: zero epochs is chance level on label-independent features") {
  Rng rng(8);
  FeatureBank b;
  b.num_classes = 2;
  const std::size_t n = 400;
  b.features = random_tensor(static_cast<Eigen::Index>(n), 5, rng);
  for (std::size_t i = 0; i < n; ++i) {
    b.labels.push_back(static_cast<int>(rng() % 2));
    b.domains.push_back(0);
  }
  ClassifierConfig c;
  c.epochs = 0;
  const double acc = evaluate(train_classifier(b, c), b);
  CHECK(std::abs(acc - 0.5) <= 3.0 * std::sqrt(0.25 / static_cast<double>(n)));
}

TEST_CASE("train_classifier: absent class is an error") {
  FeatureBank b = clustered_bank(10, 3, 1);
  b.labels.assign(b.labels.size(), 0);
  CHECK_THROWS_AS(train_classifier(b, ClassifierConfig{}), ShapeError);
}

TEST_CASE("accuracy is the mean of correctness indicators") {
  const std::vector<int> p{0, 1, 1, 2}, t{0, 1, 2, 2};
  CHECK(accuracy(p, t) == 0.75);
}

TEST_CASE("deep all: frozen backbone on one domain equals train_classifier on its features") {
  const Dataset d = default_two_moons({0}, 80, 0.1, 3);
  DeepAllConfig c;
  c.backbone.hidden = {16, 16};
  c.backbone.feature_dim = 8;
  c.backbone.seed = 5;
  c.head.seed = 5;
  c.freeze_backbone = true;
  const DeepAllModel m = train_deepall(d, c);
  const ClassifierModel direct = train_classifier(embed(m.extractor, d), c.head);
  CHECK(m.head == direct);
}

TEST_CASE("deep all: deterministic per seed and fits the pooled sources") {
  const Dataset all = default_two_moons({0, 15, 30, 45}, 300, 0.08, 0);
  const Dataset src = all.filter_domains({0, 1, 2});
  DeepAllConfig c;
  const DeepAllModel a = train_deepall(src, c);
  CHECK(accuracy(predict_deepall(a, src.inputs()), src.labels()) >= 0.9);
  CHECK(train_deepall(src, c) == a);
}

TEST_CASE("few-shot: zero epochs leaves every model unchanged") {
  const Dataset d = default_two_moons({0, 45}, 60, 0.1, 2);
  MetricConfig mc;
  mc.hidden = {8};
  mc.feature_dim = 4;
  mc.epochs = 2;
  PipelineModels models;
  models.metric = train_metric(d.filter_domains({0}), mc);
  const FeatureBank bank = embed(models.metric, d.filter_domains({0}));
  VaeConfig vc;
  vc.epochs = 2;
  models.sampler = train_vae(bank, vc);
  models.classifier = train_classifier(bank, ClassifierConfig{});
  const PipelineModels before = models;
  FewShotConfig fc;
  fc.epochs = 0;
  finetune_fewshot(models, d.filter_domains({1}), mc, vc, GanConfig{}, ClassifierConfig{}, fc);
  CHECK(models.metric == before.metric);
  CHECK(std::get<VaeModel>(models.sampler) == std::get<VaeModel>(before.sampler));
  CHECK(models.classifier == before.classifier);
  fc.epochs = 3;
  finetune_fewshot(models, d.filter_domains({1}), mc, vc, GanConfig{}, ClassifierConfig{}, fc);
  CHECK(!(models.metric == before.metric));
}
