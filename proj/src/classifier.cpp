#include "tarpro/classifier.hpp"

#include <algorithm>
#include <numeric>
#include <set>

namespace tarpro {

namespace {

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

void require_classes(std::span<const int> labels, std::size_t num_classes, const char* who) {
  if (labels.empty()) throw ShapeError(std::string(who) + ": empty training set");
  std::set<int> present(labels.begin(), labels.end());
  if (num_classes < 2) throw ShapeError(std::string(who) + ": need at least two classes");
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (!present.count(static_cast<int>(c))) {
      throw ShapeError(std::string(who) + ": class " + std::to_string(c) + " absent");
    }
  }
}

}  // namespace

ClassifierModel init_classifier(std::size_t feature_dim, std::size_t num_classes,
                                const ClassifierConfig& config) {
  Rng rng = make_rng(config.seed, kStreamClassifier);
  const std::size_t dims[] = {feature_dim, config.hidden, num_classes};
  ClassifierModel m;
  m.net = Mlp::init(dims, Activation::leaky_relu(0.2), Activation::identity(), rng);
  m.num_classes = num_classes;
  return m;
}

int argmax_logits(const RowVector& logits) {
  int best = 0;
  for (Eigen::Index c = 1; c < logits.size(); ++c) {
    if (logits(c) > logits(best)) best = static_cast<int>(c);
  }
  return best;
}

std::vector<int> predict(const ClassifierModel& model, const Tensor2& features) {
  const Tensor2 logits = model.net.forward(features);
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    out[static_cast<std::size_t>(r)] = argmax_logits(logits.row(r));
  }
  return out;
}

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size()) throw ShapeError("accuracy: length mismatch");
  if (truth.empty()) return 0.0;
  std::size_t ok = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) ok += predicted[i] == truth[i] ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(truth.size());
}

double evaluate(const ClassifierModel& model, const FeatureBank& bank) {
  return accuracy(predict(model, bank.features), bank.labels);
}

void fit_classifier(ClassifierModel& model, const Tensor2& features, std::span<const int> labels,
                    const ClassifierConfig& config, TrainingLog* log) {
  if (config.batch_size == 0) throw ShapeError("train_classifier: batch_size must be positive");
  Optimizer opt(AdamConfig{config.lr});
  Rng rng = make_rng(config.seed, kStreamClassifier + 100);
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), 0);
  auto record = [&] {
    if (log != nullptr) log->accuracy.push_back(accuracy(predict(model, features), labels));
  };
  record();
  Tensor2 dlogits;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t len = std::min(config.batch_size, order.size() - start);
      const std::span<const std::size_t> idx(order.data() + start, len);
      const Tensor2 xb = gather_rows(features, idx);
      const auto yb = gather(labels, idx);
      const auto cache = model.net.forward_cached(xb);
      epoch_loss += softmax_cross_entropy(cache.output, yb, &dlogits);
      ++batches;
      opt.step(model.net, model.net.backward(cache, dlogits));
    }
    if (log != nullptr) log->loss.push_back(epoch_loss / static_cast<double>(std::max<std::size_t>(1, batches)));
    record();
  }
}

ClassifierModel train_classifier(const FeatureBank& bank, const ClassifierConfig& config,
                                 TrainingLog* log) {
  require_classes(bank.labels, bank.num_classes, "train_classifier");
  ClassifierModel model = init_classifier(bank.dim(), bank.num_classes, config);
  fit_classifier(model, bank.features, bank.labels, config, log);
  return model;
}

std::vector<int> predict_deepall(const DeepAllModel& model, const Tensor2& inputs) {
  return predict(model.head, embed_inputs(model.extractor, inputs));
}

DeepAllModel train_deepall(const Dataset& sources, const DeepAllConfig& config,
                           TrainingLog* log) {
  const auto labels = sources.labels();
  require_classes(labels, sources.num_classes, "train_deepall");
  MetricConfig backbone_cfg = config.backbone;
  backbone_cfg.normalize = true;
  DeepAllModel model;
  // The extractor seed stream differs from the metric network's so the two
  // baselines are not accidentally coupled through identical inits.
  MetricConfig init_cfg = backbone_cfg;
  init_cfg.seed = derive_seed(backbone_cfg.seed, kStreamDeepAll);
  model.extractor = init_metric(sources.dim, init_cfg);

  if (config.freeze_backbone) {
    FeatureBank bank = embed(model.extractor, sources);
    model.head = train_classifier(bank, config.head, log);
    return model;
  }

  model.head = init_classifier(backbone_cfg.feature_dim, sources.num_classes, config.head);
  const Tensor2 x = sources.inputs();
  Optimizer backbone_opt(SgdConfig{backbone_cfg.lr, backbone_cfg.momentum});
  Optimizer head_opt(AdamConfig{config.head.lr});
  Rng rng = make_rng(backbone_cfg.seed, kStreamDeepAll + 100);
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), 0);
  auto record = [&] {
    if (log != nullptr) log->accuracy.push_back(accuracy(predict_deepall(model, x), labels));
  };
  record();
  Tensor2 dlogits;
  for (std::size_t epoch = 0; epoch < backbone_cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += backbone_cfg.batch_size) {
      const std::size_t len = std::min(backbone_cfg.batch_size, order.size() - start);
      const std::span<const std::size_t> idx(order.data() + start, len);
      const Tensor2 xb = gather_rows(x, idx);
      const auto yb = gather(labels, idx);
      const auto bcache = model.extractor.net.forward_cached(xb);
      Tensor2 norms;
      const Tensor2 unit = normalize_rows(bcache.output, &norms);
      const auto hcache = model.head.net.forward_cached(unit);
      epoch_loss += softmax_cross_entropy(hcache.output, yb, &dlogits);
      ++batches;
      Tensor2 dunit;
      const MlpGrads head_grads = model.head.net.backward(hcache, dlogits, &dunit);
      const Tensor2 dz = normalize_rows_backward(unit, norms, dunit);
      const MlpGrads backbone_grads = model.extractor.net.backward(bcache, dz);
      head_opt.step(model.head.net, head_grads);
      backbone_opt.step(model.extractor.net, backbone_grads);
    }
    if (log != nullptr) log->loss.push_back(epoch_loss / static_cast<double>(std::max<std::size_t>(1, batches)));
    record();
  }
  return model;
}

void finetune_fewshot(PipelineModels& models, const Dataset& target_samples,
                      const MetricConfig& metric_cfg, const VaeConfig& vae_cfg,
                      const GanConfig& gan_cfg, const ClassifierConfig& cls_cfg,
                      const FewShotConfig& config) {
  if (config.epochs == 0 || target_samples.empty()) return;
  const std::uint64_t seed = derive_seed(config.seed, kStreamFewShot);

  MetricConfig mc = metric_cfg;
  mc.lr *= config.lr_scale;
  mc.epochs = config.epochs;
  mc.seed = seed;
  fit_metric(models.metric, target_samples, mc);

  const FeatureBank bank = embed(models.metric, target_samples);
  if (auto* vae = std::get_if<VaeModel>(&models.sampler)) {
    VaeConfig vc = vae_cfg;
    vc.lr *= config.lr_scale;
    vc.epochs = config.epochs;
    vc.seed = seed;
    fit_vae(*vae, bank.features, vc);
  } else if (auto* gan = std::get_if<GanModel>(&models.sampler)) {
    GanConfig gc = gan_cfg;
    gc.lr *= config.lr_scale;
    gc.epochs = config.epochs;
    gc.seed = seed;
    fit_gan(*gan, bank.features, gc);
  } else if (auto* knn = std::get_if<KnnSampler>(&models.sampler)) {
    // Retrieval has no parameters; the labelled target rows join the bank.
    // Source rows keep their pre-adaptation embedding.
    auto& kb = knn->bank;
    const auto old_rows = kb.features.rows();
    kb.features.conservativeResize(old_rows + bank.features.rows(), Eigen::NoChange);
    kb.features.bottomRows(bank.features.rows()) = bank.features;
    kb.labels.insert(kb.labels.end(), bank.labels.begin(), bank.labels.end());
    kb.domains.insert(kb.domains.end(), bank.domains.begin(), bank.domains.end());
  }

  ClassifierConfig cc = cls_cfg;
  cc.lr *= config.lr_scale;
  cc.epochs = config.epochs;
  cc.seed = seed;
  fit_classifier(models.classifier, bank.features, bank.labels, cc);
}

}  // namespace tarpro
