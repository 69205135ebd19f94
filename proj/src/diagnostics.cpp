#include "tarpro/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <limits>
#include <numeric>

#include "tarpro/classifier.hpp"
#include "tarpro/log.hpp"

namespace tarpro {

namespace {

Tensor2 take_rows(const Tensor2& src, const std::vector<std::size_t>& idx) {
  Tensor2 out(static_cast<Eigen::Index>(idx.size()), src.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = src.row(static_cast<Eigen::Index>(idx[i]));
  }
  return out;
}

Tensor2 unit_rows(const Tensor2& x, const char* who) {
  Tensor2 out = x;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double n = out.row(r).norm();
    if (!(n > 0.0)) {
      throw NumericError(std::string(who) + ": zero feature row " + std::to_string(r));
    }
    out.row(r) /= n;
  }
  return out;
}

}  // namespace

DivergenceReport a_distance(const Tensor2& features_a, const Tensor2& features_b,
                            const DiscriminatorConfig& config, std::pair<int, int> pair) {
  if (features_a.rows() == 0 || features_b.rows() == 0) {
    throw ShapeError("a_distance: empty feature set");
  }
  if (features_a.cols() != features_b.cols()) throw ShapeError("a_distance: dimension mismatch");
  if (!(config.train_fraction > 0.0 && config.train_fraction < 1.0)) {
    throw ShapeError("a_distance: train_fraction must lie in (0, 1)");
  }
  Rng rng = make_rng(config.seed, kStreamDiscriminator);
  const auto n = static_cast<std::size_t>(std::min(features_a.rows(), features_b.rows()));
  auto pick = [&](const Tensor2& f) {
    std::vector<std::size_t> idx(static_cast<std::size_t>(f.rows()));
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(n);
    return idx;
  };
  const auto ia = pick(features_a);
  const auto ib = pick(features_b);
  const auto n_train = static_cast<std::size_t>(std::floor(config.train_fraction * static_cast<double>(n)));
  if (n_train == 0 || n_train == n) {
    throw ShapeError("a_distance: degenerate split with " + std::to_string(n) + " rows per side");
  }
  const std::vector<std::size_t> ta(ia.begin(), ia.begin() + static_cast<std::ptrdiff_t>(n_train));
  const std::vector<std::size_t> tb(ib.begin(), ib.begin() + static_cast<std::ptrdiff_t>(n_train));
  const std::vector<std::size_t> ha(ia.begin() + static_cast<std::ptrdiff_t>(n_train), ia.end());
  const std::vector<std::size_t> hb(ib.begin() + static_cast<std::ptrdiff_t>(n_train), ib.end());

  Tensor2 train(static_cast<Eigen::Index>(2 * n_train), features_a.cols());
  train << take_rows(features_a, ta), take_rows(features_b, tb);
  Tensor2 held(static_cast<Eigen::Index>(ha.size() + hb.size()), features_a.cols());
  held << take_rows(features_a, ha), take_rows(features_b, hb);
  std::vector<int> train_y(2 * n_train, 0);
  std::fill(train_y.begin() + static_cast<std::ptrdiff_t>(n_train), train_y.end(), 1);
  std::vector<int> held_y(ha.size() + hb.size(), 0);
  std::fill(held_y.begin() + static_cast<std::ptrdiff_t>(ha.size()), held_y.end(), 1);

  // Standardize with train statistics so raw inputs and unit features train alike.
  const RowVector mean = train.colwise().mean();
  RowVector sd = ((train.rowwise() - mean).array().square().colwise().mean()).sqrt().matrix();
  for (Eigen::Index c = 0; c < sd.size(); ++c) {
    if (!(sd(c) > 1e-12)) sd(c) = 1.0;
  }
  auto standardize = [&](Tensor2& t) {
    t = ((t.rowwise() - mean).array().rowwise() / sd.array()).matrix();
  };
  standardize(train);
  standardize(held);

  ClassifierConfig cc;
  cc.hidden = config.hidden;
  cc.lr = config.lr;
  cc.epochs = config.epochs;
  cc.batch_size = config.batch_size;
  cc.seed = derive_seed(config.seed, kStreamDiscriminator);
  ClassifierModel disc = init_classifier(static_cast<std::size_t>(train.cols()), 2, cc);
  fit_classifier(disc, train, train_y, cc);

  DivergenceReport r;
  r.pair = pair;
  r.discriminator_error = 1.0 - accuracy(predict(disc, held), held_y);
  r.a_distance_raw = 2.0 * (1.0 - 2.0 * r.discriminator_error);
  r.a_distance = std::clamp(r.a_distance_raw, 0.0, 2.0);
  return r;
}

double exact_h_divergence(const std::vector<double>& dist_a, const std::vector<double>& dist_b,
                          const std::vector<std::vector<int>>& hypotheses) {
  if (dist_a.size() != dist_b.size()) {
    throw ShapeError("exact_h_divergence: distributions over different supports");
  }
  double best = 0.0;
  for (const auto& h : hypotheses) {
    if (h.size() != dist_a.size()) throw ShapeError("exact_h_divergence: hypothesis size mismatch");
    double pa = 0.0;
    double pb = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i) {
      if (h[i] != 0) {
        pa += dist_a[i];
        pb += dist_b[i];
      }
    }
    best = std::max(best, std::abs(pa - pb));
  }
  return std::min(best, 1.0);
}

std::vector<std::vector<int>> all_labelings(std::size_t n) {
  if (n > 20) throw ShapeError("all_labelings: at most 20 points");
  std::vector<std::vector<int>> out(std::size_t{1} << n, std::vector<int>(n));
  for (std::size_t mask = 0; mask < out.size(); ++mask) {
    for (std::size_t i = 0; i < n; ++i) out[mask][i] = static_cast<int>((mask >> i) & 1U);
  }
  return out;
}

ClusterStats cluster_stats(const FeatureBank& bank) {
  if (bank.features.rows() != static_cast<Eigen::Index>(bank.labels.size())) {
    throw ShapeError("cluster_stats: label count mismatch");
  }
  std::map<int, std::size_t> counts;
  for (int y : bank.labels) ++counts[y];
  if (counts.size() < 2) throw ShapeError("cluster_stats: need at least two classes");
  ClusterStats s;
  for (const auto& [c, k] : counts) {
    if (k < 2) {
      s.excluded_classes.push_back(c);
      log_warn("cluster_stats: class " + std::to_string(c) + " has one member; excluded from intra");
    }
  }
  const Tensor2 u = unit_rows(bank.features, "cluster_stats");
  const Tensor2 gram = u * u.transpose();
  double intra = 0.0;
  double inter = 0.0;
  std::size_t n_intra = 0;
  std::size_t n_inter = 0;
  const std::size_t n = bank.labels.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double g = std::clamp(gram(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)), -1.0, 1.0);
      if (bank.labels[i] == bank.labels[j]) {
        intra += g;
        ++n_intra;
      } else {
        inter += g;
        ++n_inter;
      }
    }
  }
  s.intra_mean = n_intra > 0 ? intra / static_cast<double>(n_intra) : 0.0;
  s.inter_mean = n_inter > 0 ? inter / static_cast<double>(n_inter) : 0.0;
  s.margin = s.intra_mean - s.inter_mean;
  return s;
}

Tensor2 class_centroids(const FeatureBank& bank) {
  if (bank.num_classes == 0) throw ShapeError("class_centroids: no classes");
  const Tensor2 u = unit_rows(bank.features, "class_centroids");
  Tensor2 c = Tensor2::Zero(static_cast<Eigen::Index>(bank.num_classes), u.cols());
  std::vector<std::size_t> k(bank.num_classes, 0);
  for (std::size_t i = 0; i < bank.labels.size(); ++i) {
    const auto y = static_cast<std::size_t>(bank.labels[i]);
    c.row(static_cast<Eigen::Index>(y)) += u.row(static_cast<Eigen::Index>(i));
    ++k[y];
  }
  for (std::size_t y = 0; y < k.size(); ++y) {
    if (k[y] == 0) throw ShapeError("class_centroids: class " + std::to_string(y) + " absent");
    c.row(static_cast<Eigen::Index>(y)) /= static_cast<double>(k[y]);
  }
  return c;
}

std::vector<int> quantize_to_centroids(const Tensor2& features, const Tensor2& centroids) {
  if (features.cols() != centroids.cols()) throw ShapeError("quantize_to_centroids: dimension mismatch");
  const Tensor2 sims = unit_rows(features, "quantize") * unit_rows(centroids, "quantize").transpose();
  std::vector<int> out(static_cast<std::size_t>(features.rows()));
  for (Eigen::Index r = 0; r < sims.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < sims.cols(); ++c) {
      if (sims(r, c) > sims(r, best)) best = c;
    }
    out[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return out;
}

CollapsedDivergence collapsed_h_divergence(const FeatureBank& bank, int domain_a, int domain_b,
                                           std::uint64_t seed) {
  const Tensor2 centroids = class_centroids(bank);
  const auto cells = quantize_to_centroids(bank.features, centroids);
  const std::size_t C = bank.num_classes;
  CollapsedDivergence out;
  // rows[d][c]: indices of domain d (0 = a, 1 = b) with true class c that
  // quantize to their own class centroid
  std::vector<std::vector<std::vector<std::size_t>>> rows(2, std::vector<std::vector<std::size_t>>(C));
  for (std::size_t i = 0; i < bank.labels.size(); ++i) {
    const int d = bank.domains[i] == domain_a ? 0 : bank.domains[i] == domain_b ? 1 : -1;
    if (d < 0) continue;
    if (cells[i] != bank.labels[i]) {
      ++out.mismatched;
      continue;
    }
    rows[static_cast<std::size_t>(d)][static_cast<std::size_t>(bank.labels[i])].push_back(i);
  }
  Rng rng = make_rng(seed, kStreamSplit);
  out.dist_a.assign(C, 0.0);
  out.dist_b.assign(C, 0.0);
  std::size_t per_class = std::numeric_limits<std::size_t>::max();
  for (std::size_t c = 0; c < C; ++c) {
    per_class = std::min({per_class, rows[0][c].size(), rows[1][c].size()});
  }
  if (per_class == 0) throw ShapeError("collapsed_h_divergence: a class is missing from a domain");
  out.per_class = per_class;
  std::vector<std::size_t> hist_a(C, 0);
  std::vector<std::size_t> hist_b(C, 0);
  for (std::size_t d = 0; d < 2; ++d) {
    auto& hist = d == 0 ? hist_a : hist_b;
    for (std::size_t c = 0; c < C; ++c) {
      auto idx = rows[d][c];
      std::shuffle(idx.begin(), idx.end(), rng);
      for (std::size_t k = 0; k < per_class; ++k) {
        ++hist[static_cast<std::size_t>(cells[idx[k]])];
      }
    }
  }
  const double total = static_cast<double>(per_class * C);
  for (std::size_t c = 0; c < C; ++c) {
    out.dist_a[c] = static_cast<double>(hist_a[c]) / total;
    out.dist_b[c] = static_cast<double>(hist_b[c]) / total;
  }
  out.h_divergence = exact_h_divergence(out.dist_a, out.dist_b, all_labelings(C));
  return out;
}

BoundReport bound_terms(std::span<const int> truth, std::span<const int> predicted,
                        std::span<const int> oracle) {
  if (truth.size() != predicted.size() || truth.size() != oracle.size()) {
    throw ShapeError("bound_terms: length mismatch");
  }
  BoundReport r;
  if (truth.empty()) return r;
  std::size_t lhs = 0;
  std::size_t ti = 0;
  std::size_t tii = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    lhs += truth[i] != predicted[i] ? 1 : 0;
    ti += oracle[i] != predicted[i] ? 1 : 0;
    tii += truth[i] != oracle[i] ? 1 : 0;
  }
  const double n = static_cast<double>(truth.size());
  r.lhs = static_cast<double>(lhs) / n;
  r.term_i = static_cast<double>(ti) / n;
  r.term_ii = static_cast<double>(tii) / n;
  return r;
}

std::vector<int> nearest_bank_labels(const FeatureBank& bank, const Tensor2& z) {
  if (bank.size() == 0) throw ShapeError("nearest_bank_labels: empty bank");
  if (z.cols() != bank.features.cols()) throw ShapeError("nearest_bank_labels: dimension mismatch");
  const Tensor2 sims = unit_rows(z, "nearest_bank_labels") *
                       unit_rows(bank.features, "nearest_bank_labels").transpose();
  std::vector<int> out(static_cast<std::size_t>(z.rows()));
  for (Eigen::Index r = 0; r < sims.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < sims.cols(); ++c) {
      if (sims(r, c) > sims(r, best)) best = c;
    }
    out[static_cast<std::size_t>(r)] = bank.labels[static_cast<std::size_t>(best)];
  }
  return out;
}

std::string report_csv(const std::vector<ReportRow>& rows) {
  std::string out = "name,pair_or_scope,value\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g", r.value);
    out += r.name + "," + r.scope + "," + buf + "\n";
  }
  return out;
}

}  // namespace tarpro
