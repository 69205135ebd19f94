#pragma once

// Divergence and clustering diagnostics: A-distance between domains, exact
// H-divergence on finite instances, class clustering statistics, and the
// empirical decomposition of the projected-target risk bound.

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tarpro/metric.hpp"
#include "tarpro/numerics.hpp"

namespace tarpro {

struct DiscriminatorConfig {
  std::size_t hidden = 16;
  double lr = 0.01;  // Adam
  std::size_t epochs = 60;
  std::size_t batch_size = 64;
  double train_fraction = 0.5;
  std::uint64_t seed = 0;
};

struct DivergenceReport {
  std::pair<int, int> pair{0, 1};
  double discriminator_error = 0.5;  // held-out
  double a_distance_raw = 0.0;       // 2 (1 - 2 err), in [-2, 2]
  double a_distance = 0.0;           // clamped to [0, 2]
};

/// Trains a one-hidden-layer domain discriminator on a train split of A vs B
/// (the larger side is subsampled to the smaller) and reports the proxy
/// A-distance from its held-out error.
DivergenceReport a_distance(const Tensor2& features_a, const Tensor2& features_b,
                            const DiscriminatorConfig& config, std::pair<int, int> pair = {0, 1});

/// sup over hypotheses of |P_A[h = 1] - P_B[h = 1]|. Distributions are
/// probability vectors over a shared finite point set; each hypothesis is a
/// 0/1 labelling of those points.
double exact_h_divergence(const std::vector<double>& dist_a, const std::vector<double>& dist_b,
                          const std::vector<std::vector<int>>& hypotheses);

/// Every 0/1 labelling of n points (2^n hypotheses); n <= 20.
std::vector<std::vector<int>> all_labelings(std::size_t n);

struct ClusterStats {
  double intra_mean = 0.0;
  double inter_mean = 0.0;
  double margin = 0.0;
  std::vector<int> excluded_classes;  // fewer than two members
};

/// Mean pairwise cosine within classes (self-pairs excluded) and across classes.
ClusterStats cluster_stats(const FeatureBank& bank);

/// Per-class mean direction of the bank rows, one row per class.
Tensor2 class_centroids(const FeatureBank& bank);

/// Index of the centroid with the highest cosine similarity, per row.
std::vector<int> quantize_to_centroids(const Tensor2& features, const Tensor2& centroids);

struct CollapsedDivergence {
  double h_divergence = 0.0;
  std::vector<double> dist_a;
  std::vector<double> dist_b;
  std::size_t per_class = 0;       // examples kept per class and domain
  std::size_t mismatched = 0;      // rows dropped: nearest centroid is another class
};

/// Quantizes two domains' features to the nearest class centroid, drops rows
/// that land on another class's centroid, equalizes class priors by
/// subsampling each domain to the same count per class, and
/// evaluates exact_h_divergence over every labelling of the centroids.
CollapsedDivergence collapsed_h_divergence(const FeatureBank& bank, int domain_a, int domain_b,
                                           std::uint64_t seed);

struct BoundReport {
  double lhs = 0.0;      // E|g(z_t) - h(z_t*)|
  double term_i = 0.0;   // E|g(z_t*) - h(z_t*)|
  double term_ii = 0.0;  // E|g(z_t) - g(z_t*)|
};

/// 0/1 disagreement rates from true target labels, classifier predictions on
/// the projections, and oracle labels of the projections.
BoundReport bound_terms(std::span<const int> truth, std::span<const int> predicted,
                        std::span<const int> oracle);

/// Label of the bank row with the highest cosine similarity, per row of z.
std::vector<int> nearest_bank_labels(const FeatureBank& bank, const Tensor2& z);

struct ReportRow {
  std::string name;
  std::string scope;
  double value = 0.0;
};

/// `name,pair_or_scope,value`
std::string report_csv(const std::vector<ReportRow>& rows);

}  // namespace tarpro
