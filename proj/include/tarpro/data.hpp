#pragma once

// Multi-domain synthetic datasets, CSV interchange and stratified splits.

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "tarpro/numerics.hpp"

namespace tarpro {

struct LabeledExample {
  std::vector<double> x;
  int label = 0;
  int domain = 0;

  bool operator==(const LabeledExample&) const = default;
};

struct Dataset {
  std::vector<LabeledExample> examples;
  std::size_t dim = 0;
  std::size_t num_classes = 0;
  std::vector<std::string> domain_names;

  std::size_t size() const { return examples.size(); }
  bool empty() const { return examples.empty(); }
  std::size_t num_domains() const { return domain_names.size(); }

  Tensor2 inputs() const;
  std::vector<int> labels() const;
  std::vector<int> domains() const;

  /// Examples whose domain is listed, keeping ids and names unchanged.
  Dataset filter_domains(const std::vector<int>& keep) const;
  /// Number of examples with the given (domain, class).
  std::size_t count(int domain, int label) const;

  /// Throws ShapeError when an invariant (dim, id ranges, finiteness) fails.
  void validate() const;

  bool operator==(const Dataset&) const = default;
};

/// Domain shift applied to every point of one domain. Rotations are about
/// the generator's layout centre.
struct ShiftSpec {
  enum class Kind { kNone, kRotation, kAffine };
  Kind kind = Kind::kNone;
  double rotation_deg = 0.0;
  std::vector<double> translation;  // empty = zero
  double scale = 1.0;
  std::uint64_t seed = 0;  // per-domain sampling stream

  static ShiftSpec none(std::uint64_t seed = 0) { return {Kind::kNone, 0.0, {}, 1.0, seed}; }
  static ShiftSpec rotation(double deg, std::uint64_t seed = 0) {
    return {Kind::kRotation, deg, {}, 1.0, seed};
  }
  static ShiftSpec affine(double deg, std::vector<double> translation, double scale,
                          std::uint64_t seed = 0) {
    return {Kind::kAffine, deg, std::move(translation), scale, seed};
  }

  std::string name() const;
};

/// Rotated/affinely shifted two-moons. Labels are moon membership, assigned
/// before the shift, with n/2 points per class in every domain.
Dataset gen_two_moons(const std::vector<ShiftSpec>& domains, std::size_t n_per_domain,
                      double noise_sd, std::uint64_t seed);

/// Unshifted two-moons sample for domain `index` (with per-domain stream
/// seed `domain_seed`); equals that domain's points under a zero rotation.
std::vector<LabeledExample> two_moons_base(std::size_t n, double noise_sd, std::uint64_t seed,
                                           std::size_t index, std::uint64_t domain_seed);

/// Isotropic Gaussian classes with means on the unit circle in the first two
/// coordinates; each domain is an affine map of all classes jointly.
Dataset gen_gaussian_classes(const std::vector<ShiftSpec>& domains, std::size_t n_per_domain,
                             std::size_t num_classes, std::size_t dim, std::uint64_t seed,
                             double noise_sd = 0.25);

/// Header `domain,label,x0,...`; values written with 17 significant digits.
void save_csv(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_csv(const std::filesystem::path& path);
std::string to_csv(const Dataset& dataset);
Dataset parse_csv(const std::string& text);

/// Stratified by (domain, class): each cell keeps round(fraction * n) rows in
/// the first result, the rest go to the second. Order within each part
/// follows the input order.
std::pair<Dataset, Dataset> split(const Dataset& dataset, double fraction, std::uint64_t seed);
Dataset subsample_fraction(const Dataset& dataset, double fraction, std::uint64_t seed);

/// Default benchmark: rotated two-moons, one domain per angle.
Dataset default_two_moons(const std::vector<double>& angles_deg, std::size_t n_per_domain,
                          double noise_sd, std::uint64_t seed);

}  // namespace tarpro
