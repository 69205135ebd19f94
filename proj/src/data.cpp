#include "tarpro/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "tarpro/log.hpp"

namespace tarpro {

Tensor2 Dataset::inputs() const {
  Tensor2 out(static_cast<Eigen::Index>(examples.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t r = 0; r < examples.size(); ++r) {
    for (std::size_t c = 0; c < dim; ++c) {
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = examples[r].x[c];
    }
  }
  return out;
}

std::vector<int> Dataset::labels() const {
  std::vector<int> out;
  out.reserve(examples.size());
  for (const auto& e : examples) out.push_back(e.label);
  return out;
}

std::vector<int> Dataset::domains() const {
  std::vector<int> out;
  out.reserve(examples.size());
  for (const auto& e : examples) out.push_back(e.domain);
  return out;
}

Dataset Dataset::filter_domains(const std::vector<int>& keep) const {
  Dataset out;
  out.dim = dim;
  out.num_classes = num_classes;
  out.domain_names = domain_names;
  for (const auto& e : examples) {
    if (std::find(keep.begin(), keep.end(), e.domain) != keep.end()) out.examples.push_back(e);
  }
  return out;
}

std::size_t Dataset::count(int domain, int label) const {
  return static_cast<std::size_t>(std::count_if(examples.begin(), examples.end(), [&](const auto& e) {
    return e.domain == domain && e.label == label;
  }));
}

void Dataset::validate() const {
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& e = examples[i];
    if (e.x.size() != dim) {
      throw ShapeError("example " + std::to_string(i) + " has dim " + std::to_string(e.x.size()) +
                       ", dataset dim is " + std::to_string(dim));
    }
    if (e.label < 0 || static_cast<std::size_t>(e.label) >= num_classes) {
      throw ShapeError("example " + std::to_string(i) + " label out of range");
    }
    if (e.domain < 0 || static_cast<std::size_t>(e.domain) >= domain_names.size()) {
      throw ShapeError("example " + std::to_string(i) + " domain out of range");
    }
    for (double v : e.x) {
      if (!std::isfinite(v)) throw NumericError("example " + std::to_string(i) + " not finite");
    }
  }
}

std::string ShiftSpec::name() const {
  char buf[64];
  switch (kind) {
    case Kind::kNone:
      return "none";
    case Kind::kRotation:
      std::snprintf(buf, sizeof buf, "rot%g", rotation_deg);
      return buf;
    case Kind::kAffine:
      std::snprintf(buf, sizeof buf, "affine%g_s%g", rotation_deg, scale);
      return buf;
  }
  return "?";
}

namespace {

constexpr double kMoonCentreX = 0.5;
constexpr double kMoonCentreY = 0.25;

bool is_identity(const ShiftSpec& s) {
  if (s.kind == ShiftSpec::Kind::kNone) return true;
  if (s.rotation_deg != 0.0 || s.scale != 1.0) return false;
  return std::all_of(s.translation.begin(), s.translation.end(), [](double t) { return t == 0.0; });
}

void check_shift(const ShiftSpec& s, std::size_t dim) {
  if (!(s.scale > 0.0)) throw ShapeError("shift scale must be positive");
  if (!s.translation.empty() && s.translation.size() != dim) {
    throw ShapeError("shift translation has dim " + std::to_string(s.translation.size()) +
                     ", data dim is " + std::to_string(dim));
  }
}

// x <- centre + scale * R(theta) (x - centre) + t, rotating the first two axes.
void apply_shift(const ShiftSpec& s, std::vector<double>& x, double cx, double cy) {
  if (is_identity(s)) return;
  const double th = s.rotation_deg * std::numbers::pi / 180.0;
  const double c = std::cos(th);
  const double sn = std::sin(th);
  const double dx = x[0] - cx;
  const double dy = x[1] - cy;
  x[0] = cx + s.scale * (c * dx - sn * dy);
  x[1] = cy + s.scale * (sn * dx + c * dy);
  for (std::size_t k = 2; k < x.size(); ++k) x[k] *= s.scale;
  for (std::size_t k = 0; k < s.translation.size(); ++k) x[k] += s.translation[k];
}

Rng domain_rng(std::uint64_t seed, std::size_t index, std::uint64_t domain_seed) {
  return Rng(derive_seed(derive_seed(seed, kStreamData) ^ mix64(index), domain_seed));
}

std::size_t per_class(std::size_t n_per_domain, std::size_t classes) {
  if (n_per_domain % classes != 0) {
    log_warn("n_per_domain " + std::to_string(n_per_domain) + " not divisible by " +
             std::to_string(classes) + " classes; rounding down per class");
  }
  return n_per_domain / classes;
}

}  // namespace

std::vector<LabeledExample> two_moons_base(std::size_t n, double noise_sd, std::uint64_t seed,
                                           std::size_t index, std::uint64_t domain_seed) {
  if (noise_sd < 0.0) throw ShapeError("noise_sd must be non-negative");
  const std::size_t half = per_class(n, 2);
  Rng rng = domain_rng(seed, index, domain_seed);
  std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<LabeledExample> out;
  out.reserve(2 * half);
  for (int label = 0; label < 2; ++label) {
    for (std::size_t i = 0; i < half; ++i) {
      const double t = angle(rng);
      double x = label == 0 ? std::cos(t) : 1.0 - std::cos(t);
      double y = label == 0 ? std::sin(t) : 0.5 - std::sin(t);
      x += noise_sd * noise(rng);
      y += noise_sd * noise(rng);
      out.push_back({{x, y}, label, static_cast<int>(index)});
    }
  }
  return out;
}

Dataset gen_two_moons(const std::vector<ShiftSpec>& domains, std::size_t n_per_domain,
                      double noise_sd, std::uint64_t seed) {
  Dataset ds;
  ds.dim = 2;
  ds.num_classes = 2;
  for (std::size_t d = 0; d < domains.size(); ++d) {
    check_shift(domains[d], 2);
    ds.domain_names.push_back(domains[d].name());
    auto pts = two_moons_base(n_per_domain, noise_sd, seed, d, domains[d].seed);
    for (auto& p : pts) {
      apply_shift(domains[d], p.x, kMoonCentreX, kMoonCentreY);
      ds.examples.push_back(std::move(p));
    }
  }
  return ds;
}

Dataset gen_gaussian_classes(const std::vector<ShiftSpec>& domains, std::size_t n_per_domain,
                             std::size_t num_classes, std::size_t dim, std::uint64_t seed,
                             double noise_sd) {
  if (num_classes < 2) throw ShapeError("gen_gaussian_classes needs at least 2 classes");
  if (dim < 2) throw ShapeError("gen_gaussian_classes needs dim >= 2");
  if (noise_sd < 0.0) throw ShapeError("noise_sd must be non-negative");
  const std::size_t per = per_class(n_per_domain, num_classes);
  Dataset ds;
  ds.dim = dim;
  ds.num_classes = num_classes;
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t d = 0; d < domains.size(); ++d) {
    check_shift(domains[d], dim);
    ds.domain_names.push_back(domains[d].name());
    Rng rng = domain_rng(seed, d, domains[d].seed);
    for (std::size_t k = 0; k < num_classes; ++k) {
      const double phi = 2.0 * std::numbers::pi * static_cast<double>(k) /
                         static_cast<double>(num_classes);
      for (std::size_t i = 0; i < per; ++i) {
        std::vector<double> x(dim, 0.0);
        x[0] = std::cos(phi);
        x[1] = std::sin(phi);
        for (auto& v : x) v += noise_sd * noise(rng);
        apply_shift(domains[d], x, 0.0, 0.0);
        ds.examples.push_back({std::move(x), static_cast<int>(k), static_cast<int>(d)});
      }
    }
  }
  return ds;
}

Dataset default_two_moons(const std::vector<double>& angles_deg, std::size_t n_per_domain,
                          double noise_sd, std::uint64_t seed) {
  std::vector<ShiftSpec> specs;
  for (std::size_t i = 0; i < angles_deg.size(); ++i) {
    specs.push_back(ShiftSpec::rotation(angles_deg[i], i));
  }
  return gen_two_moons(specs, n_per_domain, noise_sd, seed);
}

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

}  // namespace

std::string to_csv(const Dataset& dataset) {
  std::string out = "domain,label";
  for (std::size_t c = 0; c < dataset.dim; ++c) out += ",x" + std::to_string(c);
  out += '\n';
  for (const auto& e : dataset.examples) {
    out += std::to_string(e.domain);
    out += ',';
    out += std::to_string(e.label);
    for (double v : e.x) {
      out += ',';
      out += format_double(v);
    }
    out += '\n';
  }
  return out;
}

void save_csv(const Dataset& dataset, const std::filesystem::path& path) {
  dataset.validate();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open " + path.string() + " for writing");
  f << to_csv(dataset);
  if (!f) throw Error("write failed: " + path.string());
}

Dataset parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  Dataset ds;
  bool have_header = false;
  int max_domain = -1;
  int max_label = -1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!have_header) {
      const auto cols = split_commas(line);
      if (cols.size() < 3 || cols[0] != "domain" || cols[1] != "label") {
        throw ParseError(lineno, "unknown header, expected domain,label,x0,...");
      }
      for (std::size_t c = 2; c < cols.size(); ++c) {
        if (cols[c] != "x" + std::to_string(c - 2)) {
          throw ParseError(lineno, "unknown header column '" + std::string(cols[c]) + "'");
        }
      }
      ds.dim = cols.size() - 2;
      have_header = true;
      continue;
    }
    if (line.empty()) continue;
    const auto cols = split_commas(line);
    if (cols.size() != ds.dim + 2) {
      throw ParseError(lineno, "expected " + std::to_string(ds.dim + 2) + " fields, found " +
                                   std::to_string(cols.size()));
    }
    LabeledExample e;
    if (!parse_number(cols[0], e.domain) || e.domain < 0) {
      throw ParseError(lineno, "bad domain id '" + std::string(cols[0]) + "'");
    }
    if (!parse_number(cols[1], e.label) || e.label < 0) {
      throw ParseError(lineno, "bad label '" + std::string(cols[1]) + "'");
    }
    e.x.resize(ds.dim);
    for (std::size_t c = 0; c < ds.dim; ++c) {
      if (!parse_number(cols[c + 2], e.x[c]) || !std::isfinite(e.x[c])) {
        throw ParseError(lineno, "non-numeric feature x" + std::to_string(c) + " '" +
                                     std::string(cols[c + 2]) + "'");
      }
    }
    max_domain = std::max(max_domain, e.domain);
    max_label = std::max(max_label, e.label);
    ds.examples.push_back(std::move(e));
  }
  if (!have_header) throw ParseError(1, "missing header");
  ds.num_classes = static_cast<std::size_t>(max_label + 1);
  for (int d = 0; d <= max_domain; ++d) ds.domain_names.push_back("d" + std::to_string(d));
  return ds;
}

Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path.string());
  std::stringstream buf;
  buf << f.rdbuf();
  return parse_csv(buf.str());
}

std::pair<Dataset, Dataset> split(const Dataset& dataset, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw ShapeError("fraction must lie in [0,1]");
  std::map<std::pair<int, int>, std::vector<std::size_t>> cells;
  for (std::size_t i = 0; i < dataset.examples.size(); ++i) {
    const auto& e = dataset.examples[i];
    cells[{e.domain, e.label}].push_back(i);
  }
  std::vector<char> chosen(dataset.examples.size(), 0);
  for (auto& [key, idx] : cells) {
    Rng rng(derive_seed(derive_seed(seed, kStreamSplit),
                        (static_cast<std::uint64_t>(key.first) << 32) ^
                            static_cast<std::uint64_t>(key.second)));
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto keep = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(idx.size()) + 0.5));
    for (std::size_t k = 0; k < keep && k < idx.size(); ++k) chosen[idx[k]] = 1;
  }
  Dataset first;
  Dataset second;
  for (auto* part : {&first, &second}) {
    part->dim = dataset.dim;
    part->num_classes = dataset.num_classes;
    part->domain_names = dataset.domain_names;
  }
  for (std::size_t i = 0; i < dataset.examples.size(); ++i) {
    (chosen[i] ? first : second).examples.push_back(dataset.examples[i]);
  }
  return {std::move(first), std::move(second)};
}

Dataset subsample_fraction(const Dataset& dataset, double fraction, std::uint64_t seed) {
  return split(dataset, fraction, seed).first;
}

}  // namespace tarpro
