#pragma once

// Flat `key = value` run configuration with a fixed, typed key set.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "tarpro/experiments.hpp"

namespace tarpro {

struct ConfigKey {
  enum class Type { kInt, kCount, kReal, kBool, kString, kIntList, kRealList };
  std::string name;
  Type type;
  std::string default_value;
  std::string help;
};

/// Every recognised key with its type and default, in display order.
const std::vector<ConfigKey>& config_schema();

class RunConfig {
 public:
  /// All keys at their defaults.
  RunConfig();

  /// Validates and stores a value; throws Error naming `origin` on an
  /// unknown key or a value that does not parse as the key's type.
  void set(const std::string& key, const std::string& value, const std::string& origin = "");
  /// "key=value" as given on the command line.
  void apply_override(std::string_view assignment);

  bool has(const std::string& key) const;
  const std::string& raw(const std::string& key) const;

  std::int64_t get_int(const std::string& key) const;
  std::size_t get_count(const std::string& key) const;
  double get_real(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  const std::string& get_string(const std::string& key) const;
  std::vector<std::int64_t> get_ints(const std::string& key) const;
  std::vector<double> get_reals(const std::string& key) const;

  /// Every key, one `key = value` line each, in schema order.
  std::string to_text() const;

  bool operator==(const RunConfig&) const = default;

 private:
  std::map<std::string, std::string> values_;
};

/// Parses the config format; `#` starts a comment. Unknown, duplicate and
/// ill-typed keys raise ParseError with the offending line number.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);

PipelineConfig pipeline_config(const RunConfig& config);
/// Plan for a named experiment with dataset, domains, seeds and overrides.
ExperimentPlan experiment_plan(const RunConfig& config, const std::string& name);
DatasetSpec dataset_spec(const RunConfig& config);

}  // namespace tarpro
