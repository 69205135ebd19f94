#pragma once

// Single-file model checkpoints and run manifests.
//
// Layout (all integers little-endian):
//   "TARPROCK"  u32 version  str kind  str config  u32 nblocks
//   per block:  str name  u32 rank  u64 dims[rank]  f64 values[prod(dims)]
// where str is a u32 byte length followed by the bytes.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "tarpro/classifier.hpp"
#include "tarpro/generative.hpp"
#include "tarpro/metric.hpp"

namespace tarpro {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TensorBlock {
  std::string name;
  std::vector<std::uint64_t> dims;
  std::vector<double> values;  // row-major

  bool operator==(const TensorBlock&) const = default;
};

struct Checkpoint {
  std::string kind;
  std::string config;  // snapshot of the run configuration
  std::vector<TensorBlock> blocks;

  const TensorBlock& block(const std::string& name) const;
  Tensor2 matrix(const std::string& name) const;
  double scalar(const std::string& name) const;
  void add(const std::string& name, const Tensor2& t);
  void add_scalar(const std::string& name, double v);

  bool operator==(const Checkpoint&) const = default;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::string_view bytes);

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
/// Throws CheckpointError("checkpoint not found: ...") for a missing file.
Checkpoint read_checkpoint(const std::filesystem::path& path);

using Model = std::variant<MetricModel, ClassifierModel, VaeModel, GanModel, DeepAllModel, KnnSampler>;

std::string model_kind(const Model& model);
Checkpoint to_checkpoint(const Model& model, const std::string& config_text = "");
/// Validates layer chaining and the model's declared dimensions.
Model from_checkpoint(const Checkpoint& ckpt);

void save_checkpoint(const Model& model, const std::filesystem::path& path,
                     const std::string& config_text = "");
Model load_checkpoint(const std::filesystem::path& path, std::string* config_text = nullptr);

/// Loads and checks the kind, e.g. load_model<VaeModel>(path).
template <typename M>
M load_model(const std::filesystem::path& path, std::string* config_text = nullptr) {
  Model m = load_checkpoint(path, config_text);
  if (auto* p = std::get_if<M>(&m)) return std::move(*p);
  throw CheckpointError(path.string() + ": expected a " + model_kind(Model(M{})) +
                        " checkpoint, found " + model_kind(m));
}

/// VAE, GAN or 1-NN sampler checkpoint.
Sampler load_sampler(const std::filesystem::path& path);

/// 64-bit FNV-1a, hex.
std::string hash_bytes(std::string_view bytes);
std::string hash_file(const std::filesystem::path& path);

/// Writes via a temporary file and rename so readers never see partial output.
void write_file(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

struct Manifest {
  std::string command;
  std::string config;  // RunConfig::to_text()
  std::vector<std::uint64_t> seeds;
  std::map<std::string, std::string> inputs;   // path -> hash
  std::map<std::string, std::string> outputs;  // path -> hash

  /// Hash of config and seeds; equal for runs that must produce equal output.
  std::string run_hash() const;
  std::string to_json() const;
  static Manifest from_json(std::string_view text);
};

}  // namespace tarpro
