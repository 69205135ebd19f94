#include "doctest.h"

#include <cstring>
#include <filesystem>

#include "tarpro/checkpoint.hpp"

using namespace tarpro;
namespace fs = std::filesystem;

namespace {

fs::path temp(const std::string& name) { return fs::temp_directory_path() / ("tarpro_test_" + name); }

const Dataset& toy() {
  static const Dataset d = default_two_moons({0, 15}, 60, 0.1, 1);
  return d;
}

MetricModel small_metric() {
  MetricConfig c;
  c.hidden = {8, 8};
  c.feature_dim = 4;
  c.epochs = 3;
  return train_metric(toy(), c);
}

std::string patched(std::string bytes, std::size_t at, std::uint32_t v) {
  std::memcpy(bytes.data() + at, &v, sizeof v);
  return bytes;
}

}  // namespace

TEST_CASE("checkpoint: every model kind survives save, load, save byte for byte") {
  const MetricModel metric = small_metric();
  const FeatureBank bank = embed(metric, toy());
  VaeConfig vc;
  vc.epochs = 2;
  GanConfig gc;
  gc.epochs = 2;
  DeepAllConfig dc;
  dc.backbone.hidden = {8};
  dc.backbone.feature_dim = 4;
  dc.backbone.epochs = 2;
  const std::vector<Model> models{metric, train_classifier(bank, ClassifierConfig{}), train_vae(bank, vc),
                                  train_gan(bank, gc), train_deepall(toy(), dc), KnnSampler{bank}};
  for (const Model& m : models) {
    CAPTURE(model_kind(m));
    const fs::path a = temp("a.ckpt"), b = temp("b.ckpt");
    save_checkpoint(m, a, "tau = 0.1\n");
    std::string cfg;
    const Model back = load_checkpoint(a, &cfg);
    save_checkpoint(back, b, cfg);
    CHECK(cfg == "tau = 0.1\n");
    CHECK(read_file(a) == read_file(b));
    CHECK(model_kind(back) == model_kind(m));
    fs::remove(a);
    fs::remove(b);
  }
}

TEST_CASE("checkpoint: a reloaded metric embeds identically") {
  const MetricModel m = small_metric();
  const fs::path p = temp("metric.ckpt");
  save_checkpoint(m, p);
  const MetricModel back = load_model<MetricModel>(p);
  fs::remove(p);
  CHECK(back == m);
  CHECK(embed(back, toy()).features == embed(m, toy()).features);
}

TEST_CASE("checkpoint: corrupt input is rejected with a reason") {
  const std::string good = encode_checkpoint(to_checkpoint(small_metric()));
  CHECK(decode_checkpoint(good) == to_checkpoint(small_metric()));
  std::string bad = good;
  bad[0] = 'X';
  CHECK_THROWS_WITH_AS(decode_checkpoint(bad), doctest::Contains("bad magic"), CheckpointError);
  CHECK_THROWS_WITH_AS(decode_checkpoint(good.substr(0, good.size() - 5)), doctest::Contains("truncated"),
                       CheckpointError);
  CHECK_THROWS_WITH_AS(decode_checkpoint(patched(good, 8, 99)), doctest::Contains("version"), CheckpointError);
  CHECK_THROWS_WITH_AS(decode_checkpoint(good + "z"), doctest::Contains("trailing"), CheckpointError);
  CHECK_THROWS_WITH_AS(read_checkpoint(temp("missing.ckpt")), doctest::Contains("checkpoint not found"),
                       CheckpointError);
}

TEST_CASE("checkpoint: mismatched layer dimensions are rejected") {
  Checkpoint c = to_checkpoint(small_metric());
  for (auto& b : c.blocks) {
    if (b.name.find(".1.weight") != std::string::npos) {
      b.dims[0] += 1;
      b.values.resize(b.dims[0] * b.dims[1], 0.0);
      break;
    }
  }
  CHECK_THROWS_WITH_AS(from_checkpoint(c), doctest::Contains("dimension mismatch"), CheckpointError);
  const fs::path p = temp("kind.ckpt");
  save_checkpoint(small_metric(), p);
  CHECK_THROWS_AS(load_model<VaeModel>(p), CheckpointError);
  fs::remove(p);
}

TEST_CASE("manifest: json round trip and run hash") {
  Manifest m;
  m.command = "infer";
  m.config = "seed = 3\nout_dir = a\n";
  m.seeds = {3};
  m.inputs = {{"data.csv", hash_bytes("x")}};
  m.outputs = {{"summary.csv", hash_bytes("y")}};
  const Manifest back = Manifest::from_json(m.to_json());
  CHECK(back.to_json() == m.to_json());
  CHECK(back.run_hash() == m.run_hash());
  Manifest moved = m;
  moved.config = "seed = 3\nout_dir = b\n";
  CHECK(moved.run_hash() == m.run_hash());
  moved.config = "seed = 4\nout_dir = a\n";
  CHECK(moved.run_hash() != m.run_hash());
  CHECK(hash_bytes("") == "cbf29ce484222325");
}
