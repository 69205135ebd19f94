#include "tarpro/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace tarpro {

namespace {

using T = ConfigKey::Type;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto comma = s.find(',', start);
    out.push_back(trim(std::string_view(s).substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

bool parse_int(const std::string& s, std::int64_t& v) {
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  return ec == std::errc() && p == end && !s.empty();
}

bool parse_real(const std::string& s, double& v) {
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  return ec == std::errc() && p == end && !s.empty();
}

bool parse_bool(const std::string& s, bool& v) {
  if (s == "true" || s == "1") return v = true, true;
  if (s == "false" || s == "0") return v = false, true;
  return false;
}

const char* type_name(T t) {
  switch (t) {
    case T::kInt: return "integer";
    case T::kCount: return "non-negative integer";
    case T::kReal: return "real";
    case T::kBool: return "bool";
    case T::kString: return "string";
    case T::kIntList: return "integer list";
    case T::kRealList: return "real list";
  }
  return "value";
}

bool valid(T t, const std::string& s) {
  std::int64_t i = 0;
  double d = 0.0;
  bool b = false;
  switch (t) {
    case T::kInt: return parse_int(s, i);
    case T::kCount: return parse_int(s, i) && i >= 0;
    case T::kReal: return parse_real(s, d);
    case T::kBool: return parse_bool(s, b);
    case T::kString: return true;
    case T::kIntList:
      for (const auto& x : split_list(s)) {
        if (!parse_int(x, i)) return false;
      }
      return true;
    case T::kRealList:
      for (const auto& x : split_list(s)) {
        if (!parse_real(x, d)) return false;
      }
      return true;
  }
  return false;
}

const ConfigKey* find_key(const std::string& name) {
  const auto& schema = config_schema();
  auto it = std::find_if(schema.begin(), schema.end(), [&](const ConfigKey& k) { return k.name == name; });
  return it == schema.end() ? nullptr : &*it;
}

const ConfigKey& key_or_throw(const std::string& name) {
  const ConfigKey* k = find_key(name);
  if (k == nullptr) throw Error("unknown config key '" + name + "'");
  return *k;
}

std::vector<std::size_t> counts(const std::vector<std::int64_t>& v, const std::string& key) {
  std::vector<std::size_t> out;
  for (auto x : v) {
    if (x < 0) throw Error(key + ": negative entry");
    out.push_back(static_cast<std::size_t>(x));
  }
  return out;
}

std::vector<int> ints(const std::vector<std::int64_t>& v) {
  return {v.begin(), v.end()};
}

}  // namespace

const std::vector<ConfigKey>& config_schema() {
  static const std::vector<ConfigKey> schema = {
      {"seed", T::kInt, "0", "run seed for single-model commands"},
      {"seeds", T::kIntList, "0,1,2,3,4", "seeds for experiment commands"},
      {"threads", T::kCount, "0", "worker threads (0 = TARPRO_THREADS or all cores)"},
      {"dataset", T::kString, "two_moons", "two_moons or gaussian"},
      {"angles", T::kRealList, "0,15,30,45", "rotation per domain, degrees"},
      {"n_per_domain", T::kCount, "300", "examples per domain"},
      {"noise_sd", T::kReal, "0.08", "observation noise"},
      {"num_classes", T::kCount, "2", "gaussian dataset classes"},
      {"input_dim", T::kCount, "2", "gaussian dataset dimension"},
      {"sources", T::kIntList, "0,1,2", "source domain ids"},
      {"targets", T::kIntList, "3", "held-out target domain ids"},
      {"tau", T::kReal, "0.1", "pairwise similarity temperature"},
      {"metric_hidden", T::kIntList, "64,64,64", "metric network hidden widths"},
      {"feature_dim", T::kCount, "16", "feature dimension"},
      {"leaky_slope", T::kReal, "0.2", "leaky ReLU slope"},
      {"metric_lr", T::kReal, "0.05", "metric SGD learning rate"},
      {"metric_momentum", T::kReal, "0.9", "metric SGD momentum"},
      {"metric_epochs", T::kCount, "200", "metric training epochs"},
      {"metric_batch", T::kCount, "128", "metric batch size N"},
      {"normalize", T::kBool, "true", "L2-normalize features"},
      {"classifier_hidden", T::kCount, "64", "classifier hidden width"},
      {"classifier_lr", T::kReal, "0.003", "classifier Adam learning rate"},
      {"classifier_epochs", T::kCount, "30", "classifier epochs"},
      {"classifier_batch", T::kCount, "64", "classifier batch size"},
      {"latent_dim", T::kCount, "8", "sampler latent dimension"},
      {"vae_hidden", T::kIntList, "32,32", "VAE hidden widths"},
      {"kl_weight", T::kReal, "0.05", "VAE KL weight"},
      {"vae_lr", T::kReal, "0.005", "VAE SGD learning rate"},
      {"vae_momentum", T::kReal, "0.9", "VAE SGD momentum"},
      {"vae_epochs", T::kCount, "350", "VAE epochs"},
      {"vae_batch", T::kCount, "64", "VAE batch size"},
      {"gan_hidden", T::kIntList, "32,32", "GAN hidden widths"},
      {"gan_lr", T::kReal, "0.0002", "GAN Adam learning rate"},
      {"gan_beta1", T::kReal, "0.5", "GAN Adam beta1"},
      {"gan_epochs", T::kCount, "450", "GAN epochs"},
      {"gan_batch", T::kCount, "64", "GAN batch size"},
      {"beta", T::kReal, "0.01", "projection step size"},
      {"M", T::kCount, "2000", "projection iterations"},
      {"W", T::kCount, "25", "loss smoothing window (odd)"},
      {"restarts", T::kCount, "8", "projection restarts per target"},
      {"store_stride", T::kCount, "1", "keep every k-th latent iterate"},
      {"normalize_output", T::kBool, "true", "normalize G(u*) before classifying"},
      {"sampler", T::kString, "vae", "vae, gan or knn"},
      {"variant", T::kString, "full", "full, no_f_theta, no_G_phi or deepall"},
      {"fewshot_epochs", T::kCount, "20", "few-shot fine-tuning epochs"},
      {"fewshot_lr_scale", T::kReal, "0.1", "few-shot learning-rate multiplier"},
      {"shots", T::kIntList, "0,7,10", "few-shot |T| values"},
      {"fractions", T::kRealList, "0.2,0.4,0.6,0.8,1.0", "data fractions"},
      {"betas", T::kRealList, "0.05,0.01,0.005", "beta sweep values"},
      {"epsilons", T::kRealList, "-1000,-500,-250,-100,-50,-25,0,25,50,100,250,500,1000",
       "stopping offsets from n*"},
      {"epsilon_mode", T::kString, "absolute", "absolute or fraction (of n*)"},
      {"adist_hidden", T::kCount, "16", "domain discriminator hidden width"},
      {"adist_lr", T::kReal, "0.01", "domain discriminator Adam learning rate"},
      {"adist_epochs", T::kCount, "60", "domain discriminator epochs"},
      {"out_dir", T::kString, "out", "output directory"},
  };
  return schema;
}

RunConfig::RunConfig() {
  for (const auto& k : config_schema()) values_[k.name] = k.default_value;
}

void RunConfig::set(const std::string& key, const std::string& value, const std::string& origin) {
  const std::string where = origin.empty() ? "" : origin + ": ";
  const ConfigKey* k = find_key(key);
  if (k == nullptr) throw Error(where + "unknown key '" + key + "'");
  if (!valid(k->type, value)) {
    throw Error(where + key + ": expected " + type_name(k->type) + ", got '" + value + "'");
  }
  values_[key] = value;
}

void RunConfig::apply_override(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw Error("--set: expected key=value, got '" + std::string(assignment) + "'");
  }
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)), "--set");
}

bool RunConfig::has(const std::string& key) const { return values_.count(key) > 0; }

const std::string& RunConfig::raw(const std::string& key) const {
  key_or_throw(key);
  return values_.at(key);
}

std::int64_t RunConfig::get_int(const std::string& key) const {
  std::int64_t v = 0;
  parse_int(raw(key), v);
  return v;
}

std::size_t RunConfig::get_count(const std::string& key) const {
  return static_cast<std::size_t>(get_int(key));
}

double RunConfig::get_real(const std::string& key) const {
  double v = 0.0;
  parse_real(raw(key), v);
  return v;
}

bool RunConfig::get_bool(const std::string& key) const {
  bool v = false;
  parse_bool(raw(key), v);
  return v;
}

const std::string& RunConfig::get_string(const std::string& key) const { return raw(key); }

std::vector<std::int64_t> RunConfig::get_ints(const std::string& key) const {
  std::vector<std::int64_t> out;
  for (const auto& x : split_list(raw(key))) {
    std::int64_t v = 0;
    parse_int(x, v);
    out.push_back(v);
  }
  return out;
}

std::vector<double> RunConfig::get_reals(const std::string& key) const {
  std::vector<double> out;
  for (const auto& x : split_list(raw(key))) {
    double v = 0.0;
    parse_real(x, v);
    out.push_back(v);
  }
  return out;
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& k : config_schema()) out += k.name + " = " + values_.at(k.name) + "\n";
  return out;
}

RunConfig parse_config(std::string_view text) {
  RunConfig cfg;
  std::map<std::string, std::size_t> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(line_no, "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ParseError(line_no, "missing key");
    const ConfigKey* k = find_key(key);
    if (k == nullptr) throw ParseError(line_no, "unknown key '" + key + "'");
    if (auto it = seen.find(key); it != seen.end()) {
      throw ParseError(line_no, "duplicate key '" + key + "' (first set on line " +
                                    std::to_string(it->second) + ")");
    }
    seen[key] = line_no;
    if (!valid(k->type, value)) {
      throw ParseError(line_no, key + ": expected " + type_name(k->type) + ", got '" + value + "'");
    }
    cfg.set(key, value);
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str());
  } catch (const ParseError& e) {
    throw ParseError(e.line(), path.string() + ": " +
                                   std::string(e.what()).substr(std::string(e.what()).find(": ") + 2));
  }
}

DatasetSpec dataset_spec(const RunConfig& c) {
  DatasetSpec d;
  const auto& kind = c.get_string("dataset");
  if (kind == "two_moons") {
    d.kind = DatasetSpec::Kind::kTwoMoons;
  } else if (kind == "gaussian") {
    d.kind = DatasetSpec::Kind::kGaussian;
  } else {
    throw Error("dataset: unknown kind '" + kind + "' (two_moons, gaussian)");
  }
  d.angles = c.get_reals("angles");
  d.n_per_domain = c.get_count("n_per_domain");
  d.noise_sd = c.get_real("noise_sd");
  d.num_classes = c.get_count("num_classes");
  d.dim = c.get_count("input_dim");
  return d;
}

PipelineConfig pipeline_config(const RunConfig& c) {
  PipelineConfig p;
  p.metric.hidden = counts(c.get_ints("metric_hidden"), "metric_hidden");
  p.metric.feature_dim = c.get_count("feature_dim");
  p.metric.leaky_slope = c.get_real("leaky_slope");
  p.metric.tau = c.get_real("tau");
  p.metric.lr = c.get_real("metric_lr");
  p.metric.momentum = c.get_real("metric_momentum");
  p.metric.epochs = c.get_count("metric_epochs");
  p.metric.batch_size = c.get_count("metric_batch");
  p.metric.normalize = c.get_bool("normalize");

  p.classifier.hidden = c.get_count("classifier_hidden");
  p.classifier.lr = c.get_real("classifier_lr");
  p.classifier.epochs = c.get_count("classifier_epochs");
  p.classifier.batch_size = c.get_count("classifier_batch");

  p.vae.hidden = counts(c.get_ints("vae_hidden"), "vae_hidden");
  p.vae.latent_dim = c.get_count("latent_dim");
  p.vae.kl_weight = c.get_real("kl_weight");
  p.vae.lr = c.get_real("vae_lr");
  p.vae.momentum = c.get_real("vae_momentum");
  p.vae.epochs = c.get_count("vae_epochs");
  p.vae.batch_size = c.get_count("vae_batch");

  p.gan.hidden = counts(c.get_ints("gan_hidden"), "gan_hidden");
  p.gan.latent_dim = c.get_count("latent_dim");
  p.gan.lr = c.get_real("gan_lr");
  p.gan.beta1 = c.get_real("gan_beta1");
  p.gan.epochs = c.get_count("gan_epochs");
  p.gan.batch_size = c.get_count("gan_batch");

  p.projection.beta = c.get_real("beta");
  p.projection.max_iters = c.get_count("M");
  p.projection.window = c.get_count("W");
  p.projection.restarts = c.get_count("restarts");
  p.projection.store_stride = c.get_count("store_stride");
  p.projection.normalize_output = c.get_bool("normalize_output");

  p.fewshot.epochs = c.get_count("fewshot_epochs");
  p.fewshot.lr_scale = c.get_real("fewshot_lr_scale");

  p.discriminator.hidden = c.get_count("adist_hidden");
  p.discriminator.lr = c.get_real("adist_lr");
  p.discriminator.epochs = c.get_count("adist_epochs");

  p.threads = c.get_count("threads");
  return p.seeded(static_cast<std::uint64_t>(c.get_int("seed")));
}

ExperimentPlan experiment_plan(const RunConfig& c, const std::string& name) {
  ExperimentPlan plan;
  plan.name = name;
  plan.dataset = dataset_spec(c);
  plan.sources = ints(c.get_ints("sources"));
  plan.targets = ints(c.get_ints("targets"));
  plan.variant = parse_variant(c.get_string("variant"));
  plan.sampler = parse_sampler(c.get_string("sampler"));
  plan.seeds.clear();
  for (auto s : c.get_ints("seeds")) plan.seeds.push_back(static_cast<std::uint64_t>(s));
  plan.config = pipeline_config(c);
  const RunConfig defaults;
  for (const auto& k : config_schema()) {
    if (c.raw(k.name) != defaults.raw(k.name)) plan.overrides[k.name] = c.raw(k.name);
  }
  return plan;
}

}  // namespace tarpro
