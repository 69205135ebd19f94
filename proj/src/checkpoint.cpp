#include "tarpro/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace tarpro {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'T', 'A', 'R', 'P', 'R', 'O', 'C', 'K'};

class Writer {
 public:
  template <typename T>
  void pod(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out_.append(buf, sizeof(T));
  }
  void str(const std::string& s) {
    pod(static_cast<std::uint32_t>(s.size()));
    out_ += s;
  }
  void raw(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}
  template <typename T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint32_t>();
    need(n);
    std::string s(in_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  void raw(void* p, std::size_t n) {
    need(n);
    std::memcpy(p, in_.data() + pos_, n);
    pos_ += n;
  }
  bool done() const { return pos_ == in_.size(); }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw CheckpointError("truncated checkpoint");
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

void add_mlp(Checkpoint& c, const std::string& prefix, const Mlp& net) {
  c.add_scalar(prefix + ".layers", static_cast<double>(net.num_layers()));
  for (std::size_t i = 0; i < net.num_layers(); ++i) {
    const Layer& l = net.layers()[i];
    const std::string p = prefix + "." + std::to_string(i);
    c.add(p + ".weight", l.weight);
    c.add(p + ".bias", l.bias);
    Tensor2 act(1, 2);
    act << static_cast<double>(l.activation.kind), l.activation.slope;
    c.add(p + ".act", act);
  }
}

Mlp read_mlp(const Checkpoint& c, const std::string& prefix) {
  const double n = c.scalar(prefix + ".layers");
  if (!(n >= 1.0 && n <= 64.0)) throw CheckpointError(prefix + ": bad layer count");
  std::vector<Layer> layers;
  for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i) {
    const std::string p = prefix + "." + std::to_string(i);
    Layer l;
    l.weight = c.matrix(p + ".weight");
    l.bias = c.matrix(p + ".bias");
    const Tensor2 act = c.matrix(p + ".act");
    if (act.size() != 2) throw CheckpointError(p + ".act: expected 2 values");
    const auto kind = static_cast<int>(act(0, 0));
    if (kind < 0 || kind > 2) throw CheckpointError(p + ".act: unknown activation");
    l.activation = {static_cast<Activation::Kind>(kind), act(0, 1)};
    layers.push_back(std::move(l));
  }
  try {
    return Mlp(std::move(layers));
  } catch (const ShapeError& e) {
    throw CheckpointError(prefix + ": dimension mismatch: " + e.what());
  }
}

void expect_dim(bool ok, const std::string& what) {
  if (!ok) throw CheckpointError("dimension mismatch: " + what);
}

std::size_t count_scalar(const Checkpoint& c, const std::string& name) {
  const double v = c.scalar(name);
  if (!(v >= 0.0 && v < 1e9) || v != static_cast<double>(static_cast<std::size_t>(v))) {
    throw CheckpointError(name + ": not a count");
  }
  return static_cast<std::size_t>(v);
}

Tensor2 int_row(const std::vector<int>& v) {
  Tensor2 t(1, static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) t(0, static_cast<Eigen::Index>(i)) = v[i];
  return t;
}

std::vector<int> read_ints(const Checkpoint& c, const std::string& name) {
  const auto& b = c.block(name);
  std::vector<int> out;
  for (double v : b.values) out.push_back(static_cast<int>(v));
  return out;
}

void add_metric(Checkpoint& c, const std::string& prefix, const MetricModel& m) {
  add_mlp(c, prefix + ".net", m.net);
  c.add_scalar(prefix + ".tau", m.tau);
  c.add_scalar(prefix + ".feature_dim", static_cast<double>(m.feature_dim));
  c.add_scalar(prefix + ".normalize", m.normalize ? 1.0 : 0.0);
}

MetricModel read_metric(const Checkpoint& c, const std::string& prefix) {
  MetricModel m;
  m.net = read_mlp(c, prefix + ".net");
  m.tau = c.scalar(prefix + ".tau");
  m.feature_dim = count_scalar(c, prefix + ".feature_dim");
  m.normalize = c.scalar(prefix + ".normalize") != 0.0;
  expect_dim(m.net.out_dim() == m.feature_dim, "metric output vs feature_dim");
  return m;
}

void add_classifier(Checkpoint& c, const std::string& prefix, const ClassifierModel& m) {
  add_mlp(c, prefix + ".net", m.net);
  c.add_scalar(prefix + ".num_classes", static_cast<double>(m.num_classes));
}

ClassifierModel read_classifier(const Checkpoint& c, const std::string& prefix) {
  ClassifierModel m;
  m.net = read_mlp(c, prefix + ".net");
  m.num_classes = count_scalar(c, prefix + ".num_classes");
  expect_dim(m.net.out_dim() == m.num_classes, "classifier output vs num_classes");
  return m;
}

}  // namespace

const TensorBlock& Checkpoint::block(const std::string& name) const {
  for (const auto& b : blocks) {
    if (b.name == name) return b;
  }
  throw CheckpointError("missing tensor block '" + name + "'");
}

Tensor2 Checkpoint::matrix(const std::string& name) const {
  const auto& b = block(name);
  if (b.dims.size() != 2) throw CheckpointError(name + ": expected rank 2");
  Tensor2 t(static_cast<Eigen::Index>(b.dims[0]), static_cast<Eigen::Index>(b.dims[1]));
  std::memcpy(t.data(), b.values.data(), b.values.size() * sizeof(double));
  return t;
}

double Checkpoint::scalar(const std::string& name) const {
  const auto& b = block(name);
  if (b.values.size() != 1) throw CheckpointError(name + ": expected a scalar");
  return b.values[0];
}

void Checkpoint::add(const std::string& name, const Tensor2& t) {
  TensorBlock b;
  b.name = name;
  b.dims = {static_cast<std::uint64_t>(t.rows()), static_cast<std::uint64_t>(t.cols())};
  b.values.assign(t.data(), t.data() + t.size());
  blocks.push_back(std::move(b));
}

void Checkpoint::add_scalar(const std::string& name, double v) {
  blocks.push_back({name, {}, {v}});
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.pod(kCheckpointVersion);
  w.str(ckpt.kind);
  w.str(ckpt.config);
  w.pod(static_cast<std::uint32_t>(ckpt.blocks.size()));
  for (const auto& b : ckpt.blocks) {
    w.str(b.name);
    w.pod(static_cast<std::uint32_t>(b.dims.size()));
    for (auto d : b.dims) w.pod(d);
    w.raw(b.values.data(), b.values.size() * sizeof(double));
  }
  return w.take();
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw CheckpointError("bad magic");
  }
  Reader r(bytes.substr(sizeof kMagic));
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) +
                          " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint c;
  c.kind = r.str();
  c.config = r.str();
  const auto n = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < n; ++i) {
    TensorBlock b;
    b.name = r.str();
    const auto rank = r.pod<std::uint32_t>();
    if (rank > 8) throw CheckpointError(b.name + ": rank " + std::to_string(rank) + " too large");
    std::uint64_t count = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      b.dims.push_back(r.pod<std::uint64_t>());
      count *= b.dims.back();
    }
    if (count > r.remaining() / sizeof(double)) throw CheckpointError("truncated checkpoint");
    b.values.resize(count);
    r.raw(b.values.data(), count * sizeof(double));
    c.blocks.push_back(std::move(b));
  }
  if (!r.done()) throw CheckpointError("trailing bytes after checkpoint");
  return c;
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_file(path, encode_checkpoint(ckpt));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) {
    throw CheckpointError("checkpoint not found: " + path.string());
  }
  try {
    return decode_checkpoint(read_file(path));
  } catch (const CheckpointError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

std::string model_kind(const Model& model) {
  struct V {
    std::string operator()(const MetricModel&) const { return "metric"; }
    std::string operator()(const ClassifierModel&) const { return "classifier"; }
    std::string operator()(const VaeModel&) const { return "vae"; }
    std::string operator()(const GanModel&) const { return "gan"; }
    std::string operator()(const DeepAllModel&) const { return "deepall"; }
    std::string operator()(const KnnSampler&) const { return "knn"; }
  };
  return std::visit(V{}, model);
}

Checkpoint to_checkpoint(const Model& model, const std::string& config_text) {
  Checkpoint c;
  c.kind = model_kind(model);
  c.config = config_text;
  if (auto* m = std::get_if<MetricModel>(&model)) {
    add_metric(c, "metric", *m);
  } else if (auto* m = std::get_if<ClassifierModel>(&model)) {
    add_classifier(c, "classifier", *m);
  } else if (auto* m = std::get_if<VaeModel>(&model)) {
    add_mlp(c, "encoder", m->encoder);
    add_mlp(c, "decoder", m->decoder);
    c.add_scalar("latent_dim", static_cast<double>(m->latent_dim));
  } else if (auto* m = std::get_if<GanModel>(&model)) {
    add_mlp(c, "generator", m->generator);
    add_mlp(c, "discriminator", m->discriminator);
    c.add_scalar("latent_dim", static_cast<double>(m->latent_dim));
  } else if (auto* m = std::get_if<DeepAllModel>(&model)) {
    add_metric(c, "extractor", m->extractor);
    add_classifier(c, "head", m->head);
  } else if (auto* m = std::get_if<KnnSampler>(&model)) {
    c.add("bank.features", m->bank.features);
    c.add("bank.labels", int_row(m->bank.labels));
    c.add("bank.domains", int_row(m->bank.domains));
    c.add_scalar("bank.num_classes", static_cast<double>(m->bank.num_classes));
  }
  return c;
}

Model from_checkpoint(const Checkpoint& c) {
  if (c.kind == "metric") return read_metric(c, "metric");
  if (c.kind == "classifier") return read_classifier(c, "classifier");
  if (c.kind == "vae") {
    VaeModel m;
    m.encoder = read_mlp(c, "encoder");
    m.decoder = read_mlp(c, "decoder");
    m.latent_dim = count_scalar(c, "latent_dim");
    expect_dim(m.encoder.out_dim() == 2 * m.latent_dim, "encoder output vs 2 * latent_dim");
    expect_dim(m.decoder.in_dim() == m.latent_dim, "decoder input vs latent_dim");
    expect_dim(m.decoder.out_dim() == m.encoder.in_dim(), "decoder output vs encoder input");
    return m;
  }
  if (c.kind == "gan") {
    GanModel m;
    m.generator = read_mlp(c, "generator");
    m.discriminator = read_mlp(c, "discriminator");
    m.latent_dim = count_scalar(c, "latent_dim");
    expect_dim(m.generator.in_dim() == m.latent_dim, "generator input vs latent_dim");
    expect_dim(m.discriminator.in_dim() == m.generator.out_dim(), "discriminator input vs generator output");
    expect_dim(m.discriminator.out_dim() == 1, "discriminator output");
    return m;
  }
  if (c.kind == "deepall") {
    DeepAllModel m;
    m.extractor = read_metric(c, "extractor");
    m.head = read_classifier(c, "head");
    expect_dim(m.head.net.in_dim() == m.extractor.feature_dim, "head input vs feature_dim");
    return m;
  }
  if (c.kind == "knn") {
    KnnSampler k;
    k.bank.features = c.matrix("bank.features");
    k.bank.labels = read_ints(c, "bank.labels");
    k.bank.domains = read_ints(c, "bank.domains");
    k.bank.num_classes = count_scalar(c, "bank.num_classes");
    expect_dim(k.bank.labels.size() == static_cast<std::size_t>(k.bank.features.rows()) &&
                   k.bank.domains.size() == k.bank.labels.size(),
               "bank rows vs labels");
    return k;
  }
  throw CheckpointError("unknown model kind '" + c.kind + "'");
}

void save_checkpoint(const Model& model, const std::filesystem::path& path,
                     const std::string& config_text) {
  write_checkpoint(to_checkpoint(model, config_text), path);
}

Model load_checkpoint(const std::filesystem::path& path, std::string* config_text) {
  const Checkpoint c = read_checkpoint(path);
  if (config_text != nullptr) *config_text = c.config;
  try {
    return from_checkpoint(c);
  } catch (const CheckpointError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

Sampler load_sampler(const std::filesystem::path& path) {
  Model m = load_checkpoint(path);
  if (auto* v = std::get_if<VaeModel>(&m)) return std::move(*v);
  if (auto* g = std::get_if<GanModel>(&m)) return std::move(*g);
  if (auto* k = std::get_if<KnnSampler>(&m)) return std::move(*k);
  throw CheckpointError(path.string() + ": expected a sampler checkpoint, found " + model_kind(m));
}

std::string hash_bytes(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string hash_file(const std::filesystem::path& path) { return hash_bytes(read_file(path)); }

void write_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error("write failed: " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string Manifest::run_hash() const {
  // The output location does not affect results.
  std::string key;
  std::size_t pos = 0;
  while (pos < config.size()) {
    auto nl = config.find('\n', pos);
    if (nl == std::string::npos) nl = config.size();
    const std::string_view line(config.data() + pos, nl - pos);
    if (line.rfind("out_dir", 0) != 0) key.append(line).append("\n");
    pos = nl + 1;
  }
  for (auto s : seeds) key += "\nseed " + std::to_string(s);
  return hash_bytes(key);
}

std::string Manifest::to_json() const {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["run_hash"] = run_hash();
  j["seeds"] = seeds;
  j["config"] = config;
  j["inputs"] = inputs;
  j["outputs"] = outputs;
  return j.dump(2) + "\n";
}

Manifest Manifest::from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    Manifest m;
    m.command = j.at("command").get<std::string>();
    m.config = j.at("config").get<std::string>();
    m.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    m.inputs = j.value("inputs", std::map<std::string, std::string>{});
    m.outputs = j.value("outputs", std::map<std::string, std::string>{});
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("bad manifest: ") + e.what());
  }
}

}  // namespace tarpro
