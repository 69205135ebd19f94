// tarpro: command-line driver for data generation, training, projection
// inference, diagnostics and the experiment grids.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tarpro/checkpoint.hpp"
#include "tarpro/config.hpp"
#include "tarpro/diagnostics.hpp"
#include "tarpro/experiments.hpp"
#include "tarpro/log.hpp"
#include "tarpro/parallel.hpp"

namespace fs = std::filesystem;
using namespace tarpro;

namespace {

struct Options {
  std::string config_path;
  std::string manifest_path;
  std::vector<std::string> overrides;
  std::string out_dir;
  bool quiet = false;

  std::string data;
  std::string metric;
  std::string sampler;
  std::string classifier;
  std::string deepall;
  std::string out;
  std::string traces;
  std::string domains = "targets";
};

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class Run {
 public:
  Run(std::string command, const Options& o) : command_(std::move(command)), opt_(o) {
    if (!o.manifest_path.empty()) {
      cfg_ = parse_config(Manifest::from_json(read_file(o.manifest_path)).config);
    }
    if (!o.config_path.empty()) {
      if (!o.manifest_path.empty()) throw Error("--config and --manifest are exclusive");
      cfg_ = load_config(o.config_path);
    }
    for (const auto& kv : o.overrides) cfg_.apply_override(kv);
    if (!o.out_dir.empty()) cfg_.set("out_dir", o.out_dir, "--out-dir");
    out_dir_ = cfg_.get_string("out_dir");
  }

  const RunConfig& cfg() const { return cfg_; }
  PipelineConfig pipeline() const { return pipeline_config(cfg_); }
  std::uint64_t seed() const { return static_cast<std::uint64_t>(cfg_.get_int("seed")); }

  fs::path out_path(const std::string& flag_value, const std::string& default_name) const {
    return flag_value.empty() ? fs::path(out_dir_) / default_name : fs::path(flag_value);
  }

  fs::path input(const std::string& flag_value, const std::string& default_name) {
    const fs::path p = out_path(flag_value, default_name);
    if (fs::is_regular_file(p)) inputs_[p.string()] = hash_file(p);
    return p;
  }

  void emit(const fs::path& path, const std::string& content) {
    write_file(path, content);
    outputs_[path.string()] = hash_bytes(content);
  }

  // The output directory is left out so a checkpoint does not depend on where it was written.
  void save(const Model& model, const fs::path& path) {
    std::istringstream lines(cfg_.to_text());
    std::string snapshot, line;
    while (std::getline(lines, line)) {
      if (line.rfind("out_dir", 0) != 0) snapshot.append(line).append("\n");
    }
    save_checkpoint(model, path, snapshot);
    outputs_[path.string()] = hash_file(path);
  }

  Dataset load_data(const std::string& flag_value) {
    const fs::path p = input(flag_value, "data.csv");
    if (!fs::is_regular_file(p)) throw Error("data not found: " + p.string());
    return load_csv(p);
  }

  template <typename M>
  M load(const std::string& flag_value, const std::string& default_name) {
    const fs::path p = input(flag_value, default_name);
    return load_model<M>(p);
  }

  Sampler load_sampler_for(const std::string& flag_value, const Dataset& data, const MetricModel& metric) {
    const std::string kind = cfg_.get_string("sampler");
    parse_sampler(kind);
    if (kind == "knn" && flag_value.empty()) {
      return KnnSampler{embed(metric, data.filter_domains(sources()), threads())};
    }
    return tarpro::load_sampler(input(flag_value, kind + ".ckpt"));
  }

  std::vector<int> sources() const {
    const auto v = cfg_.get_ints("sources");
    return {v.begin(), v.end()};
  }
  std::vector<int> targets() const {
    const auto v = cfg_.get_ints("targets");
    return {v.begin(), v.end()};
  }
  std::size_t threads() const {
    const auto t = cfg_.get_count("threads");
    return t == 0 ? default_thread_count() : t;
  }

  void finish(const std::vector<std::uint64_t>& seeds) {
    Manifest m;
    m.command = command_;
    m.config = cfg_.to_text();
    m.seeds = seeds;
    m.inputs = inputs_;
    m.outputs = outputs_;
    write_file(fs::path(out_dir_) / (command_ + ".manifest.json"), m.to_json());
  }
  void finish() { finish({seed()}); }

 private:
  std::string command_;
  Options opt_;
  RunConfig cfg_;
  std::string out_dir_;
  std::map<std::string, std::string> inputs_;
  std::map<std::string, std::string> outputs_;
};

std::string log_csv(const TrainingLog& log) {
  const bool acc = !log.accuracy.empty();
  std::string out = acc ? "epoch,loss,accuracy\n" : "epoch,loss\n";
  const std::size_t n = std::max(log.loss.size(), log.accuracy.size());
  for (std::size_t e = 0; e < n; ++e) {
    out += std::to_string(e) + "," + (e < log.loss.size() ? fmt(log.loss[e]) : "");
    if (acc) out += "," + (e < log.accuracy.size() ? fmt(log.accuracy[e]) : "");
    out += "\n";
  }
  return out;
}

Dataset pick_domains(const Run& run, const Dataset& data, const std::string& which) {
  if (which == "all") return data;
  if (which == "sources") return data.filter_domains(run.sources());
  if (which == "targets") return data.filter_domains(run.targets());
  throw Error("--domains must be all, sources or targets");
}

Dataset features_as_dataset(const FeatureBank& bank, const Dataset& like) {
  Dataset d;
  d.dim = bank.dim();
  d.num_classes = like.num_classes;
  d.domain_names = like.domain_names;
  for (std::size_t i = 0; i < bank.size(); ++i) {
    const RowVector r = bank.row(i);
    d.examples.push_back({std::vector<double>(r.data(), r.data() + r.size()), bank.labels[i], bank.domains[i]});
  }
  return d;
}

std::string domain_pair(int a, int b) { return "d" + std::to_string(a) + "-d" + std::to_string(b); }

void cmd_gen_data(Run& run, const Options& o) {
  const Dataset d = dataset_spec(run.cfg()).generate(run.seed());
  run.emit(run.out_path(o.out, "data.csv"), to_csv(d));
  run.finish();
}

void cmd_train_metric(Run& run, const Options& o) {
  const Dataset d = run.load_data(o.data);
  TrainingLog log;
  const MetricModel m = train_metric(d.filter_domains(run.sources()), run.pipeline().metric, &log);
  run.save(m, run.out_path(o.out, "metric.ckpt"));
  run.emit(run.out_path("", "metric_log.csv"), log_csv(log));
  run.finish();
}

void cmd_train_deepall(Run& run, const Options& o) {
  const Dataset d = run.load_data(o.data);
  const PipelineConfig p = run.pipeline();
  DeepAllConfig dc;
  dc.backbone = p.metric;
  dc.head = p.classifier;
  TrainingLog log;
  const DeepAllModel m = train_deepall(d.filter_domains(run.sources()), dc, &log);
  run.save(m, run.out_path(o.out, "deepall.ckpt"));
  run.emit(run.out_path("", "deepall_log.csv"), log_csv(log));
  run.finish();
}

void cmd_train_sampler(Run& run, const Options& o, bool gan) {
  const Dataset d = run.load_data(o.data);
  const auto metric = run.load<MetricModel>(o.metric, "metric.ckpt");
  const FeatureBank bank = embed(metric, d.filter_domains(run.sources()), run.threads());
  TrainingLog log;
  if (gan) {
    run.save(train_gan(bank, run.pipeline().gan, &log), run.out_path(o.out, "gan.ckpt"));
    run.emit(run.out_path("", "gan_log.csv"), log_csv(log));
  } else {
    run.save(train_vae(bank, run.pipeline().vae, &log), run.out_path(o.out, "vae.ckpt"));
    run.emit(run.out_path("", "vae_log.csv"), log_csv(log));
  }
  run.finish();
}

void cmd_train_classifier(Run& run, const Options& o) {
  const Dataset d = run.load_data(o.data);
  const auto metric = run.load<MetricModel>(o.metric, "metric.ckpt");
  const FeatureBank bank = embed(metric, d.filter_domains(run.sources()), run.threads());
  TrainingLog log;
  run.save(train_classifier(bank, run.pipeline().classifier, &log), run.out_path(o.out, "classifier.ckpt"));
  run.emit(run.out_path("", "classifier_log.csv"), log_csv(log));
  run.finish();
}

void cmd_embed(Run& run, const Options& o) {
  const Dataset d = run.load_data(o.data);
  const auto metric = run.load<MetricModel>(o.metric, "metric.ckpt");
  const Dataset part = pick_domains(run, d, o.domains);
  run.emit(run.out_path(o.out, "features.csv"), to_csv(features_as_dataset(embed(metric, part, run.threads()), d)));
  run.finish();
}

void write_traces(Run& run, const std::string& dir, const std::vector<InferResult>& results) {
  if (dir.empty()) return;
  for (std::size_t i = 0; i < results.size(); ++i) {
    run.emit(fs::path(dir) / ("trace_" + std::to_string(i) + ".csv"), trace_csv(results[i].trace));
  }
}

void cmd_project(Run& run, const Options& o) {
  const Dataset d = run.load_data(o.data);
  const auto metric = run.load<MetricModel>(o.metric, "metric.ckpt");
  const Sampler sampler = run.load_sampler_for(o.sampler, d, metric);
  const Dataset part = pick_domains(run, d, o.domains);
  const FeatureBank z = embed(metric, part, run.threads());
  const ProjectionConfig pc = run.pipeline().projection;
  std::vector<InferResult> results(z.size());
  const std::uint64_t checksum = std::holds_alternative<KnnSampler>(sampler) ? 0 : generator_net(sampler).checksum();
  parallel_for(
      z.size(),
      [&](std::size_t i) {
        ProjectionConfig c = pc;
        c.init_seed = target_seed(pc.init_seed, i);
        if (auto* k = std::get_if<KnnSampler>(&sampler)) {
          auto [row, idx] = knn_project(*k, z.row(i));
          results[i].trace.z_t_star = row;
          results[i].knn_index = idx;
        } else {
          results[i].trace = project(z.row(i), sampler, c);
        }
      },
      run.threads());
  if (checksum != 0 && generator_net(sampler).checksum() != checksum) throw Error("sampler weights changed");
  FeatureBank projected = z;
  std::string summary = "target_index,n_star,initial_loss,final_loss\n";
  for (std::size_t i = 0; i < results.size(); ++i) {
    RowVector r = results[i].trace.z_t_star;
    if (pc.normalize_output && r.norm() > 0.0) r /= r.norm();
    projected.features.row(static_cast<Eigen::Index>(i)) = r;
    const auto& t = results[i].trace;
    summary += std::to_string(i) + "," + std::to_string(t.n_star) + "," + fmt(t.initial_loss) + "," +
               fmt(t.final_loss) + "\n";
  }
  run.emit(run.out_path(o.out, "projected.csv"), to_csv(features_as_dataset(projected, d)));
  run.emit(run.out_path("", "projection_summary.csv"), summary);
  write_traces(run, o.traces, results);
  run.finish();
}

void cmd_infer(Run& run, const Options& o) {
  const auto metric = run.load<MetricModel>(o.metric, "metric.ckpt");
  const auto classifier = run.load<ClassifierModel>(o.classifier, "classifier.ckpt");
  const Dataset d = run.load_data(o.data);
  const Sampler sampler = run.load_sampler_for(o.sampler, d, metric);
  const Dataset part = pick_domains(run, d, o.domains);
  const FeatureBank z = embed(metric, part, run.threads());
  const auto results = infer_features(z.features, sampler, classifier, run.pipeline().projection, run.threads());
  std::vector<int> pred;
  for (const auto& r : results) pred.push_back(r.label);
  run.emit(run.out_path(o.out, "summary.csv"), summary_csv(results, z.labels));
  write_traces(run, o.traces, results);
  run.finish();
  std::printf("accuracy %.6f (%zu targets)\n", accuracy(pred, z.labels), pred.size());
}

void cmd_evaluate(Run& run, const Options& o) {
  const Dataset d = run.load_data(o.data);
  std::vector<ReportRow> rows;
  std::optional<DeepAllModel> deepall;
  std::optional<MetricModel> metric;
  std::optional<ClassifierModel> classifier;
  if (!o.deepall.empty()) {
    deepall = run.load<DeepAllModel>(o.deepall, "deepall.ckpt");
  } else {
    metric = run.load<MetricModel>(o.metric, "metric.ckpt");
    classifier = run.load<ClassifierModel>(o.classifier, "classifier.ckpt");
  }
  for (int t : run.targets()) {
    const Dataset part = d.filter_domains({t});
    const auto pred = deepall ? predict_deepall(*deepall, part.inputs())
                              : predict(*classifier, embed(*metric, part, run.threads()).features);
    rows.push_back({deepall ? "deepall_accuracy" : "no_G_phi_accuracy", "d" + std::to_string(t),
                    accuracy(pred, part.labels())});
  }
  run.emit(run.out_path(o.out, "evaluate.csv"), report_csv(rows));
  run.finish();
}

void cmd_adist(Run& run, const Options& o) {
  const Dataset d = run.load_data(o.data);
  std::optional<MetricModel> extractor;
  std::string name = "a_distance_raw";
  if (!o.deepall.empty()) {
    extractor = run.load<DeepAllModel>(o.deepall, "deepall.ckpt").extractor;
    name = "a_distance_deepall";
  } else if (!o.metric.empty()) {
    extractor = run.load<MetricModel>(o.metric, "metric.ckpt");
    name = "a_distance_metric";
  }
  DiscriminatorConfig dc = run.pipeline().discriminator;
  std::vector<int> doms;
  for (std::size_t i = 0; i < d.num_domains(); ++i) doms.push_back(static_cast<int>(i));
  std::vector<ReportRow> rows;
  for (std::size_t a = 0; a < doms.size(); ++a) {
    for (std::size_t b = a + 1; b < doms.size(); ++b) {
      auto feats = [&](int dom) {
        const Dataset part = d.filter_domains({dom});
        return extractor ? embed_inputs(*extractor, part.inputs(), run.threads()) : part.inputs();
      };
      const auto r = a_distance(feats(doms[a]), feats(doms[b]), dc, {doms[a], doms[b]});
      rows.push_back({name, domain_pair(doms[a], doms[b]), r.a_distance});
      rows.push_back({"discriminator_error", domain_pair(doms[a], doms[b]), r.discriminator_error});
    }
  }
  run.emit(run.out_path(o.out, "adist.csv"), report_csv(rows));
  run.finish();
}

void cmd_cluster_stats(Run& run, const Options& o) {
  const Dataset d = run.load_data(o.data);
  const Dataset part = pick_domains(run, d, o.domains == "targets" ? "sources" : o.domains);
  const MetricModel m = o.deepall.empty() ? run.load<MetricModel>(o.metric, "metric.ckpt")
                                          : run.load<DeepAllModel>(o.deepall, "deepall.ckpt").extractor;
  const FeatureBank bank = embed(m, part, run.threads());
  const ClusterStats s = cluster_stats(bank);
  const std::string scope = o.deepall.empty() ? "metric" : "deepall";
  std::vector<ReportRow> rows{{"intra_mean", scope, s.intra_mean},
                              {"inter_mean", scope, s.inter_mean},
                              {"margin", scope, s.margin}};
  run.emit(run.out_path(o.out, "cluster_stats.csv"), report_csv(rows));
  run.finish();
}

void cmd_bound_terms(Run& run, const Options& o) {
  const auto metric = run.load<MetricModel>(o.metric, "metric.ckpt");
  const auto classifier = run.load<ClassifierModel>(o.classifier, "classifier.ckpt");
  const Dataset d = run.load_data(o.data);
  const Sampler sampler = run.load_sampler_for(o.sampler, d, metric);
  const FeatureBank bank = embed(metric, d.filter_domains(run.sources()), run.threads());
  std::vector<ReportRow> rows;
  for (int t : run.targets()) {
    const FeatureBank z = embed(metric, d.filter_domains({t}), run.threads());
    const auto results = infer_features(z.features, sampler, classifier, run.pipeline().projection, run.threads());
    Tensor2 projected(static_cast<Eigen::Index>(results.size()), z.features.cols());
    std::vector<int> pred;
    for (std::size_t i = 0; i < results.size(); ++i) {
      projected.row(static_cast<Eigen::Index>(i)) = results[i].trace.z_t_star;
      pred.push_back(results[i].label);
    }
    const auto oracle = nearest_bank_labels(bank, projected);
    const BoundReport r = bound_terms(z.labels, pred, oracle);
    const std::string scope = "d" + std::to_string(t);
    rows.push_back({"lhs", scope, r.lhs});
    rows.push_back({"term_i", scope, r.term_i});
    rows.push_back({"term_ii", scope, r.term_ii});
  }
  run.emit(run.out_path(o.out, "bound_terms.csv"), report_csv(rows));
  run.finish();
}

void cmd_experiment(Run& run, const std::string& command) {
  ExperimentPlan plan = experiment_plan(run.cfg(), command);
  plan.config.threads = run.threads();
  ResultTable t;
  if (command == "ablate") {
    t = run_ablation(plan);
  } else if (command == "sampler-compare") {
    t = run_sampler_comparison(plan);
  } else if (command == "fraction-sweep") {
    t = run_fraction_sweep(plan, run.cfg().get_reals("fractions"));
  } else if (command == "single-source") {
    t = run_single_source(plan);
  } else if (command == "beta-sweep") {
    t = run_beta_sweep(plan, run.cfg().get_reals("betas"));
  } else if (command == "epsilon-sweep") {
    const auto& mode = run.cfg().get_string("epsilon_mode");
    if (mode != "absolute" && mode != "fraction") throw Error("epsilon_mode must be absolute or fraction");
    t = run_epsilon_sweep(plan, run.cfg().get_reals("epsilons"),
                          mode == "absolute" ? EpsilonMode::kAbsolute : EpsilonMode::kFractionOfNStar);
  } else if (command == "fewshot") {
    std::vector<std::size_t> shots;
    for (auto s : run.cfg().get_ints("shots")) {
      if (s < 0) throw Error("shots: negative entry");
      shots.push_back(static_cast<std::size_t>(s));
    }
    t = run_fewshot(plan, shots);
  }
  run.emit(run.out_path("", command + "_results.csv"), results_csv(t));
  run.emit(run.out_path("", command + "_aggregate.csv"), aggregate_csv(t));
  run.finish(plan.seeds);
  std::cout << aggregate_csv(t);
}

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

const char* error_kind(const std::exception& e) {
  if (dynamic_cast<const CheckpointError*>(&e)) return "checkpoint";
  if (dynamic_cast<const ParseError*>(&e)) return "parse";
  if (dynamic_cast<const ShapeError*>(&e)) return "shape";
  if (dynamic_cast<const NumericError*>(&e)) return "numeric";
  if (dynamic_cast<const fs::filesystem_error*>(&e)) return "io";
  return "error";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Inference-time target projection for domain generalization"};
  app.require_subcommand(1);
  Options o;
  app.add_option("-c,--config", o.config_path, "config file (key = value)");
  app.add_option("--manifest", o.manifest_path, "reuse the configuration recorded in a run manifest");
  app.add_option("-s,--set", o.overrides, "override a config key: key=value");
  app.add_option("-o,--out-dir", o.out_dir, "output directory (config key out_dir)");
  app.add_flag("-q,--quiet", o.quiet, "suppress warnings");

  struct Sub {
    const char* name;
    const char* help;
    bool data, metric, sampler, classifier, deepall, traces, domains;
  };
  const std::vector<Sub> subs = {
      {"gen-data", "generate the multi-domain dataset CSV", false, false, false, false, false, false, false},
      {"train-metric", "train the label-preserving feature extractor", true, false, false, false, false, false, false},
      {"train-deepall", "train the pooled-source cross-entropy baseline", true, false, false, false, false, false, false},
      {"train-vae", "train the VAE sampler on source features", true, true, false, false, false, false, false},
      {"train-gan", "train the GAN sampler on source features", true, true, false, false, false, false, false},
      {"train-classifier", "train the classifier on source features", true, true, false, false, false, false, false},
      {"embed", "dump features of a domain subset", true, true, false, false, false, false, true},
      {"project", "project target features onto the source manifold", true, true, true, false, false, true, true},
      {"infer", "project and classify target examples", true, true, true, true, false, true, true},
      {"evaluate", "classify target features without projection", true, true, false, true, true, false, false},
      {"adist", "pairwise A-distance between domains", true, true, false, false, true, false, false},
      {"cluster-stats", "intra/inter-class cosine statistics", true, true, false, false, true, false, true},
      {"bound-terms", "risk decomposition terms on the target domains", true, true, true, true, false, false, false},
      {"ablate", "deepall / no_G_phi / no_f_theta / full grid", false, false, false, false, false, false, false},
      {"sampler-compare", "VAE vs GAN vs 1-NN", false, false, false, false, false, false, false},
      {"fraction-sweep", "source data fraction sweep", false, false, false, false, false, false, false},
      {"single-source", "train on one source domain at a time", false, false, false, false, false, false, false},
      {"beta-sweep", "projection step size sweep", false, false, false, false, false, false, false},
      {"epsilon-sweep", "stopping offset sweep around n*", false, false, false, false, false, false, false},
      {"fewshot", "fine-tune on |T| labelled target examples", false, false, false, false, false, false, false},
  };
  for (const auto& s : subs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    if (s.data) sub->add_option("--data", o.data, "dataset CSV (default <out_dir>/data.csv)");
    if (s.metric) sub->add_option("--metric", o.metric, "metric checkpoint");
    if (s.sampler) sub->add_option("--sampler", o.sampler, "sampler checkpoint (vae, gan or knn)");
    if (s.classifier) sub->add_option("--classifier", o.classifier, "classifier checkpoint");
    if (s.deepall) sub->add_option("--deepall", o.deepall, "Deep All checkpoint");
    if (s.traces) sub->add_option("--traces", o.traces, "directory for per-target loss traces");
    if (s.domains) sub->add_option("--domains", o.domains, "all, sources or targets");
    if (std::string(s.name).rfind("train-", 0) == 0 || !s.data || s.metric) {
      sub->add_option("--out", o.out, "output path");
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "tarpro: error: usage: %s\n", one_line(e.what()).c_str());
    return 2;
  }

  try {
    if (o.quiet) set_log_level(LogLevel::kQuiet);
    const std::string cmd = app.get_subcommands().front()->get_name();
    Run run(cmd, o);
    if (cmd == "gen-data") cmd_gen_data(run, o);
    else if (cmd == "train-metric") cmd_train_metric(run, o);
    else if (cmd == "train-deepall") cmd_train_deepall(run, o);
    else if (cmd == "train-vae") cmd_train_sampler(run, o, false);
    else if (cmd == "train-gan") cmd_train_sampler(run, o, true);
    else if (cmd == "train-classifier") cmd_train_classifier(run, o);
    else if (cmd == "embed") cmd_embed(run, o);
    else if (cmd == "project") cmd_project(run, o);
    else if (cmd == "infer") cmd_infer(run, o);
    else if (cmd == "evaluate") cmd_evaluate(run, o);
    else if (cmd == "adist") cmd_adist(run, o);
    else if (cmd == "cluster-stats") cmd_cluster_stats(run, o);
    else if (cmd == "bound-terms") cmd_bound_terms(run, o);
    else cmd_experiment(run, cmd);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "tarpro: error: %s: %s\n", error_kind(e), one_line(e.what()).c_str());
    return 1;
  }
  return 0;
}
