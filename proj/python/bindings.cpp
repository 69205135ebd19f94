#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <filesystem>
#include <string>
#include <vector>

#include "tarpro/checkpoint.hpp"
#include "tarpro/config.hpp"
#include "tarpro/diagnostics.hpp"
#include "tarpro/experiments.hpp"
#include "tarpro/projection.hpp"

namespace py = pybind11;
using namespace tarpro;

namespace {

RunConfig config_from(const std::string& text, const std::vector<std::string>& overrides) {
  RunConfig c = parse_config(text);
  for (const auto& o : overrides) c.apply_override(o);
  return c;
}

py::dict config_dict(const RunConfig& c) {
  py::dict d;
  for (const auto& k : config_schema()) d[py::str(k.name)] = c.raw(k.name);
  return d;
}

FeatureBank make_bank(const Tensor2& features, const std::vector<int>& labels) {
  if (static_cast<std::size_t>(features.rows()) != labels.size()) {
    throw ShapeError("features and labels differ in length");
  }
  FeatureBank b;
  b.features = features;
  b.labels = labels;
  b.domains.assign(labels.size(), 0);
  for (int y : labels) {
    if (y < 0) throw ShapeError("negative label");
    b.num_classes = std::max(b.num_classes, static_cast<std::size_t>(y) + 1);
  }
  return b;
}

ResultTable dispatch(const std::string& name, const RunConfig& cfg) {
  const ExperimentPlan plan = experiment_plan(cfg, name);
  if (name == "ablate") return run_ablation(plan);
  if (name == "sampler-compare") return run_sampler_comparison(plan);
  if (name == "fraction-sweep") return run_fraction_sweep(plan, cfg.get_reals("fractions"));
  if (name == "single-source") return run_single_source(plan);
  if (name == "beta-sweep") return run_beta_sweep(plan, cfg.get_reals("betas"));
  if (name == "epsilon-sweep") {
    const auto& mode = cfg.get_string("epsilon_mode");
    if (mode != "absolute" && mode != "fraction") throw Error("epsilon_mode must be absolute or fraction");
    return run_epsilon_sweep(plan, cfg.get_reals("epsilons"),
                             mode == "absolute" ? EpsilonMode::kAbsolute : EpsilonMode::kFractionOfNStar);
  }
  if (name == "fewshot") {
    std::vector<std::size_t> shots;
    for (auto s : cfg.get_ints("shots")) {
      if (s < 0) throw Error("shots: negative entry");
      shots.push_back(static_cast<std::size_t>(s));
    }
    return run_fewshot(plan, shots);
  }
  throw Error("unknown experiment: " + name);
}

// One trained pipeline for a config and seed; models are trained on first use.
class Pipeline {
 public:
  Pipeline(const RunConfig& cfg, std::uint64_t seed)
      : cfg_(cfg),
        pipe_(dataset_spec(cfg).generate(seed), ints(cfg.get_ints("sources")),
              pipeline_config(cfg).seeded(seed)) {}

  double evaluate(const std::string& variant, const std::string& sampler, int target) {
    return pipe_.evaluate(parse_variant(variant), parse_sampler(sampler), target);
  }

  py::dict infer(int target, const std::string& sampler) {
    const auto& res = pipe_.infer_target(parse_sampler(sampler), target, pipe_.config().projection);
    std::vector<int> labels, n_star;
    std::vector<double> initial, at_star;
    for (const auto& r : res) {
      labels.push_back(r.label);
      n_star.push_back(static_cast<int>(r.trace.n_star));
      initial.push_back(r.trace.initial_loss);
      at_star.push_back(r.trace.loss_at_n_star());
    }
    py::dict d;
    d["labels"] = labels;
    d["n_star"] = n_star;
    d["initial_loss"] = initial;
    d["loss_at_n_star"] = at_star;
    return d;
  }

  Tensor2 embed(const Tensor2& x) { return embed_inputs(pipe_.metric(), x, pipe_.config().threads); }
  std::vector<int> classify(const Tensor2& z) { return predict(pipe_.classifier(), z); }
  const FeatureBank& bank() { return pipe_.bank(); }

  void save(const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const std::string text = cfg_.to_text();
    save_checkpoint(pipe_.metric(), dir / "metric.ckpt", text);
    save_checkpoint(pipe_.classifier(), dir / "classifier.ckpt", text);
    save_checkpoint(std::get<VaeModel>(pipe_.sampler(SamplerKind::kVae)), dir / "vae.ckpt", text);
  }

  const Dataset& data() const { return pipe_.data(); }

 private:
  static std::vector<int> ints(const std::vector<std::int64_t>& v) { return {v.begin(), v.end()}; }

  RunConfig cfg_;
  TrainedPipeline pipe_;
};

}  // namespace

PYBIND11_MODULE(_tarpro, m) {
  m.doc() = "Inference-time target projection for domain generalization";

  py::register_exception<Error>(m, "Error", PyExc_ValueError);

  py::class_<Dataset>(m, "Dataset")
      .def_property_readonly("inputs", &Dataset::inputs)
      .def_property_readonly("labels", &Dataset::labels)
      .def_property_readonly("domains", &Dataset::domains)
      .def_readonly("dim", &Dataset::dim)
      .def_readonly("num_classes", &Dataset::num_classes)
      .def_readonly("domain_names", &Dataset::domain_names)
      .def("__len__", &Dataset::size)
      .def("filter_domains", &Dataset::filter_domains, py::arg("keep"))
      .def("to_csv", [](const Dataset& d) { return to_csv(d); })
      .def_static("from_csv", [](const std::string& text) { return parse_csv(text); }, py::arg("text"));

  m.def("two_moons", &default_two_moons, py::arg("angles"), py::arg("n_per_domain") = 300,
        py::arg("noise") = 0.08, py::arg("seed") = 0, "Rotated two-moons, one domain per angle in degrees.");

  m.def("default_config", [] { return config_dict(RunConfig{}); });
  m.def("parse_config", [](const std::string& text, const std::vector<std::string>& overrides) {
          return config_dict(config_from(text, overrides));
        },
        py::arg("text"), py::arg("overrides") = std::vector<std::string>{});

  m.def("pairwise_loss", [](const Tensor2& f, const std::vector<int>& labels, double tau) {
          return pairwise_loss(f, labels, tau);
        },
        py::arg("features"), py::arg("labels"), py::arg("tau") = 0.1);
  m.def("loss_ls", [](const RowVector& a, const RowVector& b) { return loss_LS(a, b); },
        py::arg("z_t"), py::arg("z"));
  m.def("smooth", &smooth, py::arg("values"), py::arg("window"));
  m.def("elbow_index", &elbow_index, py::arg("smoothed"));

  m.def("a_distance", [](const Tensor2& a, const Tensor2& b, std::uint64_t seed) {
          DiscriminatorConfig c;
          c.seed = seed;
          const DivergenceReport r = a_distance(a, b, c);
          py::dict d;
          d["a_distance"] = r.a_distance;
          d["raw"] = r.a_distance_raw;
          d["error"] = r.discriminator_error;
          return d;
        },
        py::arg("a"), py::arg("b"), py::arg("seed") = 0);
  m.def("cluster_stats", [](const Tensor2& f, const std::vector<int>& labels) {
          const ClusterStats s = cluster_stats(make_bank(f, labels));
          py::dict d;
          d["intra_mean"] = s.intra_mean;
          d["inter_mean"] = s.inter_mean;
          d["margin"] = s.margin;
          d["excluded_classes"] = s.excluded_classes;
          return d;
        },
        py::arg("features"), py::arg("labels"));

  m.def("load_checkpoint", [](const std::filesystem::path& path) {
          std::string config;
          const Model model = load_checkpoint(path, &config);
          return py::make_tuple(model_kind(model), config);
        },
        py::arg("path"), "Validates a checkpoint; returns (kind, config snapshot).");

  m.def("run_experiment", [](const std::string& name, const std::string& config,
                             const std::vector<std::string>& overrides) {
          ResultTable t;
          {
            py::gil_scoped_release release;
            t = dispatch(name, config_from(config, overrides));
          }
          return py::make_tuple(results_csv(t), aggregate_csv(t));
        },
        py::arg("name"), py::arg("config") = "", py::arg("overrides") = std::vector<std::string>{},
        "Runs a named experiment; returns (results_csv, aggregate_csv).");

  py::class_<Pipeline>(m, "Pipeline")
      .def(py::init([](const std::string& config, const std::vector<std::string>& overrides, std::uint64_t seed) {
             return Pipeline(config_from(config, overrides), seed);
           }),
           py::arg("config") = "", py::arg("overrides") = std::vector<std::string>{}, py::arg("seed") = 0)
      .def_property_readonly("data", &Pipeline::data, py::return_value_policy::reference_internal)
      .def("evaluate", &Pipeline::evaluate, py::arg("variant") = "full", py::arg("sampler") = "vae",
           py::arg("target") = 3, py::call_guard<py::gil_scoped_release>())
      .def("infer", &Pipeline::infer, py::arg("target") = 3, py::arg("sampler") = "vae")
      .def("embed", &Pipeline::embed, py::arg("inputs"))
      .def("classify", &Pipeline::classify, py::arg("features"))
      .def("bank_features", [](Pipeline& p) { return p.bank().features; })
      .def("bank_labels", [](Pipeline& p) { return p.bank().labels; })
      .def("save", &Pipeline::save, py::arg("directory"));
}
