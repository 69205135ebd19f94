#include "doctest.h"

#include "tarpro/config.hpp"

using namespace tarpro;

namespace {

std::size_t error_line(std::string_view text) {
  try {
    parse_config(text);
  } catch (const ParseError& e) {
    return e.line();
  }
  return 0;
}

}  // namespace

TEST_CASE("config: empty text gives every default") {
  const RunConfig c = parse_config("");
  CHECK(c == RunConfig());
  CHECK(c.get_real("tau") == 0.1);
  CHECK(c.get_real("beta") == 0.01);
  CHECK(c.get_count("M") == 2000);
  CHECK(c.get_count("W") == 25);
  CHECK(c.get_string("sampler") == "vae");
  CHECK(c.get_ints("seeds") == std::vector<std::int64_t>{0, 1, 2, 3, 4});
  CHECK(c.get_reals("angles") == std::vector<double>{0, 15, 30, 45});
  for (const auto& key : config_schema()) CHECK(c.has(key.name));
}

TEST_CASE("config: values, comments and whitespace") {
  const RunConfig c = parse_config("# run\n  tau = 0.2   # sharper\n\nnormalize=false\nsources = 0, 2\n");
  CHECK(c.get_real("tau") == 0.2);
  CHECK_FALSE(c.get_bool("normalize"));
  CHECK(c.get_ints("sources") == std::vector<std::int64_t>{0, 2});
}

TEST_CASE("config: errors name the line") {
  CHECK(error_line("tau = abc\n") == 1);
  CHECK(error_line("beta = 0.01\nbogus = 3\n") == 2);
  CHECK(error_line("tau = 0.1\n\ntau = 0.2\n") == 3);
  CHECK(error_line("seed 4\n") == 1);
  CHECK(error_line("M = -3\n") == 1);
  CHECK_THROWS_WITH_AS(parse_config("tau = abc\n"), doctest::Contains("tau"), ParseError);
  CHECK_THROWS_WITH_AS(parse_config("tau = 1\ntau = 2\n"), doctest::Contains("line 1"), ParseError);
}

TEST_CASE("config: overrides and text round trip") {
  RunConfig c;
  c.apply_override("kl_weight=0.5");
  CHECK(c.get_real("kl_weight") == 0.5);
  CHECK_THROWS_AS(c.apply_override("nonsense"), Error);
  CHECK_THROWS_AS(c.apply_override("nope=1"), Error);
  CHECK(parse_config(c.to_text()) == c);
}

TEST_CASE("config: plans and pipeline settings follow the keys") {
  const RunConfig c = parse_config("beta = 0.05\nseeds = 3, 4\nsampler = gan\ntargets = 2\n");
  const PipelineConfig p = pipeline_config(c);
  CHECK(p.projection.beta == 0.05);
  const ExperimentPlan plan = experiment_plan(c, "ablation");
  CHECK(plan.seeds == std::vector<std::uint64_t>{3, 4});
  CHECK(plan.sampler == SamplerKind::kGan);
  CHECK(plan.targets == std::vector<int>{2});
  CHECK(plan.overrides.count("beta") == 1);
  CHECK(plan.overrides.count("tau") == 0);
}
