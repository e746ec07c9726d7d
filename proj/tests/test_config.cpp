#include <catch2/catch_amalgamated.hpp>

#include <fstream>

#include "support.hpp"

using namespace drnn;
using testing::TempDir;

namespace {

const char* kToml = R"(# rate sweep
scenario = "improvement"
sizes = [64, [128, 96],
         256]   # trailing comment
replications = 1_000
methods = ["unit", "dr"]
base_seed = 12345678901234
workers = 2
split = "exact_half"
neighbor_cap = 8
alpha = 0.1

[generator]
sigma = 0.5
p = 0.8
factor.kind = "continuous"
factor.d = 2
noise = { }
)";

}  // namespace

TEST_CASE("TOML subset parses tables, dotted keys, arrays, and comments", "[config]") {
  const auto j = parse_config_text(R"(
a = 1
b = -2.5e-1
c = "x\"y"
d = [1, 2,
     3]
e = true
[t.u]
v = "w"
k.l = +3
)",
                                   true);
  CHECK(j["a"] == 1);
  CHECK(j["b"] == -0.25);
  CHECK(j["c"] == "x\"y");
  CHECK(j["d"].size() == 3);
  CHECK(j["e"] == true);
  CHECK(j["t"]["u"]["v"] == "w");
  CHECK(j["t"]["u"]["k"]["l"] == 3);
}

TEST_CASE("malformed TOML reports the line", "[config]") {
  try {
    parse_config_text("a = 1\nb = \n", true);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config_text("a = 1\na = 2\n", true), ConfigError);
  CHECK_THROWS_AS(parse_config_text("a = \"open\n", true), ConfigError);
  CHECK_THROWS_AS(parse_config_text("a = [1, 2\n", true), ConfigError);
  CHECK_THROWS_AS(parse_config_text("[[x]]\n", true), ConfigError);
  CHECK_THROWS_AS(parse_config_text("a = 1 2\n", true), ConfigError);
  CHECK_THROWS_AS(parse_config_text("{\"a\": ", false), ConfigError);
}

TEST_CASE("experiment config from TOML", "[config]") {
  // Inline tables are outside the subset.
  CHECK_THROWS_AS(parse_config_text(kToml, true), ConfigError);
  std::string text = kToml;
  text.erase(text.find("noise = { }"));
  const auto c = experiment_config_from_json(parse_config_text(text, true));
  CHECK(c.scenario == Scenario::improvement);
  REQUIRE(c.sizes.size() == 3);
  CHECK(c.sizes[1] == std::pair<std::size_t, std::size_t>{128, 96});
  CHECK(c.replications == 1000);
  CHECK(c.methods == std::vector<std::string>{"unit", "dr"});
  CHECK(c.base_seed == 12345678901234ULL);
  CHECK(c.workers == 2);
  CHECK(c.split == SplitMode::exact_half);
  CHECK(c.neighbor_cap.kind == NeighborCap::Kind::fixed);
  CHECK(c.neighbor_cap.fixed == 8);
  CHECK(c.alpha == 0.1);
  CHECK(c.generator.sigma == 0.5);
  CHECK(c.generator.p == 0.8);
  CHECK(c.generator.factor.unit_kind == FactorKind::continuous);
  CHECK(c.generator.factor.time_kind == FactorKind::continuous);
  CHECK(c.generator.factor.d == 2);
}

TEST_CASE("JSON and TOML configs agree", "[config]") {
  const auto a = experiment_config_from_json(parse_config_text(R"(
scenario = "coverage"
sizes = [200]
replications = 500
[tuning]
mode = "theory_discrete"
plugin_constant = 0.5
[generator.factor]
m = 5
)",
                                                               true));
  const auto b = experiment_config_from_json(parse_config_text(R"({
  "scenario": "coverage", "sizes": [200], "replications": 500,
  "tuning": {"mode": "theory_discrete", "plugin_constant": 0.5},
  "generator": {"factor": {"m": 5}}
})",
                                                               false));
  for (const auto* c : {&a, &b}) {
    CHECK(c->scenario == Scenario::coverage);
    CHECK(c->alpha == 0.05);
    CHECK(c->neighbor_cap.kind == NeighborCap::Kind::sqrt);
    CHECK(c->tuning.mode == TuningRule::Mode::theory_discrete);
    CHECK(c->tuning.plugin_constant == 0.5);
    CHECK(c->generator.factor.m_unit == 5);
    CHECK(c->generator.factor.m_time == 5);
  }
}

TEST_CASE("scenario defaults", "[config]") {
  const auto r = experiment_config_from_json(nlohmann::json{{"scenario", "robustness"}});
  CHECK(r.target_unit == 0u);
  const auto t = experiment_config_from_json(nlohmann::json{{"scenario", "tensor_demo"}});
  CHECK(t.methods == std::vector<std::string>{"tr", "unit"});
  const auto d = experiment_config_from_json(nlohmann::json::object());
  CHECK(d.scenario == Scenario::rate_sweep);
  CHECK(d.methods == std::vector<std::string>{"unit", "time", "dr"});
  CHECK_FALSE(d.alpha.has_value());
}

TEST_CASE("invalid experiment configs", "[config]") {
  using nlohmann::json;
  auto bad = [](const json& j) { return experiment_config_from_json(j); };
  CHECK_THROWS_AS(bad(json{{"replicates", 3}}), ConfigError);
  CHECK_THROWS_AS(bad(json{{"scenario", "bogus"}}), ConfigError);
  CHECK_THROWS_AS(bad(json{{"sizes", json::array()}}), ConfigError);
  CHECK_THROWS_AS(bad(json{{"sizes", {0}}}), ConfigError);
  CHECK_THROWS_AS(bad(json{{"sizes", {json{1, 2, 3}}}}), ConfigError);
  CHECK_THROWS_AS(bad(json{{"replications", 0}}), ConfigError);
  CHECK_THROWS_AS(bad(json{{"replications", -1}}), ConfigError);
  CHECK_THROWS_AS(bad(json{{"methods", {"tr"}}}), ConfigError);
  CHECK_THROWS_AS(bad(json{{"methods", {"knn"}}}), ConfigError);
  CHECK_THROWS_AS(bad(json{{"scenario", "tensor_demo"}, {"methods", {"dr"}}}), ConfigError);
  CHECK_THROWS_AS(bad(json{{"alpha", 1.0}}), ConfigError);
  CHECK_THROWS_AS(bad(json{{"sigma_source", "guess"}}), ConfigError);
  CHECK_THROWS_AS(bad(json{{"neighbor_cap", "cube"}}), ConfigError);
  CHECK_THROWS_AS(bad(json{{"neighbor_cap", 0}}), ConfigError);
  CHECK_THROWS_AS(bad(json{{"split", "thirds"}}), ConfigError);
  CHECK_THROWS_AS(bad(json{{"target_unit", 100}, {"sizes", {100}}}), ConfigError);
  CHECK_THROWS_AS(bad(json{{"base_seed", "x"}}), ConfigError);
  CHECK_THROWS_AS(bad(json{{"tuning", {{"mode", "oracle"}}}}), ConfigError);
  CHECK_THROWS_AS(bad(json{{"tuning", {{"grid", json::array()}}}}), ConfigError);
  CHECK_THROWS_AS(bad(json{{"tuning", {{"grid", {json{1}}}}}}), ConfigError);
  CHECK_THROWS_AS(bad(json{{"tuning", {{"delta", 1.5}}}}), ConfigError);
  CHECK_THROWS_AS(bad(json{{"tuning", {{"plugin_constant", 0}}}}), ConfigError);
  CHECK_THROWS_AS(bad(json{{"tuning", {{"eta", 1}}}}), ConfigError);
  CHECK_THROWS_AS(bad(json{{"generator", {{"sigma", -1}}}}), ConfigError);
  CHECK_THROWS_AS(bad(json{{"generator", {{"p", 0}}}}), ConfigError);
  CHECK_THROWS_AS(bad(json{{"generator", {{"factor", {{"kind", "mixed"}}}}}}), ConfigError);
  CHECK_THROWS_AS(bad(json{{"generator", {{"factor", {{"rank", 2}}}}}}), ConfigError);
  CHECK_THROWS_AS(bad(json{{"generator", {{"factor", {{"d", 0}}}}}}), ConfigError);
  CHECK_THROWS_AS(bad(json{{"generator", {{"surface", {{"kind", "cubic"}}}}}}), ConfigError);
  CHECK_THROWS_AS(bad(json{{"generator", {{"noise", {{"kind", "cauchy"}}}}}}), ConfigError);
  CHECK_THROWS_AS(bad(json{{"generator", {{"sigma", "big"}}}}), ConfigError);
}

TEST_CASE("instance configs and files", "[config]") {
  TempDir dir("config_files");
  {
    std::ofstream(dir / "inst.toml") << "n = 30\nt = 20\nseed = 9\n[surface]\nkind = \"nonlinear\"\n"
                                        "fn = \"additive-quadratic\"\n[noise]\nkind = \"uniform\"\n";
    std::ofstream(dir / "exp.json") << R"({"generator": {"n": 7, "t": 8}})";
    std::ofstream(dir / "broken.json") << "{";
  }
  const auto a = load_instance_config(dir / "inst.toml");
  CHECK(a.n_units == 30);
  CHECK(a.n_times == 20);
  CHECK(a.seed == 9);
  CHECK(a.surface.kind == SurfaceConfig::Kind::nonlinear);
  CHECK(a.surface.fn == NonlinearFn::additive_quadratic);
  CHECK(a.noise_kind == NoiseKind::uniform);
  const auto b = load_instance_config(dir / "exp.json");
  CHECK(b.n_units == 7);
  CHECK(b.n_times == 8);
  CHECK_THROWS_AS(load_instance_config(dir / "missing.toml"), ConfigError);
  CHECK_THROWS_AS(load_experiment_config(dir / "broken.json"), ConfigError);
}
