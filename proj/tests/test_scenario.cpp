#include <filesystem>
#include <set>

#include <doctest.h>
#include <json.hpp>

#include "dhh/io.hpp"
#include "dhh/scenario.hpp"

using namespace dhh;
namespace fs = std::filesystem;

TEST_CASE("scenario catalog") {
  const auto& all = list_scenarios();
  const std::set<std::string> want{"diffusion",          "maxwellization", "oracle-compare",
                                   "variance-scaling",   "histories-nscaling", "ehrenfest",
                                   "conserved-decoherence", "local-equilibrium-peaking"};
  std::set<std::string> got;
  for (const auto& s : all) {
    got.insert(s.name);
    CHECK_FALSE(s.equations.empty());
    CHECK_FALSE(s.description.empty());
    CHECK(scenario_from_name(s.name) == s.kind);
    CHECK(scenario_info(s.kind).name == s.name);
  }
  CHECK(got == want);
  CHECK(all.size() == 8);
  CHECK_FALSE(scenario_from_name("nope").has_value());
}

TEST_CASE("minimal config takes defaults") {
  const auto c = parse_config(R"({"schema_version": 1, "scenario": "diffusion"})");
  const auto d = default_config(ScenarioKind::diffusion);
  CHECK(c.scenario == ScenarioKind::diffusion);
  CHECK(config_echo(c) == config_echo(d));
  CHECK(c.physics.number("gamma") == d.physics.number("gamma"));

  const auto o = parse_config(R"({"schema_version": 1, "scenario": "diffusion", "physics": {"kT": 2.5}})");
  CHECK(o.physics.number("kT") == 2.5);
  CHECK(o.physics.number("M") == d.physics.number("M"));
  // The echo is itself a valid config that reproduces the same echo.
  CHECK(config_echo(parse_config(config_echo(o))) == config_echo(o));
}

TEST_CASE("config validation errors name the field") {
  try {
    parse_config(R"({"schema_version": 1, "scenario": "diffusion", "physics": {"gamma": 0}})");
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(e.field() == "physics.gamma");
    CHECK(std::string(e.what()).find("gamma must be positive") != std::string::npos);
  }
  try {
    parse_config(R"({"schema_version": 1, "scenario": "diffusion", "physics": {"gama": 1}})");
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(e.field() == "physics.gama");
  }
  CHECK_THROWS_AS(parse_config(R"({"scenario": "diffusion"})"), ValidationError);
  CHECK_THROWS_AS(parse_config(R"({"schema_version": 2, "scenario": "diffusion"})"), ValidationError);
  CHECK_THROWS_AS(parse_config(R"({"schema_version": 1, "scenario": "warp-drive"})"), ValidationError);
  CHECK_THROWS_AS(parse_config(R"({"schema_version": 1, "scenario": "diffusion", "physics": {"M": "heavy"}})"),
                  ValidationError);
  CHECK_THROWS_AS(parse_config(R"({"schema_version": 1, "scenario": "diffusion", "extra": 1})"), ValidationError);
  try {
    parse_config(R"({"schema_version": 1, "scenario": "ehrenfest"})");
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(e.field() == "seed");
  }
  const auto seeded = parse_config(R"({"schema_version": 1, "scenario": "ehrenfest"})", "<t>", 42);
  CHECK(seeded.seed == 42u);
}

TEST_CASE("malformed config text reports its line") {
  try {
    parse_config("{\n  \"schema_version\": 1,\n  \"scenario\": \"diffusion\",\n  \"scenario\": \"ehrenfest\"\n}", "c.json");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    const std::string w = e.what();
    CHECK(w.find("duplicate key \"scenario\"") != std::string::npos);
    CHECK(w.find("line 4") != std::string::npos);
  }
  try {
    parse_config("{\n  \"schema_version\": 1,\n  \"scenario\": diffusion\n}", "c.json");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("shipped configs equal the documented defaults") {
  for (const auto& s : list_scenarios()) {
    CAPTURE(s.name);
    const fs::path p = fs::path(DHH_SOURCE_DIR) / "configs" / (s.name + ".json");
    REQUIRE(fs::exists(p));
    CHECK(io::read_file(p) == default_config_json(s.kind));
    CHECK(config_echo(load_config(p)) == config_echo(default_config(s.kind)));
  }
}

TEST_CASE("scenario runs are deterministic and write their artifacts") {
  const auto root = fs::temp_directory_path() / "dhh_test_runs";
  fs::remove_all(root);
  for (auto kind : {ScenarioKind::histories_nscaling, ScenarioKind::conserved_decoherence}) {
    auto a = default_config(kind), b = a;
    a.output_dir = root / "a";
    b.output_dir = root / "b";
    const auto ra = run_scenario(a);
    const auto rb = run_scenario(b);
    CHECK(ra.passed());
    REQUIRE(ra.artifacts.size() == rb.artifacts.size());
    for (const auto& name : ra.artifacts) {
      CAPTURE(name);
      CHECK(io::read_file(a.output_dir / name) == io::read_file(b.output_dir / name));
    }
    const auto report = nlohmann::json::parse(io::read_file(a.output_dir / "report.json"));
    CHECK(report["pass"] == true);
    CHECK(report["metrics"].size() == ra.metrics.size());
    CHECK(report["params"]["scenario"] == scenario_info(kind).name);
    fs::remove_all(root);
  }
}

TEST_CASE("seed changes random scenario outcomes") {
  auto a = default_config(ScenarioKind::conserved_decoherence), b = a;
  b.seed = 99;
  RunOptions o;
  o.write_artifacts = false;
  const auto ra = run_scenario(a, o), rb = run_scenario(b, o);
  CHECK(ra.find("bound_max_excess")->value != rb.find("bound_max_excess")->value);
}

TEST_CASE("ehrenfest precondition violation is flagged") {
  auto c = parse_config(R"({"schema_version": 1, "scenario": "ehrenfest", "seed": 3,
                            "physics": {"sigma_ratio": 0.5, "instances": 2}})");
  RunOptions o;
  o.write_artifacts = false;
  const auto r = run_scenario(c, o);
  CHECK_FALSE(r.passed());
  CHECK_FALSE(r.find("sigma_over_spread")->pass);
  CHECK_FALSE(r.find("asymptotic_relative_error")->pass);
  bool warned = false;
  for (const auto& w : r.warnings) warned = warned || w.find("precondition") != std::string::npos;
  CHECK(warned);
}

TEST_CASE("batch runs preserve input order") {
  std::vector<ScenarioConfig> cs{default_config(ScenarioKind::conserved_decoherence),
                                 default_config(ScenarioKind::histories_nscaling)};
  RunOptions o;
  o.write_artifacts = false;
  const auto rs = run_batch(cs, o);
  REQUIRE(rs.size() == 2);
  CHECK(rs[0].scenario == "conserved-decoherence");
  CHECK(rs[1].scenario == "histories-nscaling");
}
