#include <cmath>
#include <set>
#include <sstream>

#include <json.hpp>

#include "dhh/io.hpp"
#include "dhh/scenario.hpp"

namespace dhh {

namespace {

using nlohmann::json;

const std::vector<ScenarioInfo> kCatalog = {
    {ScenarioKind::diffusion, "diffusion",
     "Position variance growth and the binned current-gradient relation at long times",
     {"var_q(t) ~ 2 D t, D = kT/(2 M gamma)", "<g> = -(kT/2gamma) d<n>/dx"}, false},
    {ScenarioKind::maxwellization, "maxwellization",
     "Relaxation of the momentum marginal to the Maxwell distribution",
     {"W(p) -> exp(-p^2/(2 M kT)) / sqrt(2 pi M kT)"}, false},
    {ScenarioKind::oracle_compare, "oracle-compare",
     "Analytic kernel, Fokker-Planck integrator and master equation on shared initial data",
     {"dW/dt = -(p/M) dW/dq + 2 gamma d(pW)/dp + 2 M gamma kT d2W/dp2",
      "drho/dt = -i[H, rho] - i gamma (x - y)(d/dx - d/dy) rho - 2 M gamma kT (x - y)^2 rho"},
     false},
    {ScenarioKind::variance_scaling, "variance-scaling",
     "Relative number fluctuations of product ensembles and the multinomial law",
     {"<dn_V^2>/<n_V>^2 = (1 - p)/(N p)", "Tr(P_n rho1^N) = N!/prod n_b! prod p_b^n_b"}, true},
    {ScenarioKind::histories_nscaling, "histories-nscaling",
     "Decay of interference between macroscopically distinct N-particle branches",
     {"|Psi> = a |psi>^N + b |chi>^N", "D(a, a') = <Psi| C_a'^dagger C_a |Psi>"}, false},
    {ScenarioKind::ehrenfest, "ehrenfest",
     "Gaussian quasi-projector histories peaked on Heisenberg-picture expectation values",
     {"p(a) ~ exp(-(a - <A>)^2 / (2 (sigma^2 + dA^2))) / sqrt(2 pi (sigma^2 + dA^2))",
      "p(a1..an) maximal at a_k = <A(t_k)>"},
     true},
    {ScenarioKind::conserved_decoherence, "conserved-decoherence",
     "Exact decoherence of histories of a conserved observable",
     {"[H, A] = 0 => D(a, a') = 0 for a != a'", "|D(a, a')|^2 <= p(a) p(a')"}, true},
    {ScenarioKind::local_equilibrium_peaking, "local-equilibrium-peaking",
     "Local-equilibrium Gibbs state: two-time occupation histories and free-streaming continuity",
     {"rho = exp(-sum_x beta(x) [h(x) - mu(x) n(x) - u(x) g(x)]) / Z",
      "dn/dt + (1/m) dg/dx = 0"},
     false},
};

// Defaults double as the documented schema; tolerances equal the acceptance thresholds.
const char* defaults_text(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::diffusion:
      return R"({
  "physics": {"M": 1, "gamma": 1, "kT": 1, "var_q0": 0.25, "var_p0": 1,
              "t_start": 3, "t_end": 10, "samples": 15, "bin_width": 0.25, "bin_range": 12},
  "grid": {"q_min": -20, "q_max": 20, "n_q": 256, "p_min": -6, "p_max": 6, "n_p": 128, "dt": 0},
  "tolerances": {"diffusion_fp_rel": 0.05, "diffusion_analytic_rel": 0.001, "constitutive_rel_sup": 0.02}
})";
    case ScenarioKind::maxwellization:
      return R"({
  "physics": {"M": 1, "gamma": 1, "kT": 1, "mean_p0": 3, "var_q0": 0.25, "var_p0": 0.25, "t": 5},
  "grid": {"q_min": -15, "q_max": 15, "n_q": 192, "p_min": -8, "p_max": 8, "n_p": 128, "dt": 0},
  "tolerances": {"maxwell_sup": 0.01}
})";
    case ScenarioKind::oracle_compare:
      return R"({
  "physics": {"M": 1, "gamma": 1, "kT": 1, "var_q0": 1, "var_p0": 1, "t_analytic": 5, "t_master": 1},
  "grid": {"q_min": -20, "q_max": 20, "n_q": 256, "p_min": -6, "p_max": 6, "n_p": 128, "dt": 0,
           "x_min": -8, "x_max": 8, "n_x": 129, "n_p_master": 128, "master_dt": 0.001},
  "tolerances": {"oracle_l1_analytic": 0.01, "oracle_l1_master": 0.01}
})";
    case ScenarioKind::variance_scaling:
      return R"({
  "physics": {"N": [100, 1000, 10000], "mean_q0": 0, "var_q0": 1, "window_lo": -2, "window_hi": 2, "bins": 8,
              "draws": 20000, "exact_N_max": 8, "exact_B_max": 4},
  "grid": {"q_min": -8, "q_max": 8, "n_q": 801},
  "tolerances": {"fluctuation_rel": 1e-12, "slope_abs": 0.01, "multinomial_abs": 1e-10, "sampling_z": 5}
})";
    case ScenarioKind::histories_nscaling:
      return R"({
  "physics": {"N_max": 8, "psi": [0.8, 0.2], "chi": [0.2, 0.8], "sigma": 1},
  "grid": {},
  "tolerances": {"decay_rate_max": 1, "decay_ratio_max": 0.1}
})";
    case ScenarioKind::ehrenfest:
      return R"({
  "physics": {"dim": 8, "instances": 20, "sigma_ratio": 10, "peak_region_sigmas": 1,
              "times": [0.3, 0.6, 0.9], "tube_half_width_sigmas": 5},
  "grid": {},
  "tolerances": {"asymptotic_rel": 0.02, "argmax_cells": 1, "complement_p_min": 0.99,
                 "complement_pbar_max": 0.01, "sigma_over_spread_min": 3, "bound_slack": 1e-10}
})";
    case ScenarioKind::conserved_decoherence:
      return R"({
  "physics": {"dim": 12, "distinct_values": 4, "times": [0.5, 1.0, 1.7], "instances": 5},
  "grid": {},
  "tolerances": {"offdiag_max": 1e-12, "bound_slack": 1e-10}
})";
    case ScenarioKind::local_equilibrium_peaking:
      return R"({
  "physics": {"N": 6, "beta": [0.01, 0.01, 0.01], "mu_bar": [0, 0, 0], "u": [0, 0, 0], "m": 1, "spacing": 1,
              "t1": 0, "t2": 0.3, "occupation_tolerance": 1,
              "kT": 1, "bump_amplitude": 0.5, "bump_width": 1.5, "t_end": 1},
  "grid": {"q_min": -10, "q_max": 10, "n_q": 201, "p_min": -8, "p_max": 8, "n_p": 129,
           "bin_width": 0.5, "dt": 0.1},
  "tolerances": {"peaking_fraction_min": 0.9, "epsilon_max": 0.05, "continuity_ratio_min": 3.5,
                 "bound_slack": 1e-10}
})";
  }
  return "{}";
}

// nlohmann keeps the last of duplicate keys; scan the raw text to reject them with a line.
void reject_duplicate_keys(const std::string& text, const std::string& source) {
  struct Frame {
    bool object;
    bool expect_key;
    std::set<std::string> keys;
  };
  std::vector<Frame> stack;
  std::size_t line = 1;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '\n') {
      ++line;
    } else if (c == '{') {
      stack.push_back({true, true, {}});
    } else if (c == '[') {
      stack.push_back({false, false, {}});
    } else if (c == '}' || c == ']') {
      if (!stack.empty()) stack.pop_back();
    } else if (c == ',') {
      if (!stack.empty() && stack.back().object) stack.back().expect_key = true;
    } else if (c == '"') {
      std::string s;
      std::size_t j = i + 1;
      for (; j < text.size() && text[j] != '"'; ++j) {
        if (text[j] == '\\' && j + 1 < text.size()) s += text[j++];
        s += text[j];
      }
      if (!stack.empty() && stack.back().object && stack.back().expect_key) {
        if (!stack.back().keys.insert(s).second)
          throw ParseError(source + ": duplicate key \"" + s + "\" at line " + std::to_string(line));
        stack.back().expect_key = false;
      }
      i = j;
    }
  }
}

ParamValue value_like(const json& v, const ParamValue& proto, const std::string& field) {
  if (std::holds_alternative<double>(proto)) {
    if (!v.is_number()) throw ValidationError(field, "expected a number");
    return v.get<double>();
  }
  if (std::holds_alternative<std::vector<double>>(proto)) {
    if (!v.is_array()) throw ValidationError(field, "expected an array of numbers");
    std::vector<double> out;
    for (const auto& x : v) {
      if (!x.is_number()) throw ValidationError(field, "expected an array of numbers");
      out.push_back(x.get<double>());
    }
    return out;
  }
  if (!v.is_string()) throw ValidationError(field, "expected a string");
  return v.get<std::string>();
}

ParamValue from_default(const json& v) {
  if (v.is_array()) return v.get<std::vector<double>>();
  if (v.is_string()) return v.get<std::string>();
  return v.get<double>();
}

void fill_section(ParamTable& table, const json& defaults, const json* user) {
  for (auto it = defaults.begin(); it != defaults.end(); ++it) table.set(it.key(), from_default(it.value()));
  if (!user) return;
  if (!user->is_object()) throw ValidationError(table.section(), "expected an object");
  for (auto it = user->begin(); it != user->end(); ++it) {
    const std::string field = table.section() + "." + it.key();
    if (!table.contains(it.key())) throw ValidationError(field, "unknown key");
    table.set(it.key(), value_like(it.value(), table.values().at(it.key()), field));
  }
}

nlohmann::ordered_json echo_value(const ParamValue& v) {
  auto num = [](double x) -> nlohmann::ordered_json {
    if (std::abs(x) < 9.0e15 && x == std::floor(x)) return static_cast<std::int64_t>(x);
    return x;
  };
  if (const auto* d = std::get_if<double>(&v)) return num(*d);
  if (const auto* l = std::get_if<std::vector<double>>(&v)) {
    auto a = nlohmann::ordered_json::array();
    for (double x : *l) a.push_back(num(x));
    return a;
  }
  return std::get<std::string>(v);
}

bool is_qbm(ScenarioKind k) {
  return k == ScenarioKind::diffusion || k == ScenarioKind::maxwellization || k == ScenarioKind::oracle_compare;
}

void require_grid(const ParamTable& g, const std::string& lo, const std::string& hi, const std::string& n) {
  if (!(g.number(lo) < g.number(hi))) throw ValidationError("grid." + hi, hi + " must exceed " + lo);
  if (g.count(n) < 8) throw ValidationError("grid." + n, n + " must be at least 8");
}

void require_positive_list(const ParamTable& t, const std::string& key) {
  for (double x : t.list(key))
    if (!(x > 0.0)) throw ValidationError(t.section() + "." + key, key + " entries must be positive");
}

}  // namespace

const std::vector<ScenarioInfo>& list_scenarios() { return kCatalog; }

const ScenarioInfo& scenario_info(ScenarioKind kind) {
  for (const auto& s : kCatalog)
    if (s.kind == kind) return s;
  throw ConfigError("unknown scenario kind");
}

std::optional<ScenarioKind> scenario_from_name(std::string_view name) {
  for (const auto& s : kCatalog)
    if (s.name == name) return s.kind;
  return std::nullopt;
}

const ParamValue& ParamTable::at(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ValidationError(section_ + "." + key, "missing parameter");
  return it->second;
}

double ParamTable::number(const std::string& key) const {
  const auto* d = std::get_if<double>(&at(key));
  if (!d) throw ValidationError(section_ + "." + key, "expected a number");
  return *d;
}

std::size_t ParamTable::count(const std::string& key) const {
  const double x = number(key);
  if (!(x >= 0.0) || x != std::floor(x) || x > 1e15)
    throw ValidationError(section_ + "." + key, key + " must be a non-negative integer");
  return static_cast<std::size_t>(x);
}

const std::vector<double>& ParamTable::list(const std::string& key) const {
  const auto* l = std::get_if<std::vector<double>>(&at(key));
  if (!l) throw ValidationError(section_ + "." + key, "expected an array of numbers");
  return *l;
}

const std::string& ParamTable::text(const std::string& key) const {
  const auto* s = std::get_if<std::string>(&at(key));
  if (!s) throw ValidationError(section_ + "." + key, "expected a string");
  return *s;
}

void ParamTable::require_positive(const std::string& key) const {
  if (!(number(key) > 0.0)) throw ValidationError(section_ + "." + key, key + " must be positive");
}

void ScenarioConfig::validate() const {
  if (schema_version != kSchemaVersion)
    throw ValidationError("schema_version", "unsupported schema version " + std::to_string(schema_version));
  const auto& info = scenario_info(scenario);
  if (info.needs_seed && !seed) throw ValidationError("seed", "seed is required for scenario " + info.name);
  for (const auto& [k, v] : tolerances.values()) {
    (void)v;
    if (!(tolerances.number(k) >= 0.0)) throw ValidationError("tolerances." + k, k + " must be non-negative");
  }
  const auto& p = physics;
  const auto& g = grid;
  if (is_qbm(scenario)) {
    for (const char* k : {"M", "gamma", "kT", "var_q0", "var_p0"}) p.require_positive(k);
    require_grid(g, "q_min", "q_max", "n_q");
    require_grid(g, "p_min", "p_max", "n_p");
    if (g.number("dt") < 0.0) throw ValidationError("grid.dt", "dt must be non-negative (0 selects the bound)");
  }
  switch (scenario) {
    case ScenarioKind::diffusion:
      if (!(p.number("t_end") > p.number("t_start")) || p.number("t_start") < 0.0)
        throw ValidationError("physics.t_end", "need 0 <= t_start < t_end");
      if (p.count("samples") < 4) throw ValidationError("physics.samples", "samples must be at least 4");
      p.require_positive("bin_width");
      p.require_positive("bin_range");
      break;
    case ScenarioKind::maxwellization:
      p.require_positive("t");
      break;
    case ScenarioKind::oracle_compare:
      p.require_positive("t_analytic");
      p.require_positive("t_master");
      require_grid(g, "x_min", "x_max", "n_x");
      if (g.count("n_p_master") % 2 != 0) throw ValidationError("grid.n_p_master", "n_p_master must be even");
      g.require_positive("master_dt");
      break;
    case ScenarioKind::variance_scaling:
      require_grid(g, "q_min", "q_max", "n_q");
      p.require_positive("var_q0");
      require_positive_list(p, "N");
      if (p.list("N").size() < 2) throw ValidationError("physics.N", "N needs at least two values");
      if (!(p.number("window_lo") < p.number("window_hi")))
        throw ValidationError("physics.window_hi", "window_hi must exceed window_lo");
      if (p.count("bins") < 1) throw ValidationError("physics.bins", "bins must be at least 1");
      if (p.count("draws") < 2) throw ValidationError("physics.draws", "draws must be at least 2");
      if (p.count("exact_B_max") < 2) throw ValidationError("physics.exact_B_max", "exact_B_max must be at least 2");
      if (p.count("exact_N_max") < 1) throw ValidationError("physics.exact_N_max", "exact_N_max must be at least 1");
      break;
    case ScenarioKind::histories_nscaling:
      if (p.count("N_max") < 2) throw ValidationError("physics.N_max", "N_max must be at least 2");
      p.require_positive("sigma");
      if (p.list("psi").size() != 2 || p.list("chi").size() != 2)
        throw ValidationError("physics.psi", "psi and chi are two-bin probability vectors");
      break;
    case ScenarioKind::ehrenfest:
      if (p.count("dim") < 2) throw ValidationError("physics.dim", "dim must be at least 2");
      if (p.count("instances") < 1) throw ValidationError("physics.instances", "instances must be at least 1");
      p.require_positive("sigma_ratio");
      p.require_positive("peak_region_sigmas");
      p.require_positive("tube_half_width_sigmas");
      if (p.list("times").empty() || p.list("times").size() > 4)
        throw ValidationError("physics.times", "times needs 1 to 4 entries");
      break;
    case ScenarioKind::conserved_decoherence:
      if (p.count("dim") < 2) throw ValidationError("physics.dim", "dim must be at least 2");
      if (p.count("distinct_values") < 2 || p.count("distinct_values") > p.count("dim"))
        throw ValidationError("physics.distinct_values", "distinct_values must lie in [2, dim]");
      if (p.list("times").size() < 3) throw ValidationError("physics.times", "times needs at least 3 entries");
      if (p.count("instances") < 1) throw ValidationError("physics.instances", "instances must be at least 1");
      break;
    case ScenarioKind::local_equilibrium_peaking: {
      if (p.count("N") < 1) throw ValidationError("physics.N", "N must be at least 1");
      require_positive_list(p, "beta");
      const std::size_t B = p.list("beta").size();
      if (B < 2) throw ValidationError("physics.beta", "beta needs one entry per bin (at least 2)");
      if (p.list("mu_bar").size() != B || p.list("u").size() != B)
        throw ValidationError("physics.mu_bar", "beta, mu_bar and u must have equal length");
      p.require_positive("m");
      p.require_positive("spacing");
      p.require_positive("kT");
      p.require_positive("t_end");
      p.require_positive("bump_width");
      if (!(p.number("t2") > p.number("t1")) || p.number("t1") < 0.0)
        throw ValidationError("physics.t2", "need 0 <= t1 < t2");
      require_grid(g, "q_min", "q_max", "n_q");
      require_grid(g, "p_min", "p_max", "n_p");
      g.require_positive("bin_width");
      g.require_positive("dt");
      break;
    }
  }
}

std::string default_config_json(ScenarioKind kind) {
  json d = json::parse(defaults_text(kind));
  nlohmann::ordered_json out;
  out["schema_version"] = kSchemaVersion;
  out["scenario"] = scenario_info(kind).name;
  out["output_dir"] = "out/" + scenario_info(kind).name;
  if (scenario_info(kind).needs_seed) out["seed"] = 1;
  for (const char* s : {"physics", "grid", "tolerances"}) out[s] = d[s];
  return out.dump(2) + "\n";
}

ScenarioConfig default_config(ScenarioKind kind) { return parse_config(default_config_json(kind), "<defaults>"); }

ScenarioConfig parse_config(const std::string& text, const std::string& source,
                            std::optional<std::uint64_t> seed_override) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(source + ": " + e.what());
  }
  reject_duplicate_keys(text, source);
  if (!j.is_object()) throw ParseError(source + ": top level must be an object");
  static const std::set<std::string> top = {"schema_version", "scenario", "output_dir", "seed",
                                            "physics",        "grid",     "tolerances"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!top.count(it.key())) throw ValidationError(it.key(), "unknown key");
  if (!j.contains("schema_version")) throw ValidationError("schema_version", "schema_version is required");
  if (!j["schema_version"].is_number_integer()) throw ValidationError("schema_version", "expected an integer");
  if (!j.contains("scenario") || !j["scenario"].is_string())
    throw ValidationError("scenario", "scenario name is required");
  const auto kind = scenario_from_name(j["scenario"].get<std::string>());
  if (!kind) throw ValidationError("scenario", "unknown scenario '" + j["scenario"].get<std::string>() + "'");

  ScenarioConfig c;
  c.schema_version = j["schema_version"].get<int>();
  c.scenario = *kind;
  c.output_dir = "out/" + scenario_info(*kind).name;
  if (j.contains("output_dir")) {
    if (!j["output_dir"].is_string()) throw ValidationError("output_dir", "expected a string");
    c.output_dir = j["output_dir"].get<std::string>();
  }
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) throw ValidationError("seed", "seed must be a non-negative integer");
    c.seed = j["seed"].get<std::uint64_t>();
  }
  if (seed_override) c.seed = seed_override;
  const json d = json::parse(defaults_text(*kind));
  fill_section(c.physics, d["physics"], j.contains("physics") ? &j["physics"] : nullptr);
  fill_section(c.grid, d["grid"], j.contains("grid") ? &j["grid"] : nullptr);
  fill_section(c.tolerances, d["tolerances"], j.contains("tolerances") ? &j["tolerances"] : nullptr);
  c.validate();
  return c;
}

ScenarioConfig load_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
  return parse_config(io::read_file(path), path.string(), seed_override);
}

std::string config_echo(const ScenarioConfig& c) {
  nlohmann::ordered_json out;
  out["schema_version"] = c.schema_version;
  out["scenario"] = scenario_info(c.scenario).name;
  out["output_dir"] = c.output_dir.generic_string();
  if (c.seed) out["seed"] = *c.seed;
  for (const ParamTable* t : {&c.physics, &c.grid, &c.tolerances}) {
    nlohmann::ordered_json s = nlohmann::ordered_json::object();
    for (const auto& [k, v] : t->values()) s[k] = echo_value(v);
    out[t->section()] = s;
  }
  return out.dump(2);
}

}  // namespace dhh
