#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "dhh/errors.hpp"

namespace dhh {

inline constexpr int kSchemaVersion = 1;

enum class ScenarioKind {
  diffusion,
  maxwellization,
  oracle_compare,
  variance_scaling,
  histories_nscaling,
  ehrenfest,
  conserved_decoherence,
  local_equilibrium_peaking,
};

struct ScenarioInfo {
  ScenarioKind kind;
  std::string name;
  std::string description;
  /// Relations the scenario checks, written out as formulas.
  std::vector<std::string> equations;
  bool needs_seed = false;
};

/// Fixed catalog in declaration order.
const std::vector<ScenarioInfo>& list_scenarios();
const ScenarioInfo& scenario_info(ScenarioKind kind);
std::optional<ScenarioKind> scenario_from_name(std::string_view name);

using ParamValue = std::variant<double, std::vector<double>, std::string>;

/// One config section; every key is declared by the scenario defaults.
class ParamTable {
 public:
  ParamTable() = default;
  explicit ParamTable(std::string section) : section_(std::move(section)) {}

  void set(const std::string& key, ParamValue v) { values_[key] = std::move(v); }
  bool contains(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, ParamValue>& values() const { return values_; }
  const std::string& section() const { return section_; }

  double number(const std::string& key) const;
  /// Non-negative integer; ValidationError otherwise.
  std::size_t count(const std::string& key) const;
  const std::vector<double>& list(const std::string& key) const;
  const std::string& text(const std::string& key) const;

  /// Throws ValidationError("<section>.<key>", "<key> must be positive") unless number(key) > 0.
  void require_positive(const std::string& key) const;

 private:
  const ParamValue& at(const std::string& key) const;
  std::string section_;
  std::map<std::string, ParamValue> values_;
};

struct ScenarioConfig {
  int schema_version = kSchemaVersion;
  ScenarioKind scenario = ScenarioKind::diffusion;
  std::filesystem::path output_dir = "out";
  std::optional<std::uint64_t> seed;
  ParamTable physics{"physics"};
  ParamTable grid{"grid"};
  /// Pass/fail thresholds; defaults are the acceptance tolerances.
  ParamTable tolerances{"tolerances"};

  /// Scenario-specific checks; ValidationError names the offending field.
  void validate() const;
};

/// Full default config for a scenario as JSON text (the documented schema).
std::string default_config_json(ScenarioKind kind);
ScenarioConfig default_config(ScenarioKind kind);

/// Parses and validates; missing keys take the scenario defaults, unknown keys are rejected.
/// ParseError carries line information, including for duplicate keys. A seed override
/// replaces the config's seed before validation.
ScenarioConfig parse_config(const std::string& text, const std::string& source = "<config>",
                            std::optional<std::uint64_t> seed_override = std::nullopt);
ScenarioConfig load_config(const std::filesystem::path& path,
                           std::optional<std::uint64_t> seed_override = std::nullopt);

/// Canonical JSON of the fully populated config.
std::string config_echo(const ScenarioConfig& config);

enum class Comparison { less, less_equal, greater, greater_equal };

struct Metric {
  std::string name;
  double value = 0.0;
  /// Absent for informational metrics.
  std::optional<double> threshold;
  Comparison comparison = Comparison::less;
  bool pass = true;
};

struct RunReport {
  std::string scenario;
  std::string params_json;
  std::vector<Metric> metrics;
  std::vector<std::string> warnings;
  std::vector<std::string> notes;
  std::vector<std::string> artifacts;
  double wall_seconds = 0.0;

  bool passed() const;
  const Metric* find(std::string_view name) const;
  std::string to_json() const;
};

/// Module error rethrown with the scenario name prefixed.
class ScenarioError : public Error {
 public:
  ScenarioError(std::string scenario, const std::string& what);
  const std::string& scenario() const noexcept { return scenario_; }

 private:
  std::string scenario_;
};

struct RunOptions {
  bool write_artifacts = true;
};

/// Runs the scenario, writes CSV/JSON artifacts and report.json under config.output_dir.
RunReport run_scenario(const ScenarioConfig& config, const RunOptions& options = {});
/// Independent scenarios run concurrently; reports come back in input order.
std::vector<RunReport> run_batch(const std::vector<ScenarioConfig>& configs, const RunOptions& options = {});

}  // namespace dhh
