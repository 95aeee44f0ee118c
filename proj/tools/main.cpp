#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dhh/io.hpp"
#include "dhh/scenario.hpp"

namespace {

constexpr int kExitPass = 0;
constexpr int kExitFail = 1;
constexpr int kExitConfig = 2;

void print_report(const dhh::RunReport& r, bool quiet) {
  std::printf("%s: %s (%.2f s)\n", r.scenario.c_str(), r.passed() ? "PASS" : "FAIL", r.wall_seconds);
  if (quiet) return;
  for (const auto& m : r.metrics) {
    if (m.threshold)
      std::printf("  %-36s %-14s threshold %-10s %s\n", m.name.c_str(), dhh::io::format_number(m.value).c_str(),
                  dhh::io::format_number(*m.threshold).c_str(), m.pass ? "ok" : "FAILED");
    else
      std::printf("  %-36s %s\n", m.name.c_str(), dhh::io::format_number(m.value).c_str());
  }
  for (const auto& w : r.warnings) std::printf("  warning: %s\n", w.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Open-system phase-space dynamics and decoherent-histories experiments"};
  app.require_subcommand(1);

  std::vector<std::string> run_paths;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
  auto* run = app.add_subcommand("run", "Run one or more scenario configs (concurrently)");
  run->add_option("config", run_paths, "Scenario config files")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out_dir, "Output root; each scenario writes to <out>/<scenario>");
  run->add_option("--seed", seed, "Seed overriding the config value");
  run->add_flag("--quiet", quiet, "Print only the per-scenario verdict");

  auto* list = app.add_subcommand("list", "List the available scenarios");

  std::string validate_path;
  auto* validate = app.add_subcommand("validate", "Parse and validate a config without running it");
  validate->add_option("config", validate_path, "Scenario config file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitPass : kExitConfig;
  }

  if (*list) {
    for (const auto& s : dhh::list_scenarios()) {
      std::printf("%-26s %s%s\n", s.name.c_str(), s.description.c_str(), s.needs_seed ? " [seed]" : "");
      for (const auto& eq : s.equations) std::printf("%-26s   %s\n", "", eq.c_str());
    }
    return kExitPass;
  }

  if (*validate) {
    try {
      const auto c = dhh::load_config(validate_path);
      std::printf("%s\n", dhh::config_echo(c).c_str());
      return kExitPass;
    } catch (const dhh::ConfigError& e) {
      std::fprintf(stderr, "error: %s\n", e.what());
      return kExitConfig;
    }
  }

  std::vector<dhh::ScenarioConfig> configs;
  try {
    for (const auto& p : run_paths) {
      auto c = dhh::load_config(p, seed);
      if (!out_dir.empty()) c.output_dir = std::filesystem::path(out_dir) / dhh::scenario_info(c.scenario).name;
      configs.push_back(std::move(c));
    }
  } catch (const dhh::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  }

  try {
    const auto reports = dhh::run_batch(configs);
    bool ok = true;
    for (const auto& r : reports) {
      print_report(r, quiet);
      ok = ok && r.passed();
    }
    return ok ? kExitPass : kExitFail;
  } catch (const dhh::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFail;
  }
}
