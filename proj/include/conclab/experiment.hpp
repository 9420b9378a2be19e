#pragma once

// Declarative experiments. A config names the experiment, its seed, its
// parameters and metric tolerances; running it yields a report whose JSON
// body is a pure function of (config, build). Wall-clock data goes into a
// separate metadata document.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "conclab/estimation.hpp"
#include "json.hpp"

namespace conclab {

enum class ExperimentKind { tail, diameter, product, hanson_wright, xdy, norm_degree, resolvent, robust, moments };

ExperimentKind parse_experiment_kind(std::string_view name);
std::string_view to_string(ExperimentKind kind);

enum ExitCode : int { kExitPass = 0, kExitConfig = 1, kExitFail = 2, kExitNumerical = 3 };

// Inclusive bounds on one metric; either side may be open.
struct Tolerance {
  std::optional<double> min;
  std::optional<double> max;

  bool admits(double v) const noexcept;
  nlohmann::json to_json() const;
  static Tolerance from_json(const nlohmann::json& j);
};

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::tail;
  std::uint64_t seed = 0;
  nlohmann::json params = nlohmann::json::object();
  std::string output;     // report directory, empty = none
  std::string reference;  // free text carried into suite summaries
  std::map<std::string, Tolerance> tolerances;

  // Strict: unknown keys anywhere raise ConfigError naming the key.
  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

struct CheckResult {
  std::string metric;
  Tolerance tolerance;
  double value = 0.0;  // NaN when the metric could not be measured
  bool pass = false;
};

struct ExperimentReport {
  ExperimentConfig config;
  nlohmann::json results = nlohmann::json::object();
  std::map<std::string, double> metrics;
  std::vector<CheckResult> checks;
  std::vector<std::pair<std::string, EmpiricalTail>> tails;  // CSV artifacts
  std::string error;
  int exit_code = kExitPass;
  nlohmann::json metadata = nlohmann::json::object();

  bool pass() const noexcept { return exit_code == kExitPass; }
  std::string status() const;

  nlohmann::json to_json() const;
  std::string to_markdown() const;
};

// Numerical failures (non-convergence, admissibility, singular pivots) end
// up in the report with exit code 3; bad parameters throw ConfigError.
ExperimentReport run_experiment(const ExperimentConfig& config);

// <dir>/<stem>.json and <stem>.meta.json always; <stem>.md for "md";
// <stem>.metrics.csv plus one tail CSV per observation for "csv".
void write_report(const ExperimentReport& report, const std::filesystem::path& dir, const std::string& stem,
                  const std::string& format = "json");

struct SuiteEntry {
  std::string config;
  std::string experiment;
  std::string reference;
  std::string status;
  int exit_code = 0;
  std::vector<CheckResult> checks;
};

struct SuiteSummary {
  std::vector<SuiteEntry> entries;
  int exit_code = kExitPass;

  std::string to_markdown() const;
};

// Runs every *.json config in `suite` (sorted by file name), writing each
// report and summary.md under `out`. `seed` overrides every config's seed.
SuiteSummary reproduce_all(const std::filesystem::path& suite, const std::filesystem::path& out,
                           const std::string& format = "json", std::optional<std::uint64_t> seed = {});

}  // namespace conclab
