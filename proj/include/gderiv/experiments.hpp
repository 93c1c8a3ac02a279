#pragma once

// Config-driven experiment runner. Every run writes data CSVs, manifest.json,
// timing.json and a gnuplot script into one output directory.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gderiv/config.hpp"

namespace gderiv {

enum class ExperimentKind {
  cov,
  classify,
  derivative,
  renormalize,
  simulate,
  girsanov,
  embed,
  counterexample,
  paper_suite
};

const char* to_string(ExperimentKind kind);
/// Accepts "paper-suite" and "paper_suite". Throws ConfigError("kind", ...).
ExperimentKind parse_kind(const std::string& name);
const std::vector<ExperimentKind>& all_kinds();

/// Operations each kind exercises (recorded in the manifest).
const std::vector<std::string>& operations_of(ExperimentKind kind);

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::classify;
  /// Every field with defaults filled in.
  Json normalized;

  /// Sorted-key compact JSON of `normalized`.
  std::string canonical() const;
  std::string hash() const;
};

/// Command-line values that take precedence over the file.
struct ConfigOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<std::string> format;
};

/// Validates `raw` against the schema of `kind` and fills defaults. Unknown
/// keys and out-of-range values throw ConfigError naming the dotted field.
ExperimentConfig normalize_config(ExperimentKind kind, const Json& raw, const ConfigOverrides& overrides = {});

struct ArtifactBundle {
  std::filesystem::path dir;
  /// Data files relative to `dir`, in write order.
  std::vector<std::string> files;
  /// False only for a paper-suite run with a failing criterion.
  bool passed = true;
  std::string summary;
};

/// Runs one experiment into `out` (created if needed). Numerical errors
/// propagate with their original type.
ArtifactBundle run_experiment(const ExperimentConfig& config, const std::filesystem::path& out);

/// Exit codes of the command-line tool.
enum ExitCode : int { exit_ok = 0, exit_config = 2, exit_numerical = 3, exit_acceptance = 4 };

/// Maps the in-flight exception to an exit code (call inside a catch block).
int exit_code_for_current_exception();

}  // namespace gderiv
