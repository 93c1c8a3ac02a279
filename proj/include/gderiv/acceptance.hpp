#pragma once

// The acceptance suite: every headline check of the library with fixed seeds,
// collected into one report.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "gderiv/config.hpp"

namespace gderiv {

enum class CriterionStatus { pass, fail, skipped };

const char* to_string(CriterionStatus status);

struct CriterionResult {
  std::string id;  // "1" .. "13", sub-checks as "11a"
  std::string title;
  CriterionStatus status = CriterionStatus::fail;
  std::string detail;
  double seconds = 0.0;
};

struct SuiteOptions {
  std::uint64_t seed = 20240601;
  unsigned threads = 1;
  /// Disabling the circulant sampler skips the performance criterion and the
  /// circulant part of the sampler check.
  bool circulant = true;
  /// Replaces the 1e-6 tolerance of the exact-engine criteria (1 and 2).
  std::optional<double> exact_tolerance;
  /// Per-criterion data CSVs go here when set.
  std::filesystem::path data_dir;
  /// Criterion 13: rerun 1-12 into a scratch directory and compare the CSVs.
  bool determinism = true;
};

struct SuiteReport {
  std::vector<CriterionResult> results;

  bool passed() const;
  std::size_t count(CriterionStatus status) const;
};

SuiteReport paper_suite(const SuiteOptions& options = {});

/// id,title,status,detail (no timings, so it is reproducible).
void write_report_csv(const SuiteReport& report, std::ostream& out);
Json report_json(const SuiteReport& report);

}  // namespace gderiv
