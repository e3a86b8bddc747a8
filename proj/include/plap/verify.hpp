#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace plap::verify {

struct Options {
  /// Replaces the default absolute gap tolerance of the convergence checks.
  std::optional<double> gap_tol;
  /// When set, tables (e.g. the regression comparison) are written here.
  std::optional<std::filesystem::path> out_dir;
  int threads = 1;
  /// Progress sink for long checks; may be empty.
  std::function<void(const std::string&)> log;
};

struct CheckInfo {
  int id = 0;
  std::string name;
  std::string summary;
};

struct CheckResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;              // one-line outcome
  std::vector<std::string> notes;  // per-case lines, tables
  double seconds = 0.0;
  int non_converged = 0;           // runs that missed their tolerance
};

const std::vector<CheckInfo>& checks();

/// Throws std::out_of_range for unknown ids. Never throws for failed checks.
CheckResult run_check(int id, const Options& opts = {});

std::vector<CheckResult> run_all(const Options& opts = {});

/// Drops memoized solver runs shared between checks.
void clear_cache();

}  // namespace plap::verify
