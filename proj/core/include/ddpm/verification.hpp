#pragma once

#include <string>
#include <vector>

namespace ddpm {

/// One atomic inequality evaluated by a verification suite.
struct CheckResult {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  std::string op;  // "<=", ">=", "=="
  bool pass = false;
};

/// One numbered acceptance criterion: a bundle of checks plus a runtime.
struct CriterionReport {
  int id = 0;
  std::string name;
  std::vector<CheckResult> checks;
  double seconds = 0.0;
  bool pass = false;  // conjunction of checks
};

/// Runs acceptance criterion `id` in [1, 13]. `quick` shrinks the T grids
/// and sample counts for the time-budgeted CLI path; the acceptance harness
/// always runs at full size.
CriterionReport run_criterion(int id, bool quick = false);

/// Suite names accepted by run_suite (plus "all").
std::vector<std::string> suite_names();

/// Criterion ids belonging to a suite; throws on unknown names.
std::vector<int> suite_criteria(const std::string& suite);

std::vector<CriterionReport> run_suite(const std::string& suite, bool quick);

}  // namespace ddpm
