#pragma once

#include <string>
#include <vector>

#include "ddpm/metrics.hpp"
#include "ddpm/samplers.hpp"
#include "ddpm/schedules.hpp"
#include "ddpm/targets.hpp"
#include "ddpm/verification.hpp"

namespace ddpm {

/// 17-significant-digit decimal, the CSV float format (re-parses bit-exactly).
std::string format_float_17(double v);

/// Shortest decimal that round-trips to the same double (JSON float format).
std::string format_float_shortest(double v);

/// Minimal CSV table: header row plus string cells; numeric cells should be
/// preformatted with format_float_17.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void write(const std::string& path) const;
  std::string to_string() const;
};

/// One cell of a rates sweep.
struct RateCell {
  int T = 0;
  std::uint64_t seed = 0;
  KLBreakdown breakdown;
};

struct RatesRequest {
  Target target;
  std::string schedule_kind = "constant";  // "constant" | "li"
  double c = 2.0;
  double delta = 0.05;
  ReverseSamplerSpec spec;
  std::vector<int> Ts;
  std::vector<std::uint64_t> seeds{0};
  bool quadrature = false;  // exact Gaussian chain otherwise
};

/// Runs the (T, seed) grid in parallel; rows come back in deterministic
/// (T, seed) order regardless of thread count.
std::vector<RateCell> run_rates(const RatesRequest& req);

/// CSV rows in the `rates` schema: T, kind, schedule, c, delta, eps2, epsH2,
/// kl_total, kl_init, kl_est, kl_rev, seed.
CsvTable rates_csv(const RatesRequest& req, const std::vector<RateCell>& cells);

/// Summary JSON {check_name: {value, threshold, pass}} for suite reports.
std::string summary_json(const std::vector<CriterionReport>& reports);

/// Self-contained SVG log-log scatter with a fitted line.
std::string svg_loglog(const std::vector<std::pair<double, double>>& points,
                       const RateFit& fit, const std::string& title);

}  // namespace ddpm
