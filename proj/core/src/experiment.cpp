#include "ddpm/experiment.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "ddpm/parallel.hpp"

namespace ddpm {

std::string format_float_17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string format_float_shortest(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

std::string CsvTable::to_string() const {
  std::ostringstream out;
  for (size_t i = 0; i < header.size(); ++i)
    out << header[i] << (i + 1 < header.size() ? "," : "");
  out << "\n";
  for (const auto& row : rows) {
    for (size_t i = 0; i < row.size(); ++i)
      out << row[i] << (i + 1 < row.size() ? "," : "");
    out << "\n";
  }
  return out.str();
}

void CsvTable::write(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ContractError("cannot open output file: " + path);
  out << to_string();
}

std::vector<RateCell> run_rates(const RatesRequest& req) {
  if (req.Ts.empty()) throw ContractError("run_rates: empty T list");
  for (int T : req.Ts)
    if (T < 2) throw ContractError("run_rates: T values must be >= 2");
  for (size_t i = 0; i < req.seeds.size(); ++i)
    for (size_t j = i + 1; j < req.seeds.size(); ++j)
      if (req.seeds[i] == req.seeds[j])
        throw ContractError("run_rates: seeds must be distinct");

  const long n_cells =
      static_cast<long>(req.Ts.size()) * static_cast<long>(req.seeds.size());
  std::vector<RateCell> cells(static_cast<size_t>(n_cells));
  // Cell index (T-major, then seed) fixes the output order up front; the
  // parallel loop only fills slots.
  parallel_for(n_cells, [&](long idx) {
    const int T = req.Ts[static_cast<size_t>(idx) / req.seeds.size()];
    const std::uint64_t seed = req.seeds[static_cast<size_t>(idx) % req.seeds.size()];
    NoiseSchedule s = req.schedule_kind == "li"
                          ? make_li(T, req.c, req.delta)
                          : make_constant(T, req.c);
    ReverseSamplerSpec spec = req.spec;
    spec.perturb_seed = mix64(spec.perturb_seed ^ seed);
    RateCell& cell = cells[static_cast<size_t>(idx)];
    cell.T = T;
    cell.seed = seed;
    if (req.quadrature) {
      cell.breakdown = kl_decomposition_quadrature(req.target, s, spec);
    } else {
      cell.breakdown = gaussian_chain(req.target, s, spec).breakdown;
    }
  });
  return cells;
}

CsvTable rates_csv(const RatesRequest& req,
                   const std::vector<RateCell>& cells) {
  CsvTable t;
  t.header = {"T",       "kind",    "schedule", "c",      "delta", "eps2",
              "epsH2",   "kl_total", "kl_init",  "kl_est", "kl_rev", "seed"};
  const std::string kind =
      req.spec.kind == SamplerKind::accelerated ? "accelerated" : "regular";
  for (const auto& cell : cells) {
    const double rev = std::accumulate(cell.breakdown.rev_error_per_step.begin(),
                                       cell.breakdown.rev_error_per_step.end(),
                                       0.0);
    t.rows.push_back({std::to_string(cell.T), kind, req.schedule_kind,
                      format_float_17(req.c), format_float_17(req.delta),
                      format_float_17(req.spec.score_mse),
                      format_float_17(req.spec.hessian_mse),
                      format_float_17(cell.breakdown.total),
                      format_float_17(cell.breakdown.init_error),
                      format_float_17(cell.breakdown.est_error),
                      format_float_17(rev), std::to_string(cell.seed)});
  }
  return t;
}

namespace {

std::string json_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    if (ch == '"' || ch == '\\') out += '\\';
    out += ch;
  }
  return out;
}

}  // namespace

std::string summary_json(const std::vector<CriterionReport>& reports) {
  std::ostringstream out;
  out << "{\n";
  bool first = true;
  for (const auto& rep : reports) {
    for (const auto& c : rep.checks) {
      if (!first) out << ",\n";
      first = false;
      out << "  \"" << json_escape(c.name) << "\": {\"value\": "
          << format_float_shortest(c.value)
          << ", \"threshold\": " << format_float_shortest(c.threshold)
          << ", \"pass\": " << (c.pass ? "true" : "false") << "}";
    }
  }
  out << "\n}\n";
  return out.str();
}

std::string svg_loglog(const std::vector<std::pair<double, double>>& points,
                       const RateFit& fit, const std::string& title) {
  const int W = 640, H = 480, M = 60;
  double xlo = 1e300, xhi = -1e300, ylo = 1e300, yhi = -1e300;
  for (const auto& [x, y] : points) {
    if (!(x > 0.0) || !(y > 0.0)) continue;
    xlo = std::min(xlo, std::log10(x));
    xhi = std::max(xhi, std::log10(x));
    ylo = std::min(ylo, std::log10(y));
    yhi = std::max(yhi, std::log10(y));
  }
  if (xhi <= xlo) xhi = xlo + 1;
  if (yhi <= ylo) yhi = ylo + 1;
  auto px = [&](double lx) { return M + (lx - xlo) / (xhi - xlo) * (W - 2 * M); };
  auto py = [&](double ly) { return H - M - (ly - ylo) / (yhi - ylo) * (H - 2 * M); };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W
    << "\" height=\"" << H << "\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" "
       "font-family=\"monospace\" font-size=\"14\">"
    << json_escape(title) << "</text>\n"
    << "<line x1=\"" << M << "\" y1=\"" << H - M << "\" x2=\"" << W - M
    << "\" y2=\"" << H - M << "\" stroke=\"black\"/>\n"
    << "<line x1=\"" << M << "\" y1=\"" << M << "\" x2=\"" << M << "\" y2=\""
    << H - M << "\" stroke=\"black\"/>\n";
  for (const auto& [x, y] : points) {
    if (!(x > 0.0) || !(y > 0.0)) continue;
    s << "<circle cx=\"" << px(std::log10(x)) << "\" cy=\""
      << py(std::log10(y)) << "\" r=\"4\" fill=\"steelblue\"/>\n";
  }
  // Fitted line y = exp(intercept) x^slope, in log10 coordinates.
  const double l2e = std::log10(std::exp(1.0));
  auto fit_ly = [&](double lx) {
    return l2e * (fit.intercept + fit.slope * lx / l2e);
  };
  s << "<line x1=\"" << px(xlo) << "\" y1=\"" << py(fit_ly(xlo)) << "\" x2=\""
    << px(xhi) << "\" y2=\"" << py(fit_ly(xhi))
    << "\" stroke=\"firebrick\" stroke-dasharray=\"6 3\"/>\n"
    << "<text x=\"" << W - M << "\" y=\"" << H - M + 36
    << "\" text-anchor=\"end\" font-family=\"monospace\" font-size=\"12\">"
    << "slope=" << format_float_shortest(fit.slope)
    << " r2=" << format_float_shortest(fit.r_squared) << "</text>\n</svg>\n";
  return s.str();
}

}  // namespace ddpm
