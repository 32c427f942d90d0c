#include "ddpm/quadrature.hpp"

#include <cmath>
#include <limits>
#include <queue>

namespace ddpm {
namespace {

// 15-point Gauss-Kronrod pair (QUADPACK constants). xgk are the positive
// Kronrod abscissae; every second one (plus the center) is a Gauss-7 node.
constexpr double kXgk[7] = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144838258730, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245};
constexpr double kWgk[8] = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
constexpr double kWg[4] = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Panel {
  double value;
  double error;
  double resabs;  // integral of |f|, for the round-off stopping rule
};

Panel gk15(const std::function<double(double)>& f, double a, double b) {
  const double c = 0.5 * (a + b);
  const double h = 0.5 * (b - a);
  const double fc = f(c);
  double resk = kWgk[7] * fc;
  double resg = kWg[3] * fc;
  double resabs = kWgk[7] * std::abs(fc);
  for (int i = 0; i < 7; ++i) {
    const double dx = h * kXgk[i];
    const double fl = f(c - dx);
    const double fr = f(c + dx);
    resk += kWgk[i] * (fl + fr);
    resabs += kWgk[i] * (std::abs(fl) + std::abs(fr));
    if (i % 2 == 1) resg += kWg[i / 2] * (fl + fr);
  }
  return {resk * h, std::abs(resk - resg) * h, resabs * h};
}

struct Region {
  double a, b;
  int depth;
  Panel p;
  bool operator<(const Region& o) const {
    // priority_queue is a max-heap; NaN errors sort last so they are not
    // split forever.
    if (std::isnan(p.error)) return true;
    if (std::isnan(o.p.error)) return false;
    return p.error < o.p.error;
  }
};

}  // namespace

double integrate(const std::function<double(double)>& f, double a, double b,
                 double rel_tol, double abs_floor, int max_depth) {
  if (!(a < b)) return 0.0;
  // Globally adaptive Gauss-Kronrod: always bisect the region with the
  // largest error estimate, stop once the summed error meets the target.
  // A hard region budget keeps cancellation-dominated integrands (where the
  // error estimate is pinned at the integrand's own round-off noise and can
  // never reach the requested tolerance) from subdividing without end; the
  // accumulated estimate is then already noise-limited and is returned as is.
  constexpr int n0 = 16;
  const int max_regions = n0 << std::min(max_depth, 12);
  const double h = (b - a) / n0;
  std::priority_queue<Region> heap;
  double mass = 0.0;
  double err_total = 0.0;
  for (int i = 0; i < n0; ++i) {
    Region r{a + i * h, a + (i + 1) * h, 0, gk15(f, a + i * h, a + (i + 1) * h)};
    mass += r.p.resabs;
    err_total += r.p.error;
    heap.push(r);
  }
  const double eps = std::max(rel_tol * mass, abs_floor);
  int n_regions = n0;
  while (err_total > eps && n_regions < max_regions) {
    Region r = heap.top();
    const double floor =
        50.0 * std::numeric_limits<double>::epsilon() * r.p.resabs;
    // The worst region is converged, round-off limited, NaN, or too deep:
    // nothing more to gain anywhere.
    if (!(r.p.error > floor) || r.depth >= max_depth) break;
    heap.pop();
    const double m = 0.5 * (r.a + r.b);
    Region left{r.a, m, r.depth + 1, gk15(f, r.a, m)};
    Region right{m, r.b, r.depth + 1, gk15(f, m, r.b)};
    err_total += left.p.error + right.p.error - r.p.error;
    heap.push(left);
    heap.push(right);
    ++n_regions;
  }
  double total = 0.0;
  while (!heap.empty()) {
    total += heap.top().p.value;
    heap.pop();
  }
  return total;
}

double integrate2d(const std::function<double(double, double)>& f, double ax,
                   double bx, double ay, double by, double rel_tol) {
  return integrate(
      [&](double x) {
        return integrate([&](double y) { return f(x, y); }, ay, by, rel_tol);
      },
      ax, bx, rel_tol);
}

}  // namespace ddpm
