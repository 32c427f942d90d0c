#pragma once

#include <functional>
#include <stdexcept>

namespace ddpm {

struct QuadratureSpec {
  double half_width_sigmas = 12.0;  // integration window in posterior std units
  double rel_tol = 1e-11;           // successive-refinement stopping criterion
  int max_depth = 32;
  int max_order = 6;                // highest centralized moment requested
};

/// Adaptive Simpson integration of f on [a, b].
///
/// The recursion subdivides until the Richardson error estimate of a panel
/// drops below its share of the global tolerance. `rel_tol` is applied to a
/// running magnitude estimate; `abs_floor` guards integrals that are zero.
double integrate(const std::function<double(double)>& f, double a, double b,
                 double rel_tol = 1e-11, double abs_floor = 1e-300,
                 int max_depth = 32);

/// Tensorized 2D variant on [ax, bx] x [ay, by].
double integrate2d(const std::function<double(double, double)>& f, double ax,
                   double bx, double ay, double by, double rel_tol = 1e-10);

}  // namespace ddpm
