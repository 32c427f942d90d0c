#include "ddpm/tweedie.hpp"

#include <cmath>

namespace ddpm {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

/// Everything fixed once (t, x_t) are chosen: oracles at levels t and t-1,
/// the kernel mean mu_t, and the accelerated tilting matrices.
struct TiltContext {
  int t;
  double at, srt, sig2, one_minus;
  VectorXd x_t;
  MarginalOracle oq_t, oq_prev;
  VectorXd score_t, mu_t;
  double log_q_prev_mu;
  MatrixXd hess_t, A, B;
  bool accel = false;

  TiltContext(const Target& target, const NoiseSchedule& s, int t_,
              const VectorXd& x, bool need_accel)
      : t(t_), at(s.a(t_)), srt(std::sqrt(at)), sig2((1.0 - at) / at),
        one_minus(1.0 - at), x_t(x), oq_t(target, s.abar(t_)),
        oq_prev(target, s.abar(t_ - 1)) {
    auto pm = oq_t.posterior_origin(x_t);
    score_t = (std::sqrt(oq_t.abar()) * pm.mean - x_t) / (1.0 - oq_t.abar());
    mu_t = (x_t + one_minus * score_t) / srt;
    log_q_prev_mu = oq_prev.log_density(mu_t);
    if (need_accel) {
      const int d = oq_t.dim();
      hess_t = oq_t.derivatives(x_t).hessian;
      A = one_minus * hess_t;
      MatrixXd m = MatrixXd::Identity(d, d) + A;
      Eigen::FullPivLU<MatrixXd> lu(m);
      if (!lu.isInvertible())
        throw ContractError(
            "accelerated tilting undefined at this step size");
      B = MatrixXd::Identity(d, d) - lu.inverse();
      accel = true;
    }
  }

  double zeta_at(const VectorXd& y, bool accelerated) const {
    VectorXd dy = y - mu_t;
    double z = oq_prev.log_density(y) - log_q_prev_mu -
               dy.dot(srt * score_t);
    if (accelerated) z -= dy.dot(B * dy) / (2.0 * sig2);
    return z;
  }

  /// Unnormalized log posterior q_{t-1|t}: log q_{t-1}(y) + log of the
  /// forward kernel N(x_t; sqrt(a_t) y, (1-a_t) I), constants dropped.
  double log_tilt(const VectorXd& y) const {
    return oq_prev.log_density(y) -
           (x_t - srt * y).squaredNorm() / (2.0 * one_minus);
  }
};

MatrixXd formula_cov(const TiltContext& c) {
  const int d = c.oq_t.dim();
  MatrixXd h = c.accel ? c.hess_t : c.oq_t.derivatives(c.x_t).hessian;
  return c.sig2 * MatrixXd::Identity(d, d) +
         (c.one_minus * c.one_minus / c.at) * h;
}

/// 1D quadrature of f against the context's window geometry.
double integrate_window(const std::function<double(double)>& f, double center,
                        double hw, const QuadratureSpec& g) {
  return integrate(f, center - hw, center + hw, g.rel_tol, 1e-300, g.max_depth);
}

struct Window1D {
  double center, hw;
};

Window1D posterior_window(const TiltContext& c, const QuadratureSpec& g) {
  const double sd = std::sqrt(formula_cov(c)(0, 0));
  // The formula window can clip a secondary mode of a multimodal posterior
  // (e.g. atom targets at small t), so take the union with the component
  // windows of q_{t-1}; mass far from the kernel is negligible and cheap for
  // the adaptive quadrature to dismiss.
  double lo = c.mu_t[0] - g.half_width_sigmas * sd;
  double hi = c.mu_t[0] + g.half_width_sigmas * sd;
  for (int n = 0; n < c.oq_prev.component_count(); ++n) {
    const double m = c.oq_prev.component_mean(n)[0];
    const double csd = std::sqrt(c.oq_prev.component_cov(n)(0, 0));
    lo = std::min(lo, m - g.half_width_sigmas * csd);
    hi = std::max(hi, m + g.half_width_sigmas * csd);
  }
  return {0.5 * (lo + hi), 0.5 * (hi - lo)};
}

void check_mass_1d(const TiltContext& c, double center, double hw,
                   double z_inner, const QuadratureSpec& g) {
  auto f = [&](double y) {
    VectorXd v(1);
    v[0] = y;
    return std::exp(c.log_tilt(v) - c.log_tilt(c.mu_t));
  };
  const double extra =
      integrate(f, center - 1.5 * hw, center - hw, g.rel_tol, 1e-300,
                g.max_depth) +
      integrate(f, center + hw, center + 1.5 * hw, g.rel_tol, 1e-300,
                g.max_depth);
  if (extra > 1e-10 * (z_inner + extra))
    throw ContractError("posterior quadrature: grid too narrow");
}

}  // namespace

PosteriorMoments posterior_moments_formula(const Target& target,
                                           const NoiseSchedule& s, int t,
                                           const VectorXd& x_t) {
  if (t < 1 || t > s.T)
    throw ContractError("posterior_moments_formula: t out of range");
  const int d = target_dim(target);
  const double at = s.a(t);
  const double srt = std::sqrt(at);
  const double sig2 = (1.0 - at) / at;
  const double scale = (1.0 - at) / srt;  // kappa_n carries scale^n for n >= 3
  MarginalOracle oracle(target, s.abar(t));

  PosteriorMoments pm;
  if (d == 1) {
    auto l = oracle.log_density_derivatives_1d(x_t[0], 6);
    const double k2 = sig2 + scale * scale * l[2];
    const double k3 = std::pow(scale, 3) * l[3];
    const double k4 = std::pow(scale, 4) * l[4];
    const double k5 = std::pow(scale, 5) * l[5];
    const double k6 = std::pow(scale, 6) * l[6];
    pm.mean = VectorXd::Constant(1, (x_t[0] + (1.0 - at) * l[1]) / srt);
    pm.cov = MatrixXd::Constant(1, 1, k2);
    pm.third = Tensor3(1);
    pm.third(0, 0, 0) = k3;
    pm.fourth = Tensor4(1);
    pm.fourth(0, 0, 0, 0) = k4 + 3.0 * k2 * k2;
    pm.fifth = k5 + 10.0 * k3 * k2;
    pm.sixth = k6 + 15.0 * k4 * k2 + 10.0 * k3 * k3 + 15.0 * k2 * k2 * k2;
    return pm;
  }

  auto der = oracle.derivatives(x_t);
  pm.mean = (x_t + (1.0 - at) * der.score) / srt;
  pm.cov = sig2 * MatrixXd::Identity(d, d) + scale * scale * der.hessian;
  pm.third = der.third;
  pm.third *= std::pow(scale, 3);
  if (d <= 4) {
    Tensor4 l4 = oracle.log_density_fourth(x_t);
    pm.fourth = Tensor4(d);
    const double s4 = std::pow(scale, 4);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        for (int k = 0; k < d; ++k)
          for (int l = 0; l < d; ++l)
            pm.fourth(i, j, k, l) = s4 * l4(i, j, k, l) +
                                    isserlis_fourth(pm.cov, i, j, k, l);
  }
  return pm;
}

PosteriorMoments posterior_moments_quadrature(const Target& target,
                                              const NoiseSchedule& s, int t,
                                              const VectorXd& x_t,
                                              const QuadratureSpec& grid) {
  if (t < 1 || t > s.T)
    throw ContractError("posterior_moments_quadrature: t out of range");
  const int d = target_dim(target);
  if (d > 2)
    throw ContractError("posterior_moments_quadrature: d <= 2 required");
  TiltContext c(target, s, t, x_t, /*need_accel=*/false);
  PosteriorMoments pm;

  if (d == 1) {
    auto w = posterior_window(c, grid);
    const double l0 = c.log_tilt(c.mu_t);
    auto weight = [&](double y) {
      VectorXd v(1);
      v[0] = y;
      return std::exp(c.log_tilt(v) - l0);
    };
    const double z =
        integrate_window([&](double y) { return weight(y); }, w.center, w.hw,
                         grid);
    check_mass_1d(c, w.center, w.hw, z, grid);
    const double mean =
        integrate_window([&](double y) { return y * weight(y); }, w.center,
                         w.hw, grid) /
        z;
    auto central = [&](int p) {
      return integrate_window(
                 [&](double y) { return std::pow(y - mean, p) * weight(y); },
                 w.center, w.hw, grid) /
             z;
    };
    pm.normalizer = z;
    pm.mean = VectorXd::Constant(1, mean);
    pm.cov = MatrixXd::Constant(1, 1, central(2));
    pm.third = Tensor3(1);
    pm.fourth = Tensor4(1);
    if (grid.max_order >= 3) pm.third(0, 0, 0) = central(3);
    if (grid.max_order >= 4) pm.fourth(0, 0, 0, 0) = central(4);
    if (grid.max_order >= 5) pm.fifth = central(5);
    if (grid.max_order >= 6) pm.sixth = central(6);
    return pm;
  }

  // d == 2: tensorized quadrature on a box sized from the formula covariance.
  MatrixXd fc = formula_cov(c);
  const double hx = grid.half_width_sigmas * std::sqrt(fc(0, 0));
  const double hy = grid.half_width_sigmas * std::sqrt(fc(1, 1));
  const double cx = c.mu_t[0], cy = c.mu_t[1];
  const double l0 = c.log_tilt(c.mu_t);
  auto weight = [&](double y0, double y1) {
    VectorXd v(2);
    v[0] = y0;
    v[1] = y1;
    return std::exp(c.log_tilt(v) - l0);
  };
  auto box = [&](const std::function<double(double, double)>& f, double wx,
                 double wy) {
    return integrate2d(f, cx - wx, cx + wx, cy - wy, cy + wy, grid.rel_tol);
  };
  const double z = box(weight, hx, hy);
  const double z_wide = box(weight, 1.25 * hx, 1.25 * hy);
  if (z_wide - z > 1e-10 * z_wide)
    throw ContractError("posterior quadrature: grid too narrow");
  VectorXd mean(2);
  for (int i = 0; i < 2; ++i)
    mean[i] = box([&](double a, double b) {
                return (i == 0 ? a : b) * weight(a, b);
              }, hx, hy) /
              z;
  pm.normalizer = z;
  pm.mean = mean;
  pm.cov = MatrixXd(2, 2);
  for (int i = 0; i < 2; ++i)
    for (int j = i; j < 2; ++j) {
      pm.cov(i, j) = box(
                         [&](double a, double b) {
                           double u[2] = {a - mean[0], b - mean[1]};
                           return u[i] * u[j] * weight(a, b);
                         },
                         hx, hy) /
                     z;
      pm.cov(j, i) = pm.cov(i, j);
    }
  pm.third = Tensor3(2);
  if (grid.max_order >= 3)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        for (int k = 0; k < 2; ++k)
          pm.third(i, j, k) = box(
                                  [&](double a, double b) {
                                    double u[2] = {a - mean[0], b - mean[1]};
                                    return u[i] * u[j] * u[k] * weight(a, b);
                                  },
                                  hx, hy) /
                              z;
  pm.fourth = Tensor4(2);
  if (grid.max_order >= 4)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        for (int k = 0; k < 2; ++k)
          for (int l = 0; l < 2; ++l)
            pm.fourth(i, j, k, l) =
                box(
                    [&](double a, double b) {
                      double u[2] = {a - mean[0], b - mean[1]};
                      return u[i] * u[j] * u[k] * u[l] * weight(a, b);
                    },
                    hx, hy) /
                z;
  return pm;
}

double zeta(const Target& target, const NoiseSchedule& s, int t,
            const VectorXd& x_t, const VectorXd& x_prev, bool accelerated) {
  if (t < 1 || t > s.T) throw ContractError("zeta: t out of range");
  TiltContext c(target, s, t, x_t, accelerated);
  return c.zeta_at(x_prev, accelerated);
}

namespace {

double expected_zeta_ctx(const TiltContext& c, ZetaLaw law, int power,
                         const QuadratureSpec& grid) {
  const int d = c.oq_t.dim();
  if (d > 2) throw ContractError("expected_zeta: d <= 2 required");
  if (power < 1 || power > 3)
    throw ContractError("expected_zeta: power must be 1..3");
  const bool accel_zeta = law == ZetaLaw::P_accel;

  if (law == ZetaLaw::Q) {
    const double l0 = c.log_tilt(c.mu_t);
    if (d == 1) {
      auto w = posterior_window(c, grid);
      auto weight = [&](double y) {
        VectorXd v(1);
        v[0] = y;
        return std::exp(c.log_tilt(v) - l0);
      };
      const double z = integrate_window(weight, w.center, w.hw, grid);
      check_mass_1d(c, w.center, w.hw, z, grid);
      return integrate_window(
                 [&](double y) {
                   VectorXd v(1);
                   v[0] = y;
                   return std::pow(c.zeta_at(v, false), power) * weight(y);
                 },
                 w.center, w.hw, grid) /
             z;
    }
    MatrixXd fc = formula_cov(c);
    const double hx = grid.half_width_sigmas * std::sqrt(fc(0, 0));
    const double hy = grid.half_width_sigmas * std::sqrt(fc(1, 1));
    auto weight = [&](double a, double b) {
      VectorXd v(2);
      v[0] = a;
      v[1] = b;
      return std::exp(c.log_tilt(v) - l0);
    };
    const double z = integrate2d(weight, c.mu_t[0] - hx, c.mu_t[0] + hx,
                                 c.mu_t[1] - hy, c.mu_t[1] + hy, grid.rel_tol);
    return integrate2d(
               [&](double a, double b) {
                 VectorXd v(2);
                 v[0] = a;
                 v[1] = b;
                 return std::pow(c.zeta_at(v, false), power) * weight(a, b);
               },
               c.mu_t[0] - hx, c.mu_t[0] + hx, c.mu_t[1] - hy, c.mu_t[1] + hy,
               grid.rel_tol) /
           z;
  }

  // Gaussian laws P and P'.
  MatrixXd cov;
  if (law == ZetaLaw::P) {
    cov = c.sig2 * MatrixXd::Identity(d, d);
  } else {
    cov = c.sig2 * (MatrixXd::Identity(d, d) + c.A);
  }
  if (d == 1) {
    const double sd = std::sqrt(cov(0, 0));
    auto f = [&](double y) {
      VectorXd v(1);
      v[0] = y;
      const double u = (y - c.mu_t[0]) / sd;
      const double pdf = std::exp(-0.5 * u * u) / (sd * std::sqrt(2.0 * M_PI));
      return std::pow(c.zeta_at(v, accel_zeta), power) * pdf;
    };
    const double hw = grid.half_width_sigmas * sd;
    return integrate_window(f, c.mu_t[0], hw, grid);
  }
  Eigen::LLT<MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success)
    throw ContractError("expected_zeta: kernel covariance not SPD");
  MatrixXd prec = llt.solve(MatrixXd::Identity(d, d));
  double log_det = 2.0 * std::log(llt.matrixL()(0, 0)) +
                   2.0 * std::log(llt.matrixL()(1, 1));
  const double log_norm = -0.5 * (d * kLog2Pi + log_det);
  const double hx = grid.half_width_sigmas * std::sqrt(cov(0, 0));
  const double hy = grid.half_width_sigmas * std::sqrt(cov(1, 1));
  return integrate2d(
      [&](double a, double b) {
        VectorXd v(2);
        v[0] = a;
        v[1] = b;
        VectorXd u = v - c.mu_t;
        const double pdf = std::exp(log_norm - 0.5 * u.dot(prec * u));
        return std::pow(c.zeta_at(v, accel_zeta), power) * pdf;
      },
      c.mu_t[0] - hx, c.mu_t[0] + hx, c.mu_t[1] - hy, c.mu_t[1] + hy,
      grid.rel_tol);
}

}  // namespace

double expected_zeta(const Target& target, const NoiseSchedule& s, int t,
                     const VectorXd& x_t, ZetaLaw law, int power,
                     const QuadratureSpec& grid) {
  if (t < 1 || t > s.T) throw ContractError("expected_zeta: t out of range");
  TiltContext c(target, s, t, x_t, law == ZetaLaw::P_accel);
  return expected_zeta_ctx(c, law, power, grid);
}

TiltingReport leading_order_report(const Target& target, const NoiseSchedule& s,
                                   int t, const VectorXd& x_t,
                                   const QuadratureSpec& grid) {
  TiltContext c(target, s, t, x_t, /*need_accel=*/true);
  TiltingReport r;
  r.E_P_zeta = expected_zeta_ctx(c, ZetaLaw::P, 1, grid);
  r.E_P_zeta2 = expected_zeta_ctx(c, ZetaLaw::P, 2, grid);
  r.E_P_zeta3 = expected_zeta_ctx(c, ZetaLaw::P, 3, grid);
  r.E_Q_zeta = expected_zeta_ctx(c, ZetaLaw::Q, 1, grid);
  r.E_Paccel_zetap = expected_zeta_ctx(c, ZetaLaw::P_accel, 1, grid);
  {
    // zeta' under Q: reuse the Q-law machinery with the quadratic correction.
    const int d = c.oq_t.dim();
    if (d != 1)
      throw ContractError("leading_order_report: d == 1 required");
    const double l0 = c.log_tilt(c.mu_t);
    auto w = posterior_window(c, grid);
    auto weight = [&](double y) {
      VectorXd v(1);
      v[0] = y;
      return std::exp(c.log_tilt(v) - l0);
    };
    const double z = integrate_window(weight, w.center, w.hw, grid);
    r.E_Q_zetap = integrate_window(
                      [&](double y) {
                        VectorXd v(1);
                        v[0] = y;
                        return c.zeta_at(v, true) * weight(y);
                      },
                      w.center, w.hw, grid) /
                  z;
  }

  auto der_prev = c.oq_prev.derivatives(c.mu_t);
  auto der_t = c.oq_t.derivatives(c.x_t);
  const int d = c.oq_t.dim();
  r.leading_EP = 0.5 * c.sig2 * der_prev.hessian.trace();
  MatrixXd cov_q = formula_cov(c);
  r.leading_EQ = 0.5 * (der_prev.hessian.array() * cov_q.array()).sum();
  double triple = 0.0;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      for (int k = 0; k < d; ++k)
        triple += der_prev.third(i, j, k) * der_t.third(i, j, k);
  r.leading_diff =
      std::pow(c.one_minus, 3) / (6.0 * std::pow(c.at, 1.5)) * triple;
  r.residual_EP = r.E_P_zeta - r.leading_EP;
  r.residual_EQ = r.E_Q_zeta - r.leading_EQ;
  r.residual_diff = (r.E_Q_zetap - r.E_Paccel_zetap) - r.leading_diff;
  return r;
}

}  // namespace ddpm
