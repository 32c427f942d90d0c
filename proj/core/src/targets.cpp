#include "ddpm/targets.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace ddpm {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double log_sum_exp(const VectorXd& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (int i = 0; i < v.size(); ++i) s += std::exp(v[i] - m);
  return m + std::log(s);
}

MatrixXd floor_eigenvalues(const MatrixXd& cov, double floor) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(cov);
  if (es.info() != Eigen::Success)
    throw ContractError("covariance eigendecomposition failed");
  VectorXd ev = es.eigenvalues().cwiseMax(floor);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

void validate_weights(const VectorXd& w, const char* what) {
  if (w.size() == 0) throw ContractError(std::string(what) + ": empty weights");
  double sum = 0.0;
  for (int i = 0; i < w.size(); ++i) {
    if (!(w[i] >= 0.0))
      throw ContractError(std::string(what) + ": negative weight");
    sum += w[i];
  }
  if (std::abs(sum - 1.0) > 1e-12 * w.size() + 1e-12)
    throw ContractError(std::string(what) + ": weights do not sum to 1");
}

}  // namespace

GaussianMixture GaussianMixture::make(int dim, VectorXd weights,
                                      std::vector<VectorXd> means,
                                      std::vector<MatrixXd> covs) {
  if (dim <= 0) throw ContractError("GaussianMixture: dim must be positive");
  validate_weights(weights, "GaussianMixture");
  const auto n = static_cast<size_t>(weights.size());
  if (means.size() != n || covs.size() != n)
    throw ContractError("GaussianMixture: component count mismatch");
  for (size_t i = 0; i < n; ++i) {
    if (means[i].size() != dim)
      throw ContractError("GaussianMixture: mean dimension mismatch");
    if (covs[i].rows() != dim || covs[i].cols() != dim)
      throw ContractError("GaussianMixture: covariance shape mismatch");
    if ((covs[i] - covs[i].transpose()).cwiseAbs().maxCoeff() >
        1e-12 * (1.0 + covs[i].cwiseAbs().maxCoeff()))
      throw ContractError("GaussianMixture: covariance not symmetric");
    MatrixXd sym = 0.5 * (covs[i] + covs[i].transpose());
    covs[i] = floor_eigenvalues(sym, kEigenFloor);
  }
  GaussianMixture g;
  g.dim = dim;
  g.weights = std::move(weights);
  g.means = std::move(means);
  g.covs = std::move(covs);
  return g;
}

GaussianMixture GaussianMixture::standard_normal(int dim) {
  return make(dim, VectorXd::Ones(1), {VectorXd::Zero(dim)},
              {MatrixXd::Identity(dim, dim)});
}

double GaussianMixture::second_moment_trace() const {
  return second_moment().trace();
}

MatrixXd GaussianMixture::second_moment() const {
  MatrixXd m = MatrixXd::Zero(dim, dim);
  for (int n = 0; n < component_count(); ++n)
    m += weights[n] * (covs[n] + means[n] * means[n].transpose());
  return m;
}

AtomCloud AtomCloud::make(int dim, std::vector<VectorXd> atoms,
                          VectorXd weights,
                          std::optional<double> radius_bound) {
  if (dim <= 0) throw ContractError("AtomCloud: dim must be positive");
  validate_weights(weights, "AtomCloud");
  if (atoms.size() != static_cast<size_t>(weights.size()))
    throw ContractError("AtomCloud: atom count mismatch");
  for (const auto& a : atoms) {
    if (a.size() != dim) throw ContractError("AtomCloud: atom dim mismatch");
    if (radius_bound && a.norm() > *radius_bound * (1.0 + 1e-12))
      throw ContractError("AtomCloud: atom outside radius bound");
  }
  AtomCloud c;
  c.dim = dim;
  c.atoms = std::move(atoms);
  c.weights = std::move(weights);
  c.radius_bound = radius_bound;
  return c;
}

double AtomCloud::second_moment_trace() const {
  double s = 0.0;
  for (int n = 0; n < atom_count(); ++n) s += weights[n] * atoms[n].squaredNorm();
  return s;
}

MatrixXd AtomCloud::second_moment() const {
  MatrixXd m = MatrixXd::Zero(dim, dim);
  for (int n = 0; n < atom_count(); ++n)
    m += weights[n] * atoms[n] * atoms[n].transpose();
  return m;
}

int target_dim(const Target& t) {
  return std::visit([](const auto& tt) { return tt.dim; }, t);
}

double target_second_moment_trace(const Target& t) {
  return std::visit([](const auto& tt) { return tt.second_moment_trace(); }, t);
}

MatrixXd target_second_moment(const Target& t) {
  return std::visit([](const auto& tt) { return tt.second_moment(); }, t);
}

MarginalOracle::MarginalOracle(Target target, double abar)
    : target_(std::move(target)), abar_(abar), dim_(target_dim(target_)),
      atoms_(std::holds_alternative<AtomCloud>(target_)) {
  if (!(abar > 0.0 && abar <= 1.0))
    throw ContractError("MarginalOracle: abar must lie in (0, 1]");
  if (atoms_ && abar == 1.0)
    throw ContractError("MarginalOracle: atom cloud has no density at abar=1");
  const double srt = std::sqrt(abar);
  const double noise = 1.0 - abar;
  if (atoms_) {
    const auto& c = std::get<AtomCloud>(target_);
    comps_.resize(c.atom_count());
    for (int n = 0; n < c.atom_count(); ++n) {
      auto& k = comps_[n];
      k.origin = c.atoms[n];
      k.origin_cov = MatrixXd::Zero(dim_, dim_);
      k.mean = srt * c.atoms[n];
      k.cov = noise * MatrixXd::Identity(dim_, dim_);
      k.cov_inv = (1.0 / noise) * MatrixXd::Identity(dim_, dim_);
      k.log_norm = -0.5 * dim_ * (kLog2Pi + std::log(noise));
      k.log_w = std::log(c.weights[n]);
    }
  } else {
    const auto& g = std::get<GaussianMixture>(target_);
    comps_.resize(g.component_count());
    for (int n = 0; n < g.component_count(); ++n) {
      auto& k = comps_[n];
      k.origin = g.means[n];
      k.origin_cov = g.covs[n];
      k.mean = srt * g.means[n];
      k.cov = abar * g.covs[n] + noise * MatrixXd::Identity(dim_, dim_);
      Eigen::LLT<MatrixXd> llt(k.cov);
      if (llt.info() != Eigen::Success)
        throw ContractError("MarginalOracle: component covariance not SPD");
      k.cov_inv = llt.solve(MatrixXd::Identity(dim_, dim_));
      double log_det = 0.0;
      for (int i = 0; i < dim_; ++i)
        log_det += 2.0 * std::log(llt.matrixL()(i, i));
      k.log_norm = -0.5 * (dim_ * kLog2Pi + log_det);
      k.log_w = std::log(g.weights[n]);
    }
  }
}

void MarginalOracle::check_dim(const VectorXd& x) const {
  if (x.size() != dim_)
    throw ContractError("MarginalOracle: point dimension mismatch");
}

VectorXd MarginalOracle::log_responsibilities(const VectorXd& x) const {
  VectorXd lp(comps_.size());
  for (size_t n = 0; n < comps_.size(); ++n) {
    const auto& k = comps_[n];
    VectorXd d = x - k.mean;
    lp[static_cast<int>(n)] =
        k.log_w + k.log_norm - 0.5 * d.dot(k.cov_inv * d);
  }
  return lp;
}

double MarginalOracle::log_density(const VectorXd& x) const {
  check_dim(x);
  return log_sum_exp(log_responsibilities(x));
}

MarginalOracle::LatentMoments MarginalOracle::latent_posterior(
    const VectorXd& x, double eps, bool with_fourth) const {
  // q(x) = sum_n w_n integral N(x; y, eps I) N(y; mean_n, cov_n - eps I) dy,
  // so the posterior of the latent y given x is a Gaussian mixture with
  // per-component mean b_n = x - eps cov_n^{-1} (x - mean_n) and covariance
  // P_n = eps (I - eps cov_n^{-1}).
  VectorXd lp = log_responsibilities(x);
  const double lq = log_sum_exp(lp);
  const auto nc = comps_.size();
  std::vector<double> r(nc);
  std::vector<VectorXd> b(nc);
  std::vector<MatrixXd> p(nc);
  LatentMoments out;
  out.mean = VectorXd::Zero(dim_);
  for (size_t n = 0; n < nc; ++n) {
    const auto& k = comps_[n];
    r[n] = std::exp(lp[static_cast<int>(n)] - lq);
    b[n] = x - eps * (k.cov_inv * (x - k.mean));
    p[n] = eps * (MatrixXd::Identity(dim_, dim_) - eps * k.cov_inv);
    out.mean += r[n] * b[n];
  }
  out.cov = MatrixXd::Zero(dim_, dim_);
  out.third = Tensor3(dim_);
  if (with_fourth) out.fourth_central = Tensor4(dim_);
  for (size_t n = 0; n < nc; ++n) {
    VectorXd d = b[n] - out.mean;
    out.cov += r[n] * (p[n] + d * d.transpose());
    for (int i = 0; i < dim_; ++i)
      for (int j = 0; j < dim_; ++j)
        for (int kk = 0; kk < dim_; ++kk)
          out.third(i, j, kk) +=
              r[n] * (d[i] * d[j] * d[kk] + d[i] * p[n](j, kk) +
                      d[j] * p[n](i, kk) + d[kk] * p[n](i, j));
    if (with_fourth) {
      const MatrixXd& P = p[n];
      for (int i = 0; i < dim_; ++i)
        for (int j = 0; j < dim_; ++j)
          for (int kk = 0; kk < dim_; ++kk)
            for (int l = 0; l < dim_; ++l)
              out.fourth_central(i, j, kk, l) +=
                  r[n] * (d[i] * d[j] * d[kk] * d[l] +
                          d[i] * d[j] * P(kk, l) + d[i] * d[kk] * P(j, l) +
                          d[i] * d[l] * P(j, kk) + d[j] * d[kk] * P(i, l) +
                          d[j] * d[l] * P(i, kk) + d[kk] * d[l] * P(i, j) +
                          P(i, j) * P(kk, l) + P(i, kk) * P(j, l) +
                          P(i, l) * P(j, kk));
    }
  }
  return out;
}

double MarginalOracle::smoothing_eps() const {
  double eps = 1.0 - abar_;
  if (eps == 0.0) {
    double lmin = std::numeric_limits<double>::infinity();
    for (const auto& k : comps_) {
      Eigen::SelfAdjointEigenSolver<MatrixXd> es(k.cov);
      lmin = std::min(lmin, es.eigenvalues().minCoeff());
    }
    eps = 0.5 * lmin;
  }
  return eps;
}

Tensor4 MarginalOracle::log_density_fourth(const VectorXd& x) const {
  check_dim(x);
  const double eps = smoothing_eps();
  LatentMoments lm = latent_posterior(x, eps, /*with_fourth=*/true);
  // Fourth cumulant of the latent posterior: kappa4 = M4 - 3 sym(M2 x M2);
  // then d^4 log q = kappa4 / eps^4.
  Tensor4 out(dim_);
  const MatrixXd& c = lm.cov;
  const double inv4 = 1.0 / (eps * eps * eps * eps);
  for (int i = 0; i < dim_; ++i)
    for (int j = 0; j < dim_; ++j)
      for (int k = 0; k < dim_; ++k)
        for (int l = 0; l < dim_; ++l)
          out(i, j, k, l) = inv4 * (lm.fourth_central(i, j, k, l) -
                                    c(i, j) * c(k, l) - c(i, k) * c(j, l) -
                                    c(i, l) * c(j, k));
  return out;
}

MarginalOracle::Derivatives MarginalOracle::derivatives(
    const VectorXd& x) const {
  check_dim(x);
  // Smoothing level for the latent split: the fresh-noise variance when it is
  // positive, otherwise half the smallest component eigenvalue (abar = 1,
  // mixture targets only).
  const double eps = smoothing_eps();
  LatentMoments lm = latent_posterior(x, eps);
  Derivatives d;
  d.score = (lm.mean - x) / eps;
  d.hessian = -MatrixXd::Identity(dim_, dim_) / eps + lm.cov / (eps * eps);
  d.third = lm.third;
  d.third *= 1.0 / (eps * eps * eps);
  return d;
}

MarginalOracle::PosteriorOriginMoments MarginalOracle::posterior_origin(
    const VectorXd& x) const {
  check_dim(x);
  if (abar_ >= 1.0)
    throw ContractError("posterior_origin: requires abar in (0, 1)");
  const double srt = std::sqrt(abar_);
  VectorXd lp = log_responsibilities(x);
  const double lq = log_sum_exp(lp);
  const auto nc = comps_.size();
  PosteriorOriginMoments out;
  out.responsibilities = VectorXd(static_cast<int>(nc));
  std::vector<VectorXd> b(nc);
  std::vector<MatrixXd> s(nc);
  out.mean = VectorXd::Zero(dim_);
  for (size_t n = 0; n < nc; ++n) {
    const auto& k = comps_[n];
    const double r = std::exp(lp[static_cast<int>(n)] - lq);
    out.responsibilities[static_cast<int>(n)] = r;
    MatrixXd gain = srt * k.origin_cov * k.cov_inv;  // zero for atoms
    b[n] = k.origin + gain * (x - k.mean);
    s[n] = k.origin_cov - srt * gain * k.origin_cov;
    out.mean += r * b[n];
  }
  out.central_cov = MatrixXd::Zero(dim_, dim_);
  out.central_third = Tensor3(dim_);
  for (size_t n = 0; n < nc; ++n) {
    const double r = out.responsibilities[static_cast<int>(n)];
    VectorXd d = b[n] - out.mean;
    out.central_cov += r * (s[n] + d * d.transpose());
    for (int i = 0; i < dim_; ++i)
      for (int j = 0; j < dim_; ++j)
        for (int kk = 0; kk < dim_; ++kk)
          out.central_third(i, j, kk) +=
              r * (d[i] * d[j] * d[kk] + d[i] * s[n](j, kk) +
                   d[j] * s[n](i, kk) + d[kk] * s[n](i, j));
  }
  return out;
}

std::vector<double> MarginalOracle::log_density_derivatives_1d(
    double x, int max_order) const {
  if (dim_ != 1)
    throw ContractError("log_density_derivatives_1d: target must be 1D");
  if (max_order < 1 || max_order > 8)
    throw ContractError("log_density_derivatives_1d: order out of range");
  VectorXd xv(1);
  xv[0] = x;
  VectorXd lp = log_responsibilities(xv);
  const double lq = log_sum_exp(lp);
  // Density-derivative ratios a_k = q^{(k)}(x) / q(x) via probabilists'
  // Hermite polynomials of the per-component standardized coordinate.
  std::vector<double> a(max_order + 1, 0.0);
  a[0] = 1.0;
  for (size_t n = 0; n < comps_.size(); ++n) {
    const double r = std::exp(lp[static_cast<int>(n)] - lq);
    const double v = comps_[n].cov(0, 0);
    const double z = (x - comps_[n].mean[0]) / std::sqrt(v);
    double he_prev = 1.0, he = z;  // He_0, He_1
    double scale = -1.0 / std::sqrt(v);
    for (int k = 1; k <= max_order; ++k) {
      a[k] += r * scale * he;
      double he_next = z * he - k * he_prev;
      he_prev = he;
      he = he_next;
      scale *= -1.0 / std::sqrt(v);
    }
  }
  // Cumulant-style recurrence: a_k = sum_{j=1}^{k} C(k-1, j-1) l^{(j)} a_{k-j}.
  std::vector<double> l(max_order + 1, 0.0);
  l[0] = lq;
  for (int k = 1; k <= max_order; ++k) {
    double acc = a[k];
    double binom = 1.0;  // C(k-1, j-1)
    for (int j = 1; j < k; ++j) {
      acc -= binom * l[j] * a[k - j];
      binom = binom * (k - j) / j;
    }
    l[k] = acc;
  }
  return l;
}

int MarginalOracle::component_count() const {
  return static_cast<int>(comps_.size());
}
VectorXd MarginalOracle::component_mean(int n) const { return comps_.at(n).mean; }
MatrixXd MarginalOracle::component_cov(int n) const { return comps_.at(n).cov; }
double MarginalOracle::component_log_weight(int n) const {
  return comps_.at(n).log_w;
}

}  // namespace ddpm
