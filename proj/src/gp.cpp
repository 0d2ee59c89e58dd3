#include "hdgp/gp.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <random>
#include <vector>

#include "hdgp/errors.hpp"
#include "hdgp/optim.hpp"

namespace hdgp {

namespace detail {

CholFactor chol_with_jitter(Eigen::MatrixXd K, double scale) {
  // Eigen's LLT pivot test cannot see NaN (comparisons are false), so it
  // would report success on a contaminated matrix. Reject it up front.
  if (!K.allFinite()) throw FactorizationError("covariance matrix has non-finite entries");
  double jitter = 1e-8 * scale;
  K.diagonal().array() += jitter;
  for (int attempt = 0;; ++attempt) {
    Eigen::LLT<Eigen::MatrixXd> llt(K);
    if (llt.info() == Eigen::Success) return {llt.matrixL(), jitter};
    if (attempt == 3) break;
    K.diagonal().array() += 9.0 * jitter;  // total becomes 10x the previous
    jitter *= 10.0;
  }
  throw FactorizationError("covariance factorization failed after jitter escalation");
}

Eigen::VectorXd refined_chol_solve(const Eigen::MatrixXd& L, const Eigen::MatrixXd& K,
                                   const Eigen::VectorXd& rhs) {
  Eigen::VectorXd x = L.triangularView<Eigen::Lower>().solve(rhs);
  x = L.transpose().triangularView<Eigen::Upper>().solve(x);
  double prev_resid = std::numeric_limits<double>::infinity();
  for (int round = 0; round < 8; ++round) {
    Eigen::VectorXd resid = rhs - K * x;
    const double rn = resid.cwiseAbs().maxCoeff();
    if (!(rn < 0.5 * prev_resid)) break;
    prev_resid = rn;
    Eigen::VectorXd corr = L.triangularView<Eigen::Lower>().solve(resid);
    corr = L.transpose().triangularView<Eigen::Upper>().solve(corr);
    x += corr;
  }
  return x;
}

double half_logdet(const Eigen::MatrixXd& L) {
  return L.diagonal().array().log().sum();
}

KernelSpec unit_variance_shape(const KernelSpec& spec) {
  if (spec.composition == Composition::AdditiveSum)
    throw SpecError("concentrated likelihood requires a Product or Isotropic kernel");
  KernelSpec shape = spec;
  shape.variance = 1.0;
  return shape;
}

}  // namespace detail

namespace {

constexpr double kLog2Pi = 1.83787706640934548356065947281124;

void check_xy(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  if (X.rows() == 0) throw DegenerateDataError("empty training design");
  if (X.rows() != y.size()) throw DimensionError("X rows and y size differ");
  if (!y.allFinite() || !X.allFinite()) throw DegenerateDataError("non-finite training values");
}

}  // namespace

FittedGP gp_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const KernelSpec& spec,
                double tau2) {
  validate_spec(spec);
  check_xy(X, y);
  if (X.cols() != spec.dimension) throw DimensionError("X columns do not match kernel dimension");
  if (tau2 < 0.0 || !std::isfinite(tau2)) throw SpecError("nugget must be >= 0 and finite");

  const double n = static_cast<double>(X.rows());
  FittedGP m;
  m.spec = spec;
  m.nugget = tau2;
  m.X = X;
  m.y = y;

  const Eigen::MatrixXd K = kernel_matrix(spec, X, tau2);
  auto [L, jitter] = detail::chol_with_jitter(K, variance_normalization(spec));
  m.chol = std::move(L);
  m.jitter = jitter;
  const double quad = m.chol.triangularView<Eigen::Lower>().solve(y).squaredNorm();
  // The factor carries an extra jitter on the diagonal, which would show up
  // as a jitter * alpha residual when reproducing noiseless training data;
  // the refined solve polishes alpha against the unjittered system.
  m.alpha = detail::refined_chol_solve(m.chol, K, y);
  m.log_lik = -0.5 * n * kLog2Pi - detail::half_logdet(m.chol) - 0.5 * quad;
  m.sigma2_hat = variance_normalization(spec) * quad / n;
  return m;
}

Prediction gp_predict(const FittedGP& model, const Eigen::MatrixXd& Xstar) {
  if (Xstar.cols() != model.spec.dimension)
    throw DimensionError("gp_predict: X* columns do not match kernel dimension");
  const double prior = variance_normalization(model.spec);
  Eigen::MatrixXd kx = kernel_matrix(model.spec, Xstar, model.X);  // m x n
  Prediction p;
  p.mean = kx * model.alpha;
  Eigen::MatrixXd V = model.chol.triangularView<Eigen::Lower>().solve(kx.transpose());
  p.variance = (prior - V.colwise().squaredNorm().array()).matrix();
  double worst = 0.0;
  for (Eigen::Index i = 0; i < p.variance.size(); ++i) {
    if (p.variance[i] < worst) worst = p.variance[i];
    if (p.variance[i] < 0.0) p.variance[i] = 0.0;
  }
  if (worst < -1e-6 * prior)
    std::fprintf(stderr, "gp_predict: clamped negative variance %.3e (prior %.3e)\n", worst,
                 prior);
  return p;
}

double log_likelihood(const FittedGP& model) { return model.log_lik; }

namespace {

// Shared evaluation core for the concentrated likelihood. R = corr + (g + jitter) I.
struct ConcEval {
  Eigen::MatrixXd corr;  // unit-variance kernel matrix, no diagonal additions
  Eigen::MatrixXd L;
  Eigen::VectorXd a;  // R^{-1} y
  double jitter = 0.0;
  double sigma2_hat = 0.0;
  double log_lik = 0.0;
  bool feasible = true;
};

ConcEval conc_eval(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const KernelSpec& shape,
                   double rel_nugget, double sigma2_floor) {
  ConcEval e;
  e.corr = kernel_matrix(shape, X, X);
  Eigen::MatrixXd R = e.corr;
  R.diagonal().array() += rel_nugget;
  auto [L, jitter] = detail::chol_with_jitter(std::move(R), 1.0);
  e.L = std::move(L);
  e.jitter = jitter;
  Eigen::VectorXd v = e.L.triangularView<Eigen::Lower>().solve(y);
  const double n = static_cast<double>(y.size());
  e.sigma2_hat = v.squaredNorm() / n;
  e.a = e.L.transpose().triangularView<Eigen::Upper>().solve(v);
  const double s2 = std::max(e.sigma2_hat, sigma2_floor);
  e.log_lik = -0.5 * n * (kLog2Pi + 1.0) - 0.5 * n * std::log(s2) - detail::half_logdet(e.L);
  // With the nugget pinned at exactly zero the model is an interpolant. If
  // the correlation matrix is numerically singular and y has components
  // outside its range, no interpolant exists and the true likelihood is
  // -inf; only the factorization jitter made the value above look finite.
  if (rel_nugget == 0.0 && !detail::interpolation_feasible(e.L, e.corr, y)) {
    e.feasible = false;
    e.log_lik = -std::numeric_limits<double>::infinity();
  }
  return e;
}

}  // namespace

ConcentratedResult concentrated_log_likelihood(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                               const KernelSpec& shape, double rel_nugget) {
  const KernelSpec s = detail::unit_variance_shape(shape);
  validate_spec(s);
  check_xy(X, y);
  ConcEval e = conc_eval(X, y, s, rel_nugget, 0.0);
  if (!(e.sigma2_hat > 0.0))
    throw DegenerateDataError("concentrated likelihood: zero variance estimate");
  return {e.log_lik, e.sigma2_hat};
}

double concentrated_ll_grad(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                            const KernelSpec& shape, double rel_nugget, bool free_nugget,
                            Eigen::VectorXd* grad) {
  const KernelSpec s = detail::unit_variance_shape(shape);
  validate_spec(s);
  check_xy(X, y);
  ConcEval e = conc_eval(X, y, s, rel_nugget, 0.0);
  if (!(e.sigma2_hat > 0.0))
    throw DegenerateDataError("concentrated likelihood: zero variance estimate");
  if (grad) {
    const int nt = s.n_lengthscales();
    grad->resize(nt + (free_nugget ? 1 : 0));
    Eigen::MatrixXd Rinv = Eigen::MatrixXd::Identity(X.rows(), X.rows());
    e.L.triangularView<Eigen::Lower>().solveInPlace(Rinv);
    e.L.transpose().triangularView<Eigen::Upper>().solveInPlace(Rinv);
    const auto dK = product_theta_grads(s, X, e.corr);
    for (int i = 0; i < nt; ++i) {
      const Eigen::MatrixXd dR = s.lengthscales[i] * dK[i];  // d/d log theta_i
      (*grad)[i] = e.a.dot(dR * e.a) / (2.0 * e.sigma2_hat) - 0.5 * Rinv.cwiseProduct(dR).sum();
    }
    if (free_nugget)
      (*grad)[nt] =
          rel_nugget * (e.a.squaredNorm() / (2.0 * e.sigma2_hat) - 0.5 * Rinv.trace());
  }
  return e.log_lik;
}

double Bounds::resolved_theta_lo(int d) const {
  return theta_lo > 0.0 ? theta_lo : 1e-2 * std::sqrt(static_cast<double>(d));
}

double Bounds::resolved_theta_hi(int d) const {
  return theta_hi > 0.0 ? theta_hi : 1e2 * std::sqrt(static_cast<double>(d));
}

FittedGP optimize_hyperparams(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                              const KernelSpec& spec_template, const FitOptions& options) {
  KernelSpec shape = detail::unit_variance_shape(spec_template);
  shape.lengthscales = Eigen::VectorXd::Ones(shape.n_lengthscales());
  validate_spec(shape);
  check_xy(X, y);
  if (X.cols() != shape.dimension)
    throw DimensionError("optimize_hyperparams: X columns do not match kernel dimension");
  const Eigen::Index n = X.rows();
  if (n >= 2 && y.maxCoeff() == y.minCoeff())
    throw DegenerateDataError("optimize_hyperparams: constant y");
  if (options.n_starts < 1) throw SpecError("optimize_hyperparams: n_starts must be >= 1");

  const int d = shape.dimension;
  const int nt = shape.n_lengthscales();
  const bool free_g = !options.fixed_relative_nugget.has_value();
  const double fixed_g = options.fixed_relative_nugget.value_or(0.0);
  if (!free_g && (fixed_g < 0.0 || !std::isfinite(fixed_g)))
    throw SpecError("optimize_hyperparams: fixed relative nugget must be >= 0");

  const double t_lo = options.bounds.resolved_theta_lo(d);
  const double t_hi = options.bounds.resolved_theta_hi(d);
  const double g_lo = std::max(options.bounds.nugget_lo, 1e-12);
  const double g_hi = std::max(options.bounds.nugget_hi, g_lo);
  if (!(t_lo > 0.0) || !(t_hi > t_lo))
    throw SpecError("optimize_hyperparams: invalid lengthscale bounds");

  const int np = nt + (free_g ? 1 : 0);
  Eigen::VectorXd lo(np), hi(np);
  lo.head(nt).setConstant(std::log(t_lo));
  hi.head(nt).setConstant(std::log(t_hi));
  if (free_g) {
    lo[nt] = std::log(g_lo);
    hi[nt] = std::log(g_hi);
  }

  const auto objective = [&](const Eigen::VectorXd& p, Eigen::VectorXd* grad) -> double {
    KernelSpec s = shape;
    for (int i = 0; i < nt; ++i) s.lengthscales[i] = std::exp(p[i]);
    const double g = free_g ? std::exp(p[nt]) : fixed_g;
    Eigen::VectorXd ll_grad;
    const double ll = concentrated_ll_grad(X, y, s, g, free_g, grad ? &ll_grad : nullptr);
    if (grad) *grad = -ll_grad;
    return -ll;
  };

  std::mt19937_64 rng(mix64(options.seed));
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  bool have_best = false;
  Eigen::VectorXd best_p;
  double best_f = 0.0;
  for (int start = 0; start < options.n_starts; ++start) {
    Eigen::VectorXd p0(np);
    for (int i = 0; i < np; ++i) p0[i] = lo[i] + unif(rng) * (hi[i] - lo[i]);
    LbfgsResult r = minimize_lbfgs(objective, std::move(p0), lo, hi);
    if (!have_best || r.f < best_f) {
      have_best = true;
      best_f = r.f;
      best_p = std::move(r.x);
    }
  }

  KernelSpec fitted = shape;
  for (int i = 0; i < nt; ++i) fitted.lengthscales[i] = std::exp(best_p[i]);
  const double g = free_g ? std::exp(best_p[nt]) : fixed_g;
  const auto conc = concentrated_log_likelihood(X, y, fitted, g);
  fitted.variance = conc.sigma2_hat;
  return gp_fit(X, y, fitted, g * conc.sigma2_hat);
}

}  // namespace hdgp
