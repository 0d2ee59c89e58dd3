#include "hdgp/multifidelity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "hdgp/errors.hpp"
#include "hdgp/optim.hpp"

namespace hdgp {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
// Relative floor keeping the concentrated variance away from zero when the
// residuals vanish identically (e.g. y_E an exact multiple of the coarse
// predictions); without it the likelihood is unbounded in rho.
constexpr double kSigma2FloorRel = 1e-14;

Eigen::VectorXd chol_solve(const Eigen::MatrixXd& L, Eigen::VectorXd b) {
  L.triangularView<Eigen::Lower>().solveInPlace(b);
  L.transpose().triangularView<Eigen::Upper>().solveInPlace(b);
  return b;
}

Eigen::MatrixXd chol_inverse(const Eigen::MatrixXd& L) {
  Eigen::MatrixXd inv = Eigen::MatrixXd::Identity(L.rows(), L.cols());
  L.triangularView<Eigen::Lower>().solveInPlace(inv);
  L.transpose().triangularView<Eigen::Upper>().solveInPlace(inv);
  return inv;
}

double population_variance(const Eigen::VectorXd& v) {
  if (v.size() == 0) return 0.0;
  const double mean = v.mean();
  return (v.array() - mean).square().sum() / static_cast<double>(v.size());
}

Eigen::MatrixXd fine_features(const MFModel& m, const Eigen::MatrixXd& X) {
  return m.fine_rotation ? rotate(*m.fine_rotation, X, m.fine_r) : X;
}

bool rows_equal(const Eigen::MatrixXd& A, Eigen::Index i,
                const Eigen::MatrixXd& B, Eigen::Index j) {
  for (Eigen::Index c = 0; c < A.cols(); ++c)
    if (A(i, c) != B(j, c)) return false;
  return true;
}

// Shared evaluation core for the joint fine-level concentrated likelihood.
struct RhoCore {
  double ll = 0.0;
  double sig2eff = 0.0;
  double quad = 0.0;
  Eigen::VectorXd resid;
  Eigen::VectorXd a;  // R_eff^{-1} resid
  detail::CholFactor chol;
  Eigen::MatrixXd R;  // unit-variance kernel matrix, no nugget
};

RhoCore rho_core(const Eigen::MatrixXd& F, const Eigen::VectorXd& y_E,
                 const Eigen::VectorXd& coarse_means, const KernelSpec& shape,
                 double rel_nugget, double rho, double floor_abs) {
  RhoCore out;
  const Eigen::Index n = F.rows();
  out.resid = y_E - rho * coarse_means;
  out.R = kernel_matrix(shape, F, 0.0);
  Eigen::MatrixXd Reff = out.R;
  Reff.diagonal().array() += rel_nugget;
  out.chol = detail::chol_with_jitter(std::move(Reff), 1.0);
  out.a = chol_solve(out.chol.L, out.resid);
  out.quad = out.resid.dot(out.a);
  out.sig2eff = out.quad / static_cast<double>(n) + floor_abs;
  out.ll = -0.5 * n * kLog2Pi - 0.5 * n * std::log(out.sig2eff) -
           detail::half_logdet(out.chol.L) - out.quad / (2.0 * out.sig2eff);
  return out;
}

// d logL for a parameter with known d(quad) and d(logdet); exact for the
// floored concentrated form above.
double rho_core_dll(const RhoCore& c, Eigen::Index n, double dquad,
                    double dlogdet) {
  const double s = c.sig2eff;
  return dquad * (c.quad / (2.0 * n * s * s) - 1.0 / s) - 0.5 * dlogdet;
}

}  // namespace

CoarseHandle CoarseHandle::from(FittedGP m) {
  CoarseHandle c;
  c.X = m.X;
  c.y = m.y;
  c.model = std::move(m);
  return c;
}

CoarseHandle CoarseHandle::from(AdditiveGP m) {
  CoarseHandle c;
  c.X = m.base.X;
  c.y = (m.base.y.array() + m.center).matrix();
  c.model = std::move(m);
  return c;
}

CoarseHandle CoarseHandle::from(ASGP m, Eigen::MatrixXd X_raw,
                                Eigen::VectorXd y_raw) {
  if (X_raw.rows() != m.inner.n() || y_raw.size() != m.inner.n())
    throw DimensionError("CoarseHandle: raw design does not match the ASGP training size");
  CoarseHandle c;
  c.X = std::move(X_raw);
  c.y = std::move(y_raw);
  c.model = std::move(m);
  return c;
}

Prediction coarse_predict(const CoarseHandle& c, const Eigen::MatrixXd& Xs) {
  if (const auto* g = std::get_if<FittedGP>(&c.model)) return gp_predict(*g, Xs);
  if (const auto* a = std::get_if<AdditiveGP>(&c.model)) return additive_predict(*a, Xs);
  return as_predict(std::get<ASGP>(c.model), Xs);
}

double coarse_prior_variance(const CoarseHandle& c) {
  if (const auto* g = std::get_if<FittedGP>(&c.model))
    return variance_normalization(g->spec);
  if (const auto* a = std::get_if<AdditiveGP>(&c.model))
    return a->process_variance();
  return variance_normalization(std::get<ASGP>(c.model).inner.spec);
}

double coarse_nugget(const CoarseHandle& c) {
  if (const auto* g = std::get_if<FittedGP>(&c.model)) return g->nugget;
  if (const auto* a = std::get_if<AdditiveGP>(&c.model)) return a->nugget();
  return std::get<ASGP>(c.model).inner.nugget;
}

double coarse_jitter(const CoarseHandle& c) {
  if (const auto* g = std::get_if<FittedGP>(&c.model)) return g->jitter;
  if (const auto* a = std::get_if<AdditiveGP>(&c.model)) return a->base.jitter;
  return std::get<ASGP>(c.model).inner.jitter;
}

double coarse_mean_offset(const CoarseHandle& c) {
  if (const auto* a = std::get_if<AdditiveGP>(&c.model)) return a->center;
  return 0.0;
}

Eigen::MatrixXd coarse_kernel(const CoarseHandle& c, const Eigen::MatrixXd& A,
                              const Eigen::MatrixXd& B) {
  if (const auto* g = std::get_if<FittedGP>(&c.model))
    return kernel_matrix(g->spec, A, B);
  if (const auto* a = std::get_if<AdditiveGP>(&c.model))
    return kernel_matrix(a->base.spec, A, B);
  const ASGP& as = std::get<ASGP>(c.model);
  return kernel_matrix(as.inner.spec, rotate(as.dec, A, as.r),
                       rotate(as.dec, B, as.r));
}

MFRhoEval mf_rho_likelihood(const Eigen::MatrixXd& fine_features,
                            const Eigen::VectorXd& y_E,
                            const Eigen::VectorXd& coarse_means,
                            const KernelSpec& shape, double rel_nugget,
                            double rho) {
  if (y_E.size() != fine_features.rows() || coarse_means.size() != y_E.size())
    throw DimensionError("mf_rho_likelihood: size mismatch");
  const double floor_abs =
      kSigma2FloorRel * std::max(population_variance(y_E), 1e-30);
  const RhoCore c = rho_core(fine_features, y_E, coarse_means, shape,
                             rel_nugget, rho, floor_abs);
  MFRhoEval out;
  out.log_lik = c.ll;
  out.sigma2_hat = c.sig2eff;
  const double dquad = -2.0 * coarse_means.dot(c.a);
  out.dll_drho = rho_core_dll(c, fine_features.rows(), dquad, 0.0);
  return out;
}

MFModel mf_fit(const Eigen::MatrixXd& X_E, const Eigen::VectorXd& y_E,
               CoarseHandle coarse, const MFFitOptions& options) {
  if (X_E.rows() == 0) throw DegenerateDataError("mf_fit: empty fine design");
  if (y_E.size() != X_E.rows())
    throw DimensionError("mf_fit: y size does not match X");
  if (X_E.cols() != coarse.X.cols())
    throw DimensionError("mf_fit: fine and coarse designs disagree on dimension");
  if (options.n_starts < 1) throw SpecError("mf_fit: n_starts must be >= 1");
  if (options.fine_rotation &&
      (options.fine_r < 1 || options.fine_r > options.fine_rotation->U.rows()))
    throw SpecError("mf_fit: fine rotation dimension out of range");

  MFModel m;
  m.coarse = std::move(coarse);
  m.X_E = X_E;
  m.y_E = y_E;
  m.fine_rotation = options.fine_rotation;
  m.fine_r = options.fine_rotation ? options.fine_r : 0;
  m.mode = options.mode;

  m.coarse_mean_at_fine = coarse_predict(m.coarse, X_E).mean;
  const Eigen::MatrixXd F = fine_features(m, X_E);
  const Eigen::Index n = F.rows();
  const int df = static_cast<int>(F.cols());

  const bool free_rho = !options.fixed_rho.has_value();
  const double denom = m.coarse_mean_at_fine.squaredNorm();
  const double rho0 =
      options.fixed_rho.value_or(denom > 0.0 ? m.coarse_mean_at_fine.dot(y_E) / denom
                                             : 0.0);

  const bool free_g = !options.fixed_relative_nugget.has_value();
  const double fixed_g = options.fixed_relative_nugget.value_or(0.0);
  if (!free_g && (fixed_g < 0.0 || !std::isfinite(fixed_g)))
    throw SpecError("mf_fit: fixed relative nugget must be >= 0");

  const double t_lo = options.bounds.resolved_theta_lo(df);
  const double t_hi = options.bounds.resolved_theta_hi(df);
  const double g_lo = std::max(options.bounds.nugget_lo, 1e-12);
  const double g_hi = std::max(options.bounds.nugget_hi, g_lo);

  KernelSpec shape =
      KernelSpec::product(options.fine_family, Eigen::VectorXd::Ones(df), 1.0);
  const double floor_abs =
      kSigma2FloorRel * std::max(population_variance(y_E), 1e-30);

  const int nt = df;
  const int np = nt + (free_rho ? 1 : 0) + (free_g ? 1 : 0);
  const int irho = nt;
  const int ig = nt + (free_rho ? 1 : 0);
  Eigen::VectorXd lo(np), hi(np);
  lo.head(nt).setConstant(std::log(t_lo));
  hi.head(nt).setConstant(std::log(t_hi));
  if (free_rho) {
    // Effectively unconstrained; the box only bounds the line search.
    const double w = 10.0 * (1.0 + std::abs(rho0));
    lo[irho] = rho0 - w;
    hi[irho] = rho0 + w;
  }
  if (free_g) {
    lo[ig] = std::log(g_lo);
    hi[ig] = std::log(g_hi);
  }

  const auto objective = [&](const Eigen::VectorXd& p,
                             Eigen::VectorXd* grad) -> double {
    KernelSpec s = shape;
    for (int i = 0; i < nt; ++i) s.lengthscales[i] = std::exp(p[i]);
    const double rho = free_rho ? p[irho] : rho0;
    const double g = free_g ? std::exp(p[ig]) : fixed_g;
    const RhoCore c =
        rho_core(F, y_E, m.coarse_mean_at_fine, s, g, rho, floor_abs);
    if (grad) {
      grad->resize(np);
      const Eigen::MatrixXd Rinv = chol_inverse(c.chol.L);
      const std::vector<Eigen::MatrixXd> dRs = product_theta_grads(s, F, c.R);
      for (int i = 0; i < nt; ++i) {
        const Eigen::MatrixXd dR = s.lengthscales[i] * dRs[i];
        const double dquad = -c.a.dot(dR * c.a);
        const double dlogdet = (Rinv.array() * dR.array()).sum();
        (*grad)[i] = -rho_core_dll(c, n, dquad, dlogdet);
      }
      if (free_rho) {
        const double dquad = -2.0 * m.coarse_mean_at_fine.dot(c.a);
        (*grad)[irho] = -rho_core_dll(c, n, dquad, 0.0);
      }
      if (free_g) {
        const double dquad = -g * c.a.squaredNorm();
        const double dlogdet = g * Rinv.trace();
        (*grad)[ig] = -rho_core_dll(c, n, dquad, dlogdet);
      }
    }
    return -c.ll;
  };

  std::mt19937_64 rng(mix64(options.seed));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  bool have_best = false;
  Eigen::VectorXd best_p;
  double best_f = 0.0;
  for (int start = 0; start < options.n_starts; ++start) {
    Eigen::VectorXd p0(np);
    for (int i = 0; i < nt; ++i) p0[i] = lo[i] + unif(rng) * (hi[i] - lo[i]);
    if (free_rho) p0[irho] = rho0;
    if (free_g) p0[ig] = lo[ig] + unif(rng) * (hi[ig] - lo[ig]);
    LbfgsResult r = minimize_lbfgs(objective, std::move(p0), lo, hi);
    if (!have_best || r.f < best_f) {
      have_best = true;
      best_f = r.f;
      best_p = std::move(r.x);
    }
  }

  KernelSpec fitted = shape;
  for (int i = 0; i < nt; ++i) fitted.lengthscales[i] = std::exp(best_p[i]);
  m.rho = free_rho ? best_p[irho] : rho0;
  const double g = free_g ? std::exp(best_p[ig]) : fixed_g;
  const RhoCore final_core =
      rho_core(F, y_E, m.coarse_mean_at_fine, fitted, g, m.rho, floor_abs);
  fitted.variance = final_core.sig2eff;
  m.fine_residual = gp_fit(F, final_core.resid, fitted, g * final_core.sig2eff);

  // Nestedness: exact row matches of the fine design inside the coarse one.
  m.fine_rows_in_coarse.assign(X_E.rows(), -1);
  m.nested = true;
  for (Eigen::Index e = 0; e < X_E.rows(); ++e) {
    Eigen::Index at = -1;
    for (Eigen::Index i = 0; i < m.coarse.X.rows(); ++i) {
      if (rows_equal(X_E, e, m.coarse.X, i)) {
        at = i;
        break;
      }
    }
    m.fine_rows_in_coarse[e] = at;
    if (at < 0) m.nested = false;
  }
  if (!m.nested) m.fine_rows_in_coarse.clear();

  const bool coarse_noiseless = coarse_nugget(m.coarse) == 0.0;
  m.has_strict = m.nested && coarse_noiseless;
  if (m.has_strict) {
    Eigen::VectorXd yC_at_E(X_E.rows());
    for (Eigen::Index e = 0; e < X_E.rows(); ++e)
      yC_at_E[e] = m.coarse.y[m.fine_rows_in_coarse[e]];
    Eigen::MatrixXd Kd =
        kernel_matrix(m.fine_residual.spec, m.fine_residual.X, m.fine_residual.X);
    Kd.diagonal().array() += m.fine_residual.nugget;
    m.alpha_strict = detail::refined_chol_solve(m.fine_residual.chol, Kd,
                                                m.y_E - m.rho * yC_at_E);
  }
  m.recursive_is_approximation =
      options.mode == MFMode::Recursive && !m.has_strict;
  return m;
}

Prediction mf_predict_direct(const MFModel& m, const Eigen::MatrixXd& Xs) {
  if (Xs.cols() != m.X_E.cols())
    throw DimensionError("mf_predict_direct: test dimension mismatch");
  const Eigen::MatrixXd& XC = m.coarse.X;
  const Eigen::Index nC = XC.rows(), nE = m.X_E.rows(), nt = Xs.rows();
  const double rho = m.rho;
  const double jC = coarse_jitter(m.coarse);
  const double tauC = coarse_nugget(m.coarse);
  const double muC = coarse_mean_offset(m.coarse);
  const double varC = coarse_prior_variance(m.coarse);
  const double varE = variance_normalization(m.fine_residual.spec);
  const Eigen::MatrixXd& FE = m.fine_residual.X;

  Eigen::MatrixXd Kpure(nC + nE, nC + nE);
  Kpure.topLeftCorner(nC, nC) = coarse_kernel(m.coarse, XC, XC);
  Kpure.topLeftCorner(nC, nC).diagonal().array() += tauC;
  const Eigen::MatrixXd K12 = coarse_kernel(m.coarse, XC, m.X_E);
  Kpure.topRightCorner(nC, nE) = rho * K12;
  Kpure.bottomLeftCorner(nE, nC) = rho * K12.transpose();
  Eigen::MatrixXd K22 = rho * rho * coarse_kernel(m.coarse, m.X_E, m.X_E);
  K22 += kernel_matrix(m.fine_residual.spec, FE, FE);
  K22.diagonal().array() += m.fine_residual.nugget;
  Kpure.bottomRightCorner(nE, nE) = K22;

  // The factored copy books each level's jitter the way the recursive
  // predictor sees it: the coarse jitter travels with the latent coarse
  // process as white noise, so it shows up scaled by rho at exact design
  // matches and by rho^2 on the fine-fine diagonal. That keeps the two
  // routes' variance solves exactly consistent. The mean solve is then
  // polished against the jitter-free model, matching the single-level fits.
  Eigen::MatrixXd Kbook = Kpure;
  Kbook.topLeftCorner(nC, nC).diagonal().array() += jC;
  for (Eigen::Index e = 0; e < nE; ++e) {
    for (Eigen::Index i = 0; i < nC; ++i)
      if (rows_equal(m.X_E, e, XC, i)) {
        Kbook(i, nC + e) += rho * jC;
        Kbook(nC + e, i) += rho * jC;
      }
  }
  Kbook.bottomRightCorner(nE, nE).diagonal().array() +=
      rho * rho * jC + m.fine_residual.jitter;

  Eigen::MatrixXd L;
  Eigen::LLT<Eigen::MatrixXd> llt(Kbook);
  if (llt.info() == Eigen::Success) {
    L = llt.matrixL();
  } else {
    const double scale = rho * rho * varC + varE + tauC +
                         m.fine_residual.effective_nugget();
    L = detail::chol_with_jitter(std::move(Kbook), scale).L;
  }

  Eigen::VectorXd ytil(nC + nE);
  ytil.head(nC) = (m.coarse.y.array() - muC).matrix();
  ytil.tail(nE) = (m.y_E.array() - rho * muC).matrix();
  const Eigen::VectorXd beta = detail::refined_chol_solve(L, Kpure, ytil);

  const Eigen::MatrixXd Fs = fine_features(m, Xs);
  Eigen::MatrixXd ktil(nC + nE, nt);
  ktil.topRows(nC) = rho * coarse_kernel(m.coarse, XC, Xs);
  ktil.bottomRows(nE) =
      rho * rho * coarse_kernel(m.coarse, m.X_E, Xs) +
      kernel_matrix(m.fine_residual.spec, FE, Fs);

  Prediction out;
  out.mean = ktil.transpose() * beta;
  out.mean.array() += rho * muC;
  Eigen::MatrixXd V = ktil;
  L.triangularView<Eigen::Lower>().solveInPlace(V);
  const double prior = rho * rho * varC + varE;
  out.variance =
      (prior - V.colwise().squaredNorm().transpose().array()).max(0.0).matrix();
  return out;
}

Prediction mf_predict_recursive(const MFModel& m, const Eigen::MatrixXd& Xs,
                                bool approximate) {
  if (Xs.cols() != m.X_E.cols())
    throw DimensionError("mf_predict_recursive: test dimension mismatch");
  if (!m.has_strict && !approximate && !m.recursive_is_approximation)
    throw ConstructionError(
        "recursive predictor is exact only for a noiseless nested coarse "
        "level; pass approximate=true to use it anyway");

  const Prediction pc = coarse_predict(m.coarse, Xs);
  const Eigen::MatrixXd Fs = fine_features(m, Xs);
  const Eigen::MatrixXd kx =
      kernel_matrix(m.fine_residual.spec, Fs, m.fine_residual.X);
  const Eigen::VectorXd& alpha =
      m.has_strict ? m.alpha_strict : m.fine_residual.alpha;

  Prediction out;
  out.mean = m.rho * pc.mean + kx * alpha;
  Eigen::MatrixXd V = kx.transpose();
  m.fine_residual.chol.triangularView<Eigen::Lower>().solveInPlace(V);
  const double varE = variance_normalization(m.fine_residual.spec);
  out.variance =
      (m.rho * m.rho * pc.variance.array() +
       (varE - V.colwise().squaredNorm().transpose().array()).max(0.0))
          .matrix();
  return out;
}

Prediction mf_predict(const MFModel& m, const Eigen::MatrixXd& Xs) {
  if (m.mode == MFMode::Direct) return mf_predict_direct(m, Xs);
  return mf_predict_recursive(m, Xs, m.recursive_is_approximation);
}

}  // namespace hdgp
