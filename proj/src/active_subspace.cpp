#include "hdgp/active_subspace.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <vector>

#include "hdgp/errors.hpp"
#include "hdgp/optim.hpp"

namespace hdgp {

namespace detail {

namespace {

constexpr double kSqrtPi = 1.7724538509055160273;

struct GaussParts {
  double G;     // erf((a+b)/(2t)) - erf((a+b-2)/(2t))
  double Epre;  // exp(-(a-b)^2/(4t^2))
  double Ea;    // exp(-(a+b)^2/(4t^2))
  double Eb;    // exp(-(a+b-2)^2/(4t^2))
};

GaussParts gauss_parts(double a, double b, double t) {
  const double s = a + b;
  GaussParts p;
  p.G = std::erf(s / (2.0 * t)) - std::erf((s - 2.0) / (2.0 * t));
  p.Epre = std::exp(-(a - b) * (a - b) / (4.0 * t * t));
  p.Ea = std::exp(-s * s / (4.0 * t * t));
  p.Eb = std::exp(-(s - 2.0) * (s - 2.0) / (4.0 * t * t));
  return p;
}

}  // namespace

double gauss_I(double a, double b, double t) {
  const GaussParts p = gauss_parts(a, b, t);
  return 0.5 * kSqrtPi * t * p.Epre * p.G;
}

double gauss_wc(double a, double b, double t) {
  const GaussParts p = gauss_parts(a, b, t);
  return -p.Epre * (0.5 * (p.Ea - p.Eb) + kSqrtPi * (b - a) * p.G / (4.0 * t));
}

double gauss_wd(double a, double b, double t) {
  const GaussParts p = gauss_parts(a, b, t);
  const double c = 0.5 * (a + b);
  const double t2 = t * t;
  return p.Epre * (-((1.0 - c) * p.Eb + c * p.Ea) / (2.0 * t2) +
                   kSqrtPi * p.G / (4.0 * t) -
                   (b - a) * (b - a) * kSqrtPi * p.G / (8.0 * t2 * t));
}

// The t-derivatives below follow the closed-form expansions of the integrals
// above, with every exponential consolidated into the Epre/Ea/Eb factors so
// nothing overflows for small t.

double gauss_dI_dt(double a, double b, double t) {
  const GaussParts p = gauss_parts(a, b, t);
  const double h2 = (a - b) * (a - b);
  const double t2 = t * t;
  return kSqrtPi * p.Epre * p.G * (2.0 * t2 + h2) / (4.0 * t2) +
         p.Epre * ((a + b - 2.0) * p.Eb - (a + b) * p.Ea) / (2.0 * t);
}

double gauss_dwc_dt(double a, double b, double t) {
  const GaussParts p = gauss_parts(a, b, t);
  const double h = a - b;
  const double t2 = t * t;
  const double mb = 2.0 * (a + b - 1.0) - a * a - b * b;
  const double num =
      -2.0 * h * t * p.Epre * ((a + b) * p.Ea - (a + b - 2.0) * p.Eb) +
      4.0 * t * p.Epre * (-(a * a + b * b) * p.Ea - mb * p.Eb) -
      kSqrtPi * h * p.G * p.Epre * (2.0 * t2 - h * h);
  return num / (8.0 * t2 * t2);
}

double gauss_dwd_dt(double a, double b, double t) {
  const GaussParts p = gauss_parts(a, b, t);
  const double h2 = (a - b) * (a - b);
  const double t2 = t * t;
  const double pb = (a + b - 2.0) * (2.0 * t2 - (a + b - 2.0) * (a + b - 2.0));
  const double pa = (a + b) * (2.0 * t2 - (a + b) * (a + b));
  const double q = (2.0 * t2 - h2) * (2.0 * t2 - h2) - 4.0 * t2 * h2;
  return -(2.0 * t * (pb * p.Eb - pa * p.Ea) * p.Epre +
           kSqrtPi * p.G * q * p.Epre) /
         (16.0 * t2 * t2 * t2);
}

namespace {

struct GaussLegendre16 {
  double x[16];
  double w[16];
  GaussLegendre16() {
    // Newton iteration on the Legendre polynomial roots.
    constexpr int n = 16;
    for (int i = 0; i < (n + 1) / 2; ++i) {
      double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
      double pp = 0.0;
      for (int it = 0; it < 100; ++it) {
        double p1 = 1.0, p2 = 0.0;
        for (int j = 0; j < n; ++j) {
          const double p3 = p2;
          p2 = p1;
          p1 = ((2.0 * j + 1.0) * z * p2 - j * p3) / (j + 1.0);
        }
        pp = n * (z * p1 - p2) / (z * z - 1.0);
        const double z1 = z;
        z = z1 - p1 / pp;
        if (std::abs(z - z1) < 1e-15) break;
      }
      x[i] = -z;
      x[n - 1 - i] = z;
      w[i] = w[n - 1 - i] = 2.0 / ((1.0 - z * z) * pp * pp);
    }
  }
};

double gl16(const std::function<double(double)>& f, double lo, double hi) {
  static const GaussLegendre16 rule;
  const double c = 0.5 * (lo + hi), h = 0.5 * (hi - lo);
  double acc = 0.0;
  for (int i = 0; i < 16; ++i) acc += rule.w[i] * f(c + h * rule.x[i]);
  return acc * h;
}

double adapt_rec(const std::function<double(double)>& f, double lo, double hi,
                 double whole, double tol, int depth) {
  const double mid = 0.5 * (lo + hi);
  const double left = gl16(f, lo, mid);
  const double right = gl16(f, mid, hi);
  const double sum = left + right;
  if (depth >= 14 || std::abs(sum - whole) <= tol * (1.0 + std::abs(sum)))
    return sum;
  return adapt_rec(f, lo, mid, left, 0.5 * tol, depth + 1) +
         adapt_rec(f, mid, hi, right, 0.5 * tol, depth + 1);
}

}  // namespace

double adaptive_gauss_legendre(const std::function<double(double)>& f,
                               double lo, double hi, double tol) {
  return adapt_rec(f, lo, hi, gl16(f, lo, hi), tol, 0);
}

}  // namespace detail

namespace {

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

// Descending eigendecomposition with the sign convention that each column's
// largest-magnitude entry is positive.
void eigh_descending(const Eigen::MatrixXd& C, Eigen::MatrixXd& U,
                     Eigen::VectorXd& lambdas) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (C + C.transpose()));
  if (es.info() != Eigen::Success)
    throw FactorizationError("eigendecomposition of the gradient outer-product matrix failed");
  const Eigen::Index d = C.rows();
  U.resize(d, d);
  lambdas.resize(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    lambdas[i] = es.eigenvalues()[d - 1 - i];
    U.col(i) = es.eigenvectors().col(d - 1 - i);
    Eigen::Index at = 0;
    U.col(i).cwiseAbs().maxCoeff(&at);
    if (U(at, i) < 0.0) U.col(i) = -U.col(i);
  }
}

void require_product_like(const KernelSpec& spec, const char* what) {
  if (spec.composition == Composition::AdditiveSum)
    throw SpecError(std::string(what) + " requires a Product or Isotropic kernel");
}

ASDecomposition finish_decomposition(Eigen::MatrixXd C,
                                     const Eigen::MatrixXd& X) {
  ASDecomposition dec;
  dec.C = 0.5 * (C + C.transpose());
  eigh_descending(dec.C, dec.U, dec.lambdas);
  // The matrix is PSD analytically; tiny negative eigenvalues are rounding.
  dec.lambdas = dec.lambdas.cwiseMax(0.0);
  dec.center = X.colwise().mean();
  return dec;
}

ASDecomposition estimate_C_monte_carlo(const FittedGP& model,
                                       const MonteCarloOptions& mc) {
  require_product_like(model.spec, "the Monte Carlo C estimator");
  const int d = model.spec.dimension;
  const int samples = mc.samples > 0 ? mc.samples : 212 * d;

  Eigen::VectorXd hdiag(d);
  for (int j = 0; j < d; ++j)
    hdiag[j] = model.spec.variance *
               kern1d::cross2_at_zero(model.spec.family, model.spec.theta(j));

  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(d, d);
  Eigen::RowVectorXd x(d);
  for (int m = 0; m < samples; ++m) {
    std::mt19937_64 rng(hash_seed(mc.seed, "mc", static_cast<std::uint64_t>(m), 0));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int j = 0; j < d; ++j) x[j] = unif(rng);

    const Eigen::MatrixXd J = kernel_grad_x(model.spec, x, model.X);  // n x d
    const Eigen::VectorXd g = J.transpose() * model.alpha;
    Eigen::MatrixXd V = J;
    model.chol.triangularView<Eigen::Lower>().solveInPlace(V);
    C.noalias() += g * g.transpose() - V.transpose() * V;
    C.diagonal() += hdiag;
  }
  C /= static_cast<double>(samples);
  return finish_decomposition(std::move(C), model.X);
}

// Per-dimension caches of the three one-dimensional integrals between every
// pair of training coordinates. Wc(l, m) differentiates the l-side factor;
// the m-side derivative is Wc(m, l).
struct DimCaches {
  std::vector<Eigen::MatrixXd> P, Wc, Wd;
  std::vector<Eigen::MatrixXd> dP, dWc, dWd;  // d/dtheta, only when requested
};

// Entry (l, m) of the W block for the (p, q) derivative pair:
// the product over dimensions of plain / cross / diagonal factors.
Eigen::MatrixXd assemble_block(const DimCaches& c, int p, int q, Eigen::Index n,
                               int d) {
  Eigen::MatrixXd W = Eigen::MatrixXd::Ones(n, n);
  for (int j = 0; j < d; ++j) {
    for (Eigen::Index l = 0; l < n; ++l) {
      for (Eigen::Index m = 0; m < n; ++m) {
        double f;
        if (j == p && j == q)
          f = c.Wd[j](l, m);
        else if (j == p)
          f = c.Wc[j](l, m);
        else if (j == q)
          f = c.Wc[j](m, l);
        else
          f = c.P[j](l, m);
        W(l, m) *= f;
      }
    }
  }
  return W;
}

// Same product with the dimension-i factor swapped for its theta derivative.
Eigen::MatrixXd assemble_block_dtheta(const DimCaches& c, int p, int q, int i,
                                      Eigen::Index n, int d) {
  Eigen::MatrixXd W = Eigen::MatrixXd::Ones(n, n);
  for (int j = 0; j < d; ++j) {
    const bool deriv = (j == i);
    for (Eigen::Index l = 0; l < n; ++l) {
      for (Eigen::Index m = 0; m < n; ++m) {
        double f;
        if (j == p && j == q)
          f = deriv ? c.dWd[j](l, m) : c.Wd[j](l, m);
        else if (j == p)
          f = deriv ? c.dWc[j](l, m) : c.Wc[j](l, m);
        else if (j == q)
          f = deriv ? c.dWc[j](m, l) : c.Wc[j](m, l);
        else
          f = deriv ? c.dP[j](l, m) : c.P[j](l, m);
        W(l, m) *= f;
      }
    }
  }
  return W;
}

ASDecomposition estimate_C_closed_form(const FittedGP& model) {
  require_product_like(model.spec, "the closed-form C estimator");
  if (model.spec.family != KernelFamily::Gaussian)
    throw SpecError("the closed-form C estimator requires a Gaussian kernel");
  const int d = model.spec.dimension;
  const Eigen::Index n = model.n();
  const double sig2 = model.spec.variance;

  // 1-D integrals by adaptive quadrature on the actual kernel factors.
  DimCaches c;
  c.P.resize(d);
  c.Wc.resize(d);
  c.Wd.resize(d);
  const double tol = 1e-12;
  for (int j = 0; j < d; ++j) {
    const double th = model.spec.theta(j);
    c.P[j].resize(n, n);
    c.Wc[j].resize(n, n);
    c.Wd[j].resize(n, n);
    for (Eigen::Index l = 0; l < n; ++l) {
      for (Eigen::Index m = 0; m < n; ++m) {
        const double a = model.X(l, j), b = model.X(m, j);
        if (m < l) {
          c.P[j](l, m) = c.P[j](m, l);
          c.Wd[j](l, m) = c.Wd[j](m, l);
        } else {
          c.P[j](l, m) = detail::adaptive_gauss_legendre(
              [&](double x) {
                return kern1d::value(KernelFamily::Gaussian, x - a, th) *
                       kern1d::value(KernelFamily::Gaussian, x - b, th);
              },
              0.0, 1.0, tol);
          c.Wd[j](l, m) = detail::adaptive_gauss_legendre(
              [&](double x) {
                return kern1d::dx(KernelFamily::Gaussian, x - a, th) *
                       kern1d::dx(KernelFamily::Gaussian, x - b, th);
              },
              0.0, 1.0, tol);
        }
        c.Wc[j](l, m) = detail::adaptive_gauss_legendre(
            [&](double x) {
              return kern1d::dx(KernelFamily::Gaussian, x - a, th) *
                     kern1d::value(KernelFamily::Gaussian, x - b, th);
            },
            0.0, 1.0, tol);
      }
    }
  }

  const Eigen::MatrixXd Kinv = chol_inverse(model.chol);
  Eigen::MatrixXd C(d, d);
  for (int p = 0; p < d; ++p) {
    for (int q = p; q < d; ++q) {
      const Eigen::MatrixXd W = assemble_block(c, p, q, n, d);
      const double tr = (Kinv.array() * W.transpose().array()).sum();
      const double quad = model.alpha.dot(W * model.alpha);
      const double e = (p == q) ? kern1d::cross2_at_zero(KernelFamily::Gaussian,
                                                         model.spec.theta(p))
                                : 0.0;
      C(p, q) = C(q, p) =
          sig2 * e - sig2 * sig2 * tr + sig2 * sig2 * quad;
    }
  }
  return finish_decomposition(std::move(C), model.X);
}

}  // namespace

ASDecomposition estimate_C(const FittedGP& model, CEstimator estimator,
                           const MonteCarloOptions& mc) {
  switch (estimator) {
    case CEstimator::MonteCarlo:
      return estimate_C_monte_carlo(model, mc);
    case CEstimator::ClosedFormGaussian:
      return estimate_C_closed_form(model);
  }
  throw SpecError("unknown C estimator");
}

Eigen::MatrixXd rotate(const ASDecomposition& dec, const Eigen::MatrixXd& X,
                       int r) {
  const Eigen::Index d = dec.U.rows();
  if (X.cols() != d)
    throw DimensionError("rotate: design dimension does not match the decomposition");
  if (r < 1 || r > d)
    throw SpecError("rotate: subspace dimension out of range");
  return (X.rowwise() - dec.center) * dec.U.leftCols(r);
}

std::vector<int> default_r_candidates(int d) {
  if (d < 1) throw SpecError("dimension must be positive");
  std::vector<int> out;
  for (int r = 1; r <= std::min(d, 10); ++r) out.push_back(r);
  if (d > 10) out.push_back(d);
  return out;
}

ASGP select_r(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
              const ASDecomposition& dec, std::vector<int> candidates,
              KernelFamily family, const FitOptions& options) {
  const int d = static_cast<int>(dec.U.rows());
  if (candidates.empty()) throw SpecError("select_r: no candidate dimensions");
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()),
                   candidates.end());
  if (candidates.front() < 1 || candidates.back() > d)
    throw SpecError("select_r: candidate subspace dimension out of range");

  ASGP best;
  best.dec = dec;
  best.candidates = candidates;
  double best_ll = -std::numeric_limits<double>::infinity();
  for (int r : candidates) {
    const Eigen::MatrixXd Z = rotate(dec, X, r);
    const KernelSpec tmpl =
        KernelSpec::product(family, Eigen::VectorXd::Ones(r), 1.0);
    FittedGP fit = optimize_hyperparams(Z, y, tmpl, options);
    best.candidate_loglik.push_back(fit.log_lik);
    // Strictly-better wins; ties inside the margin keep the smaller r. The
    // margin only makes sense once a finite incumbent exists.
    const double margin =
        std::isfinite(best_ll) ? 1e-9 * std::max(1.0, std::abs(best_ll)) : 0.0;
    if (best.r == 0 || fit.log_lik > best_ll + margin) {
      best_ll = fit.log_lik;
      best.r = r;
      best.inner = std::move(fit);
    }
  }
  best.log_lik = best_ll;
  return best;
}

Prediction as_predict(const ASGP& model, const Eigen::MatrixXd& Xstar) {
  return gp_predict(model.inner, rotate(model.dec, Xstar, model.r));
}

void export_spectrum_csv(const ASDecomposition& dec, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path);
  out << "index,lambda\n";
  char buf[64];
  for (Eigen::Index i = 0; i < dec.lambdas.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%lld,%.17g\n",
                  static_cast<long long>(i + 1), dec.lambdas[i]);
    out << buf;
  }
  if (!out) throw IoError("failed writing " + path);
}

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kInvSqrt2 = 0.70710678118654752440;

double one_shot_eval(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                     const Eigen::VectorXd& theta, const Eigen::VectorXd& ell,
                     double rel_nugget, Eigen::VectorXd* grad_out) {
  const Eigen::Index n = X.rows();
  const int d = static_cast<int>(X.cols());
  const int r = static_cast<int>(ell.size());
  if (n < 2) throw DegenerateDataError("one-shot likelihood needs at least two points");
  if (theta.size() != d)
    throw DimensionError("one-shot: lengthscale count does not match the design");
  if (r < 1 || r > d)
    throw SpecError("one-shot: projected dimension out of range");
  if (!(rel_nugget >= 0.0) || !std::isfinite(rel_nugget))
    throw SpecError("one-shot: relative nugget must be finite and nonnegative");
  if (y.size() != n) throw DimensionError("one-shot: y size does not match X");

  const Eigen::RowVectorXd center = X.colwise().mean();
  const Eigen::MatrixXd Xc = X.rowwise() - center;

  // High-dimensional Gaussian correlation with the variance concentrated out.
  const KernelSpec specH = KernelSpec::product(KernelFamily::Gaussian, theta, 1.0);
  const Eigen::MatrixXd RH = kernel_matrix(specH, X, 0.0);
  Eigen::MatrixXd A = RH;
  A.diagonal().array() += rel_nugget;
  const detail::CholFactor cholA = detail::chol_with_jitter(A, 1.0);
  const Eigen::VectorXd a = chol_solve(cholA.L, y);
  const double sig2H = y.dot(a) / static_cast<double>(n);
  if (!(sig2H > 0.0))
    throw DegenerateDataError("one-shot: concentrated variance is not positive");

  // 1-D integral caches; the closed forms live on the t = theta / sqrt(2)
  // scale of the kernel factor exp(-h^2 / (2 t^2)).
  const bool want_grad = grad_out != nullptr;
  DimCaches c;
  c.P.resize(d);
  c.Wc.resize(d);
  c.Wd.resize(d);
  if (want_grad) {
    c.dP.resize(d);
    c.dWc.resize(d);
    c.dWd.resize(d);
  }
  for (int j = 0; j < d; ++j) {
    const double t = theta[j] * kInvSqrt2;
    c.P[j].resize(n, n);
    c.Wc[j].resize(n, n);
    c.Wd[j].resize(n, n);
    if (want_grad) {
      c.dP[j].resize(n, n);
      c.dWc[j].resize(n, n);
      c.dWd[j].resize(n, n);
    }
    for (Eigen::Index l = 0; l < n; ++l) {
      for (Eigen::Index m = 0; m < n; ++m) {
        const double av = X(l, j), bv = X(m, j);
        c.P[j](l, m) = detail::gauss_I(av, bv, t);
        c.Wc[j](l, m) = detail::gauss_wc(av, bv, t);
        c.Wd[j](l, m) = detail::gauss_wd(av, bv, t);
        if (want_grad) {
          c.dP[j](l, m) = detail::gauss_dI_dt(av, bv, t) * kInvSqrt2;
          c.dWc[j](l, m) = detail::gauss_dwc_dt(av, bv, t) * kInvSqrt2;
          c.dWd[j](l, m) = detail::gauss_dwd_dt(av, bv, t) * kInvSqrt2;
        }
      }
    }
  }

  const Eigen::MatrixXd Ainv = chol_inverse(cholA.L);
  const int nblocks = d * (d + 1) / 2;
  std::vector<Eigen::MatrixXd> Wblocks(nblocks);
  Eigen::MatrixXd EmT(d, d);  // E_u - tr(A^{-1} W) per (p, q)
  Eigen::MatrixXd C(d, d);
  int bi = 0;
  for (int p = 0; p < d; ++p) {
    for (int q = p; q < d; ++q, ++bi) {
      Wblocks[bi] = assemble_block(c, p, q, n, d);
      const Eigen::MatrixXd& W = Wblocks[bi];
      const double tr = (Ainv.array() * W.transpose().array()).sum();
      const double e =
          (p == q)
              ? kern1d::cross2_at_zero(KernelFamily::Gaussian, theta[p])
              : 0.0;
      EmT(p, q) = EmT(q, p) = e - tr;
      C(p, q) = C(q, p) = sig2H * (e - tr) + a.dot(W * a);
    }
  }

  Eigen::MatrixXd U;
  Eigen::VectorXd lambdas;
  eigh_descending(C, U, lambdas);

  const Eigen::MatrixXd Z = Xc * U.leftCols(r);
  const KernelSpec specL = KernelSpec::product(KernelFamily::Gaussian, ell, 1.0);
  const Eigen::MatrixXd RL = kernel_matrix(specL, Z, 0.0);
  Eigen::MatrixXd B = RL;
  B.diagonal().array() += rel_nugget;
  const detail::CholFactor cholB = detail::chol_with_jitter(B, 1.0);
  const Eigen::VectorXd aL = chol_solve(cholB.L, y);
  const double sig2L = y.dot(aL) / static_cast<double>(n);
  if (!(sig2L > 0.0))
    throw DegenerateDataError("one-shot: concentrated variance is not positive");
  const double ll = -0.5 * n * (kLog2Pi + 1.0) - 0.5 * n * std::log(sig2L) -
                    detail::half_logdet(cholB.L);
  if (!want_grad) return ll;

  // Eigenvector perturbations are only defined away from degeneracies.
  if (!(lambdas[0] > 0.0))
    throw EigenDegeneracyError("one-shot: gradient matrix has no positive spectrum");
  for (int l = 0; l < r; ++l) {
    for (int m = 0; m < d; ++m) {
      if (m == l) continue;
      if (std::abs(lambdas[l] - lambdas[m]) < 1e-8 * lambdas[0])
        throw EigenDegeneracyError(
            "one-shot: subspace eigenvalues too close for a stable gradient");
    }
  }

  grad_out->resize(d + r);
  const Eigen::MatrixXd Binv = chol_inverse(cholB.L);

  // Low-dimensional lengthscales: plain concentrated-likelihood gradient.
  const std::vector<Eigen::MatrixXd> gradsL = product_theta_grads(specL, Z, RL);
  for (int j = 0; j < r; ++j) {
    const Eigen::MatrixXd& dR = gradsL[j];
    (*grad_out)[d + j] = aL.dot(dR * aL) / (2.0 * sig2L) -
                         0.5 * (Binv.array() * dR.array()).sum();
  }

  // High-dimensional lengthscales: chain through C, its eigenvectors, Z.
  const std::vector<Eigen::MatrixXd> gradsH = product_theta_grads(specH, X, RH);
  for (int i = 0; i < d; ++i) {
    const Eigen::MatrixXd& dA = gradsH[i];
    const Eigen::VectorXd u = dA * a;
    const Eigen::VectorXd da = -chol_solve(cholA.L, u);
    const double dsig2H = -a.dot(u) / static_cast<double>(n);
    const Eigen::MatrixXd M = Ainv * dA * Ainv;

    Eigen::MatrixXd dC(d, d);
    int bj = 0;
    for (int p = 0; p < d; ++p) {
      for (int q = p; q < d; ++q, ++bj) {
        const Eigen::MatrixXd& W = Wblocks[bj];
        const Eigen::MatrixXd dW = assemble_block_dtheta(c, p, q, i, n, d);
        const double dtr = -(M.array() * W.transpose().array()).sum() +
                           (Ainv.array() * dW.transpose().array()).sum();
        const double de =
            (p == q && p == i) ? -4.0 / (theta[i] * theta[i] * theta[i]) : 0.0;
        const double dquad =
            da.dot(W * a) + da.dot(W.transpose() * a) + a.dot(dW * a);
        dC(p, q) = dC(q, p) =
            dsig2H * EmT(p, q) + sig2H * (de - dtr) + dquad;
      }
    }

    const Eigen::MatrixXd G = U.transpose() * dC * U;
    Eigen::MatrixXd dZ(n, r);
    for (int l = 0; l < r; ++l) {
      Eigen::VectorXd dUl = Eigen::VectorXd::Zero(d);
      for (int m = 0; m < d; ++m) {
        if (m == l) continue;
        dUl += U.col(m) * (G(m, l) / (lambdas[l] - lambdas[m]));
      }
      dZ.col(l) = Xc * dUl;
    }

    Eigen::MatrixXd dRL(n, n);
    for (Eigen::Index s = 0; s < n; ++s) {
      for (Eigen::Index t2 = 0; t2 < n; ++t2) {
        double acc = 0.0;
        for (int l = 0; l < r; ++l) {
          const double dz = Z(s, l) - Z(t2, l);
          const double ddz = dZ(s, l) - dZ(t2, l);
          acc += -2.0 * dz * ddz / (ell[l] * ell[l]);
        }
        dRL(s, t2) = RL(s, t2) * acc;
      }
    }
    (*grad_out)[i] = aL.dot(dRL * aL) / (2.0 * sig2L) -
                     0.5 * (Binv.array() * dRL.array()).sum();
  }
  return ll;
}

}  // namespace

double one_shot_log_likelihood(const Eigen::MatrixXd& X,
                               const Eigen::VectorXd& y,
                               const Eigen::VectorXd& theta,
                               const Eigen::VectorXd& ell, double rel_nugget) {
  return one_shot_eval(X, y, theta, ell, rel_nugget, nullptr);
}

Eigen::VectorXd one_shot_gradient(const Eigen::MatrixXd& X,
                                  const Eigen::VectorXd& y,
                                  const Eigen::VectorXd& theta,
                                  const Eigen::VectorXd& ell,
                                  double rel_nugget, double* value) {
  Eigen::VectorXd grad;
  const double ll = one_shot_eval(X, y, theta, ell, rel_nugget, &grad);
  if (value) *value = ll;
  return grad;
}

}  // namespace hdgp
