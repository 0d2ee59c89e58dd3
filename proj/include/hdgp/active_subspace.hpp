#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hdgp/gp.hpp"

namespace hdgp {

// Eigendecomposition of the averaged outer product of posterior gradients.
// U columns are sorted by descending eigenvalue; sign convention: in each
// column the entry of largest magnitude is positive.
struct ASDecomposition {
  Eigen::MatrixXd C;        // d x d, symmetric PSD up to estimation noise
  Eigen::MatrixXd U;        // d x d eigenvectors, columns descending
  Eigen::VectorXd lambdas;  // descending eigenvalues
  Eigen::RowVectorXd center;  // column mean of the training design
};

enum class CEstimator { MonteCarlo, ClosedFormGaussian };

struct MonteCarloOptions {
  int samples = 0;  // <= 0 means the default 212 * d
  std::uint64_t seed = 0;
};

ASDecomposition estimate_C(const FittedGP& model, CEstimator estimator,
                           const MonteCarloOptions& mc = {});

// Z = (X - center) * U(:, 0:r)
Eigen::MatrixXd rotate(const ASDecomposition& dec, const Eigen::MatrixXd& X,
                       int r);

// {1, ..., min(d, 10)} plus d itself.
std::vector<int> default_r_candidates(int d);

struct ASGP {
  ASDecomposition dec;
  int r = 0;
  FittedGP inner;  // fitted on the rotated r-column design
  double log_lik = 0.0;
  std::vector<double> candidate_loglik;  // aligned with candidates tried
  std::vector<int> candidates;
};

// Fits a GP on the leading r rotated coordinates for each candidate r and
// keeps the one with the highest optimized log-likelihood. Ties within a
// 1e-9 relative margin go to the smaller r. Candidates are tried ascending.
ASGP select_r(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
              const ASDecomposition& dec, std::vector<int> candidates,
              KernelFamily family, const FitOptions& options);

Prediction as_predict(const ASGP& model, const Eigen::MatrixXd& Xstar);

void export_spectrum_csv(const ASDecomposition& dec, const std::string& path);

// One-shot objective: the concentrated log-likelihood of a Gaussian GP on
// the projected design Z(theta) = (X - mean) * U_{1:r}(theta), where U comes
// from the closed-form C(theta) of a high-dimensional Gaussian GP with
// lengthscales theta and process variance concentrated out at fixed relative
// nugget rel_nugget. ell are the low-dimensional lengthscales (size r).
double one_shot_log_likelihood(const Eigen::MatrixXd& X,
                               const Eigen::VectorXd& y,
                               const Eigen::VectorXd& theta,
                               const Eigen::VectorXd& ell, double rel_nugget);

// Analytic gradient in natural scale, layout [dtheta (d), dell (r)].
// Throws EigenDegeneracyError when the subspace eigenvalues are too close
// for the eigenvector derivative to be well conditioned.
Eigen::VectorXd one_shot_gradient(const Eigen::MatrixXd& X,
                                  const Eigen::VectorXd& y,
                                  const Eigen::VectorXd& theta,
                                  const Eigen::VectorXd& ell,
                                  double rel_nugget,
                                  double* value = nullptr);

namespace detail {

// 1-D integrals over [0, 1] for the unit Gaussian kernel factor
// exp(-(x - y)^2 / (2 t^2)) and their t-derivatives.
//   gauss_I  : int k(x,a) k(x,b) dx
//   gauss_wc : int [d/dx k(x,a)] k(x,b) dx      (derivative on the a factor)
//   gauss_wd : int [d/dx k(x,a)] [d/dx k(x,b)] dx
double gauss_I(double a, double b, double t);
double gauss_wc(double a, double b, double t);
double gauss_wd(double a, double b, double t);
double gauss_dI_dt(double a, double b, double t);
double gauss_dwc_dt(double a, double b, double t);
double gauss_dwd_dt(double a, double b, double t);

double adaptive_gauss_legendre(const std::function<double(double)>& f,
                               double lo, double hi, double tol);

}  // namespace detail

}  // namespace hdgp
