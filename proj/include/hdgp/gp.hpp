#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>

#include "hdgp/kernels.hpp"

namespace hdgp {

struct Prediction {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;  // latent-function variance, no observation noise
};

// Zero-mean GP conditioned on (X, y):
//   mean(x) = k(x)^T K^{-1} y,  var(x) = k(x,x) - k(x)^T K^{-1} k(x)
// with K = kernel(X, X) + (nugget + jitter) I.
struct FittedGP {
  KernelSpec spec;
  double nugget = 0.0;  // tau^2
  double jitter = 0.0;  // extra diagonal needed for factorization
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  Eigen::MatrixXd chol;   // lower-triangular L with L L^T = K
  Eigen::VectorXd alpha;  // K^{-1} y
  double log_lik = 0.0;
  double sigma2_hat = 0.0;

  double effective_nugget() const { return nugget + jitter; }
  Eigen::Index n() const { return X.rows(); }
};

// Condition a GP with fixed hyperparameters. Always adds a jitter of at least
// 1e-8 * variance normalization before factorization, escalating by 10x up to
// three times; throws FactorizationError if the matrix still is not PD.
FittedGP gp_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const KernelSpec& spec,
                double tau2);

Prediction gp_predict(const FittedGP& model, const Eigen::MatrixXd& Xstar);

double log_likelihood(const FittedGP& model);

struct ConcentratedResult {
  double log_lik = 0.0;
  double sigma2_hat = 0.0;
};

// Concentrated (profile) likelihood with the process variance replaced by
// sigma2_hat = y^T R^{-1} y / n, where R is the unit-variance kernel matrix
// plus rel_nugget * I. Throws DegenerateDataError when sigma2_hat is zero.
ConcentratedResult concentrated_log_likelihood(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                               const KernelSpec& shape, double rel_nugget);

// Value and gradient of the concentrated log-likelihood w.r.t. the log
// lengthscales, followed by log rel_nugget when free_nugget is set.
double concentrated_ll_grad(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                            const KernelSpec& shape, double rel_nugget, bool free_nugget,
                            Eigen::VectorXd* grad);

struct Bounds {
  double theta_lo = 0.0;  // <= 0 means the default 1e-2 * sqrt(d)
  double theta_hi = 0.0;  // <= 0 means the default 1e2 * sqrt(d)
  double nugget_lo = 0.0;   // relative to the process variance; floored at 1e-12
  double nugget_hi = 10.0;  // relative to the process variance

  double resolved_theta_lo(int d) const;
  double resolved_theta_hi(int d) const;
};

struct FitOptions {
  Bounds bounds;
  int n_starts = 5;
  std::uint64_t seed = 0;
  // When set, the relative nugget tau^2 / sigma^2 is held at this value
  // (0 gives a noiseless interpolator) instead of being optimized.
  std::optional<double> fixed_relative_nugget;
};

// Multi-start gradient search over the concentrated likelihood. Starts are
// drawn log-uniformly inside the bounds; the whole path is deterministic in
// (X, y, options.seed). Product and Isotropic compositions only.
FittedGP optimize_hyperparams(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                              const KernelSpec& spec_template, const FitOptions& options);

namespace detail {

// Lower Cholesky factor of an SPD matrix plus escalating jitter.
// `scale` sizes the base jitter: 1e-8 * scale.
struct CholFactor {
  Eigen::MatrixXd L;
  double jitter = 0.0;
};
CholFactor chol_with_jitter(Eigen::MatrixXd K, double scale);

// Solve K x = rhs using a factor L of K plus some jitter: the plain solve is
// polished by iterative refinement against K itself until the residual gain
// per round stalls.
Eigen::VectorXd refined_chol_solve(const Eigen::MatrixXd& L, const Eigen::MatrixXd& K,
                                   const Eigen::VectorXd& rhs);

double half_logdet(const Eigen::MatrixXd& L);

// Unit-variance copy of a Product/Isotropic spec.
KernelSpec unit_variance_shape(const KernelSpec& spec);

}  // namespace detail

}  // namespace hdgp
