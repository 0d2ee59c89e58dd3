#pragma once

#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

#include "hdgp/active_subspace.hpp"
#include "hdgp/additive.hpp"
#include "hdgp/gp.hpp"

namespace hdgp {

enum class MFMode { Direct, Recursive };

// Coarse side of the auto-regressive pair together with the raw-space design
// it was trained on (an ASGP only stores rotated coordinates internally).
struct CoarseHandle {
  std::variant<FittedGP, AdditiveGP, ASGP> model;
  Eigen::MatrixXd X;  // raw-space design, row-aligned with y
  Eigen::VectorXd y;  // raw-space responses

  static CoarseHandle from(FittedGP m);
  static CoarseHandle from(AdditiveGP m);
  static CoarseHandle from(ASGP m, Eigen::MatrixXd X_raw, Eigen::VectorXd y_raw);
};

Prediction coarse_predict(const CoarseHandle& c, const Eigen::MatrixXd& Xs);
double coarse_prior_variance(const CoarseHandle& c);
double coarse_nugget(const CoarseHandle& c);
double coarse_jitter(const CoarseHandle& c);
// Constant mean the coarse model adds back on top of its zero-mean GP.
double coarse_mean_offset(const CoarseHandle& c);
// Latent-process covariance between raw-space point sets.
Eigen::MatrixXd coarse_kernel(const CoarseHandle& c, const Eigen::MatrixXd& A,
                              const Eigen::MatrixXd& B);

// Two-level auto-regressive model Y_E = rho * Y_C + delta.
struct MFModel {
  CoarseHandle coarse;
  FittedGP fine_residual;  // fitted on d = y_E - rho * coarse posterior mean
  double rho = 1.0;
  bool nested = false;  // every fine row appears exactly in the coarse design
  MFMode mode = MFMode::Direct;
  // Set when the model was requested in Recursive mode without the
  // noiseless-nested structure that makes it exact.
  bool recursive_is_approximation = false;

  // Fine-side rotation: the residual GP lives on rotate(dec, X, fine_r).
  std::optional<ASDecomposition> fine_rotation;
  int fine_r = 0;

  Eigen::MatrixXd X_E;  // raw fine design
  Eigen::VectorXd y_E;
  Eigen::VectorXd coarse_mean_at_fine;

  // Exact-equivalence correction: residual weights recomputed from coarse
  // DATA at the fine sites instead of posterior means. Only available when
  // the designs are nested and the coarse level is noiseless.
  bool has_strict = false;
  Eigen::VectorXd alpha_strict;
  std::vector<Eigen::Index> fine_rows_in_coarse;  // valid when nested
};

struct MFFitOptions {
  Bounds bounds;
  int n_starts = 5;
  std::uint64_t seed = 0;
  KernelFamily fine_family = KernelFamily::Matern52;
  std::optional<double> fixed_relative_nugget;
  std::optional<double> fixed_rho;  // naive variants pin rho = 1
  MFMode mode = MFMode::Direct;
  std::optional<ASDecomposition> fine_rotation;
  int fine_r = 0;
};

// Joint concentrated-likelihood fit of (rho, fine lengthscales, fine relative
// nugget) on residuals against the already-fitted coarse model. rho is
// unconstrained and initialized at the least-squares slope of y_E on the
// coarse predictions.
MFModel mf_fit(const Eigen::MatrixXd& X_E, const Eigen::VectorXd& y_E,
               CoarseHandle coarse, const MFFitOptions& options);

// Joint block predictor: both levels conditioned together.
Prediction mf_predict_direct(const MFModel& m, const Eigen::MatrixXd& Xs);

// Recursive predictor: mean = rho * m_C + m_delta,
// variance = rho^2 * s_C^2 + s_delta^2. Exact only for a noiseless nested
// coarse level; anywhere else it must be explicitly requested as an
// approximation (or the model must have been fitted in Recursive mode).
Prediction mf_predict_recursive(const MFModel& m, const Eigen::MatrixXd& Xs,
                                bool approximate = false);

// Dispatch on the fitted mode.
Prediction mf_predict(const MFModel& m, const Eigen::MatrixXd& Xs);

// Fine-level concentrated log-likelihood as a function of rho with the
// kernel shape and relative nugget fixed. Exposes the analytic d logL / d rho
// for finite-difference verification.
struct MFRhoEval {
  double log_lik = 0.0;
  double sigma2_hat = 0.0;  // concentrated variance (with its tiny floor)
  double dll_drho = 0.0;
};
MFRhoEval mf_rho_likelihood(const Eigen::MatrixXd& fine_features,
                            const Eigen::VectorXd& y_E,
                            const Eigen::VectorXd& coarse_means,
                            const KernelSpec& shape, double rel_nugget,
                            double rho);

}  // namespace hdgp
