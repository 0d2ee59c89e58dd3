#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>

#include "hdgp/gp.hpp"

namespace hdgp {

// First-order additive GP: k_A(x, y) = sum_i alpha_i k_i(x_i - y_i), fit on
// centered responses. The stored center stands in for the prior mean.
struct AdditiveGP {
  FittedGP base;  // AdditiveSum spec over centered y
  double center = 0.0;

  double process_variance() const { return base.spec.component_variances.sum(); }
  double nugget() const { return base.nugget; }
};

struct AdditiveFitOptions {
  Bounds bounds;  // lengthscale bounds; nugget/variance bounds scale with var(y)
  int n_starts = 5;
  std::uint64_t seed = 0;
  // When set, the (absolute) noise variance g is held fixed instead of fitted.
  std::optional<double> fix_nugget;
};

// Maximizes the full (non-concentrated) likelihood over log lengthscales,
// log component variances, and log g by multi-start gradient search.
AdditiveGP additive_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, KernelFamily family,
                        const AdditiveFitOptions& options);

Prediction additive_predict(const AdditiveGP& model, const Eigen::MatrixXd& Xstar);

// Full log-likelihood of centered data under K = sum_i alpha_i K_i + g I and
// its gradient w.r.t. [log theta_1..d, log alpha_1..d, log g (when free)].
// The gradient accounts for the 1e-8 * sum(alpha) factorization jitter.
double additive_ll_grad(const Eigen::MatrixXd& X, const Eigen::VectorXd& y_centered,
                        const KernelSpec& spec, double g, bool free_nugget,
                        Eigen::VectorXd* grad);

// Component i of the additive posterior mean on centered scale:
//   m_i(t) = alpha_i k_i(t, X_i)^T K_A^{-1} y_centered.
// Components sum to the predictive mean minus the stored center; a component
// with alpha_i = 0 is identically zero.
Eigen::VectorXd main_effect(const AdditiveGP& model, int dim, const Eigen::VectorXd& grid);

// Writes one row per grid point and dimension: dim,x,effect.
void export_main_effects_csv(const AdditiveGP& model, int grid_size, const std::string& path);

// True when the fitted noise is at most `threshold` times the process
// variance, i.e. the model is interpolating and the coarse-level pipeline
// should refit it on a subsample.
bool overfit_guard(const AdditiveGP& model, double threshold = 0.01);

}  // namespace hdgp
