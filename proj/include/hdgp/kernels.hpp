#pragma once

#include <Eigen/Dense>

#include <vector>

namespace hdgp {

enum class KernelFamily { Matern52, Gaussian };
enum class Composition { Product, AdditiveSum, Isotropic };

// Covariance function on [0,1]^d built from one-dimensional factors
//   Matern52: k(h) = (1 + sqrt5 h/theta + 5 h^2/(3 theta^2)) exp(-sqrt5 h/theta)
//   Gaussian: k(h) = exp(-(h/theta)^2)
// composed as
//   Product:     sigma^2 * prod_i k_i(x_i - y_i)
//   Isotropic:   Product with a single shared lengthscale
//   AdditiveSum: sum_i alpha_i k_i(x_i - y_i)
struct KernelSpec {
  KernelFamily family = KernelFamily::Matern52;
  Composition composition = Composition::Product;
  Eigen::VectorXd lengthscales;          // size d, or 1 when Isotropic
  double variance = 1.0;                 // sigma^2, Product/Isotropic only
  Eigen::VectorXd component_variances;   // alpha_i, AdditiveSum only
  int dimension = 0;

  int n_lengthscales() const { return composition == Composition::Isotropic ? 1 : dimension; }
  double theta(int dim) const {
    return composition == Composition::Isotropic ? lengthscales[0] : lengthscales[dim];
  }

  static KernelSpec product(KernelFamily f, Eigen::VectorXd theta, double var);
  static KernelSpec isotropic(KernelFamily f, double theta, double var, int d);
  static KernelSpec additive(KernelFamily f, Eigen::VectorXd theta, Eigen::VectorXd alpha);
};

// Throws SpecError / DimensionError when the spec is out of contract.
void validate_spec(const KernelSpec& spec);

// Prior variance k(x,x): sigma^2, or sum_i alpha_i for AdditiveSum.
double variance_normalization(const KernelSpec& spec);

double kernel_eval(const KernelSpec& spec, const Eigen::RowVectorXd& x,
                   const Eigen::RowVectorXd& y);

// Cross-covariance matrix k(X, Y), |X| x |Y|, no nugget.
Eigen::MatrixXd kernel_matrix(const KernelSpec& spec, const Eigen::MatrixXd& X,
                              const Eigen::MatrixXd& Y);

// Self-covariance k(X, X) + nugget * I. The nugget only ever lands on the
// diagonal of a square self-covariance matrix.
Eigen::MatrixXd kernel_matrix(const KernelSpec& spec, const Eigen::MatrixXd& X, double nugget);

// d k(X,X) / d hyperparameter (no nugget term on the diagonal).
// Hyperparameters are indexed: lengthscales first (one entry when Isotropic),
// then variance (Product/Isotropic) or the d component variances (AdditiveSum),
// and finally the nugget, whose gradient is the identity.
int n_hyperparameters(const KernelSpec& spec);
Eigen::MatrixXd kernel_grad(const KernelSpec& spec, const Eigen::MatrixXd& X, int index);

namespace kern1d {

// One-dimensional unit-variance kernel factor and its derivatives.
double value(KernelFamily f, double h, double theta);
// d value / d theta.
double dtheta(KernelFamily f, double h, double theta);
// d value / d x where h = x - y.
double dx(KernelFamily f, double h, double theta);
// d^2 value / dx dy at h = 0 (cross second derivative, equals -value''(0)).
double cross2_at_zero(KernelFamily f, double theta);

}  // namespace kern1d

// Gradient of k(x, x_j) w.r.t. x for every training row: |X| x d matrix.
// Requires Product or Isotropic composition.
Eigen::MatrixXd kernel_grad_x(const KernelSpec& spec, const Eigen::RowVectorXd& x,
                              const Eigen::MatrixXd& X);

// All lengthscale gradients of a Product/Isotropic kernel matrix at once,
// reusing the precomputed K = k(X, X) (variance scaling passes through the
// log-derivative ratio). One matrix per lengthscale.
std::vector<Eigen::MatrixXd> product_theta_grads(const KernelSpec& spec, const Eigen::MatrixXd& X,
                                                 const Eigen::MatrixXd& K);

}  // namespace hdgp
