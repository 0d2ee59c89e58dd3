#include "hdgp/kernels.hpp"

#include <cmath>

#include "hdgp/errors.hpp"

namespace hdgp {

namespace {
constexpr double kSqrt5 = 2.23606797749978969640917366873128;
}

KernelSpec KernelSpec::product(KernelFamily f, Eigen::VectorXd theta, double var) {
  KernelSpec s;
  s.family = f;
  s.composition = Composition::Product;
  s.dimension = static_cast<int>(theta.size());
  s.lengthscales = std::move(theta);
  s.variance = var;
  return s;
}

KernelSpec KernelSpec::isotropic(KernelFamily f, double theta, double var, int d) {
  KernelSpec s;
  s.family = f;
  s.composition = Composition::Isotropic;
  s.dimension = d;
  s.lengthscales = Eigen::VectorXd::Constant(1, theta);
  s.variance = var;
  return s;
}

KernelSpec KernelSpec::additive(KernelFamily f, Eigen::VectorXd theta, Eigen::VectorXd alpha) {
  KernelSpec s;
  s.family = f;
  s.composition = Composition::AdditiveSum;
  s.dimension = static_cast<int>(theta.size());
  s.lengthscales = std::move(theta);
  s.component_variances = std::move(alpha);
  return s;
}

void validate_spec(const KernelSpec& spec) {
  if (spec.dimension < 1) throw SpecError("kernel spec: dimension must be >= 1");
  const int nt = spec.n_lengthscales();
  if (spec.lengthscales.size() != nt)
    throw SpecError("kernel spec: expected " + std::to_string(nt) + " lengthscales, got " +
                    std::to_string(spec.lengthscales.size()));
  for (int i = 0; i < nt; ++i) {
    if (!(spec.lengthscales[i] > 0.0) || !std::isfinite(spec.lengthscales[i]))
      throw SpecError("kernel spec: lengthscales must be positive and finite");
  }
  if (spec.composition == Composition::AdditiveSum) {
    if (spec.component_variances.size() != spec.dimension)
      throw SpecError("kernel spec: AdditiveSum needs one component variance per dimension");
    for (int i = 0; i < spec.dimension; ++i) {
      const double a = spec.component_variances[i];
      if (!(a >= 0.0) || !std::isfinite(a))
        throw SpecError("kernel spec: component variances must be >= 0 and finite");
    }
    if (!(spec.component_variances.sum() > 0.0))
      throw SpecError("kernel spec: at least one component variance must be positive");
  } else {
    if (!(spec.variance > 0.0) || !std::isfinite(spec.variance))
      throw SpecError("kernel spec: variance must be positive and finite");
  }
}

double variance_normalization(const KernelSpec& spec) {
  if (spec.composition == Composition::AdditiveSum) return spec.component_variances.sum();
  return spec.variance;
}

namespace kern1d {

double value(KernelFamily f, double h, double theta) {
  if (f == KernelFamily::Matern52) {
    const double s = kSqrt5 * std::abs(h) / theta;
    return (1.0 + s + s * s / 3.0) * std::exp(-s);
  }
  const double u = h / theta;
  return std::exp(-u * u);
}

double dtheta(KernelFamily f, double h, double theta) {
  if (f == KernelFamily::Matern52) {
    const double s = kSqrt5 * std::abs(h) / theta;
    return s * s * (1.0 + s) * std::exp(-s) / (3.0 * theta);
  }
  const double u = h / theta;
  return std::exp(-u * u) * 2.0 * u * u / theta;
}

double dx(KernelFamily f, double h, double theta) {
  if (f == KernelFamily::Matern52) {
    const double s = kSqrt5 * std::abs(h) / theta;
    return -(5.0 * h / (3.0 * theta * theta)) * (1.0 + s) * std::exp(-s);
  }
  const double u = h / theta;
  return -2.0 * h / (theta * theta) * std::exp(-u * u);
}

double cross2_at_zero(KernelFamily f, double theta) {
  if (f == KernelFamily::Matern52) return 5.0 / (3.0 * theta * theta);
  return 2.0 / (theta * theta);
}

}  // namespace kern1d

namespace {

void check_inputs(const KernelSpec& spec, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y) {
  validate_spec(spec);
  if (X.cols() != spec.dimension || Y.cols() != spec.dimension)
    throw DimensionError("kernel_matrix: input columns do not match kernel dimension");
}

// Product-form matrix: sigma^2 * prod_i k_i. A single exp() per entry:
// Matern52 accumulates sum of s_i and the polynomial product, Gaussian
// accumulates the weighted squared distance.
Eigen::MatrixXd product_matrix(const KernelSpec& spec, const Eigen::MatrixXd& X,
                               const Eigen::MatrixXd& Y) {
  const Eigen::Index n = X.rows(), m = Y.rows();
  const int d = spec.dimension;
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(n, m);
  if (spec.family == KernelFamily::Matern52) {
    Eigen::MatrixXd poly = Eigen::MatrixXd::Ones(n, m);
    for (int i = 0; i < d; ++i) {
      const double c = kSqrt5 / spec.theta(i);
      auto s = (c * (X.col(i).replicate(1, m) - Y.col(i).transpose().replicate(n, 1))).array().abs();
      acc.array() += s;
      poly.array() *= 1.0 + s + s.square() / 3.0;
    }
    return spec.variance * poly.array() * (-acc.array()).exp();
  }
  for (int i = 0; i < d; ++i) {
    const double c = 1.0 / spec.theta(i);
    auto u = c * (X.col(i).replicate(1, m) - Y.col(i).transpose().replicate(n, 1)).array();
    acc.array() += u.square();
  }
  return spec.variance * (-acc.array()).exp();
}

Eigen::MatrixXd additive_matrix(const KernelSpec& spec, const Eigen::MatrixXd& X,
                                const Eigen::MatrixXd& Y) {
  const Eigen::Index n = X.rows(), m = Y.rows();
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n, m);
  for (int i = 0; i < spec.dimension; ++i) {
    const double a = spec.component_variances[i];
    if (a == 0.0) continue;
    const double th = spec.lengthscales[i];
    for (Eigen::Index col = 0; col < m; ++col)
      for (Eigen::Index row = 0; row < n; ++row)
        K(row, col) += a * kern1d::value(spec.family, X(row, i) - Y(col, i), th);
  }
  return K;
}

}  // namespace

double kernel_eval(const KernelSpec& spec, const Eigen::RowVectorXd& x,
                   const Eigen::RowVectorXd& y) {
  validate_spec(spec);
  if (x.size() != spec.dimension || y.size() != spec.dimension)
    throw DimensionError("kernel_eval: point size does not match kernel dimension");
  if (!x.allFinite() || !y.allFinite())
    throw SpecError("kernel_eval: input coordinates must be finite");
  if (spec.composition == Composition::AdditiveSum) {
    double out = 0.0;
    for (int i = 0; i < spec.dimension; ++i)
      out += spec.component_variances[i] *
             kern1d::value(spec.family, x[i] - y[i], spec.lengthscales[i]);
    return out;
  }
  double out = spec.variance;
  for (int i = 0; i < spec.dimension; ++i)
    out *= kern1d::value(spec.family, x[i] - y[i], spec.theta(i));
  return out;
}

Eigen::MatrixXd kernel_matrix(const KernelSpec& spec, const Eigen::MatrixXd& X,
                              const Eigen::MatrixXd& Y) {
  check_inputs(spec, X, Y);
  if (spec.composition == Composition::AdditiveSum) return additive_matrix(spec, X, Y);
  return product_matrix(spec, X, Y);
}

Eigen::MatrixXd kernel_matrix(const KernelSpec& spec, const Eigen::MatrixXd& X, double nugget) {
  if (nugget < 0.0 || !std::isfinite(nugget))
    throw SpecError("kernel_matrix: nugget must be >= 0 and finite");
  Eigen::MatrixXd K = kernel_matrix(spec, X, X);
  K.diagonal().array() += nugget;
  return K;
}

int n_hyperparameters(const KernelSpec& spec) {
  const int nvar = spec.composition == Composition::AdditiveSum ? spec.dimension : 1;
  return spec.n_lengthscales() + nvar + 1;
}

Eigen::MatrixXd kernel_grad(const KernelSpec& spec, const Eigen::MatrixXd& X, int index) {
  check_inputs(spec, X, X);
  const int nt = spec.n_lengthscales();
  const int nh = n_hyperparameters(spec);
  if (index < 0 || index >= nh) throw SpecError("kernel_grad: hyperparameter index out of range");

  const Eigen::Index n = X.rows();
  if (index == nh - 1) return Eigen::MatrixXd::Identity(n, n);  // nugget

  if (spec.composition == Composition::AdditiveSum) {
    const int d = spec.dimension;
    Eigen::MatrixXd G(n, n);
    if (index < nt) {
      // d/d theta_i of alpha_i K_i(theta_i)
      const double a = spec.component_variances[index];
      const double th = spec.lengthscales[index];
      for (Eigen::Index c = 0; c < n; ++c)
        for (Eigen::Index r = 0; r < n; ++r)
          G(r, c) = a * kern1d::dtheta(spec.family, X(r, index) - X(c, index), th);
    } else {
      // d/d alpha_i: the unweighted one-dimensional kernel matrix
      const int i = index - nt;
      if (i >= d) throw SpecError("kernel_grad: index out of range");
      const double th = spec.lengthscales[i];
      for (Eigen::Index c = 0; c < n; ++c)
        for (Eigen::Index r = 0; r < n; ++r)
          G(r, c) = kern1d::value(spec.family, X(r, i) - X(c, i), th);
    }
    return G;
  }

  Eigen::MatrixXd K = product_matrix(spec, X, X);
  if (index == nt) return K / spec.variance;  // d/d sigma^2

  // d/d theta: both factor families are strictly positive, so the per-dimension
  // log-derivative ratio dk_i/dtheta / k_i turns the product rule into one
  // Hadamard product with K.
  Eigen::MatrixXd ratio = Eigen::MatrixXd::Zero(n, n);
  const auto add_ratio = [&](int dim) {
    const double th = spec.theta(dim);
    for (Eigen::Index c = 0; c < n; ++c)
      for (Eigen::Index r = 0; r < n; ++r) {
        const double h = X(r, dim) - X(c, dim);
        ratio(r, c) += kern1d::dtheta(spec.family, h, th) / kern1d::value(spec.family, h, th);
      }
  };
  if (spec.composition == Composition::Isotropic) {
    for (int dim = 0; dim < spec.dimension; ++dim) add_ratio(dim);
  } else {
    add_ratio(index);
  }
  return K.cwiseProduct(ratio);
}

std::vector<Eigen::MatrixXd> product_theta_grads(const KernelSpec& spec, const Eigen::MatrixXd& X,
                                                 const Eigen::MatrixXd& K) {
  if (spec.composition == Composition::AdditiveSum)
    throw SpecError("product_theta_grads: requires a Product or Isotropic kernel");
  check_inputs(spec, X, X);
  const Eigen::Index n = X.rows();
  const bool iso = spec.composition == Composition::Isotropic;
  std::vector<Eigen::MatrixXd> out;
  out.reserve(iso ? 1 : spec.dimension);
  Eigen::MatrixXd ratio;
  for (int dim = 0; dim < spec.dimension; ++dim) {
    if (!iso || dim == 0) ratio = Eigen::MatrixXd::Zero(n, n);
    const double th = spec.theta(dim);
    for (Eigen::Index c = 0; c < n; ++c)
      for (Eigen::Index r = 0; r < n; ++r) {
        const double h = X(r, dim) - X(c, dim);
        ratio(r, c) += kern1d::dtheta(spec.family, h, th) / kern1d::value(spec.family, h, th);
      }
    if (!iso) out.push_back(K.cwiseProduct(ratio));
  }
  if (iso) out.push_back(K.cwiseProduct(ratio));
  return out;
}

Eigen::MatrixXd kernel_grad_x(const KernelSpec& spec, const Eigen::RowVectorXd& x,
                              const Eigen::MatrixXd& X) {
  if (spec.composition == Composition::AdditiveSum)
    throw SpecError("kernel_grad_x: requires a Product or Isotropic kernel");
  check_inputs(spec, X, X);
  if (x.size() != spec.dimension)
    throw DimensionError("kernel_grad_x: point size does not match kernel dimension");
  const Eigen::Index n = X.rows();
  const int d = spec.dimension;
  Eigen::MatrixXd kx = kernel_matrix(spec, x, X);  // 1 x n
  Eigen::MatrixXd J(n, d);
  for (int i = 0; i < d; ++i) {
    const double th = spec.theta(i);
    for (Eigen::Index r = 0; r < n; ++r) {
      const double h = x[i] - X(r, i);
      J(r, i) = kx(0, r) * kern1d::dx(spec.family, h, th) / kern1d::value(spec.family, h, th);
    }
  }
  return J;
}

}  // namespace hdgp
