#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>

namespace testutil {

inline Eigen::MatrixXd uniform_design(int n, int d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd X(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) X(i, j) = u(rng);
  return X;
}

inline Eigen::VectorXd gaussian_vector(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = g(rng);
  return v;
}

// Smooth deterministic target for fit tests.
inline Eigen::VectorXd smooth_response(const Eigen::MatrixXd& X) {
  Eigen::VectorXd y(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    double s = std::sin(3.0 * X(i, 0));
    for (Eigen::Index j = 1; j < X.cols(); ++j)
      s += 0.5 * std::cos(2.0 * X(i, j) + static_cast<double>(j));
    y[i] = s;
  }
  return y;
}

inline double rel_err(double got, double want) {
  return std::abs(got - want) / std::max(1e-12, std::abs(want));
}

// Worst relative component error between an analytic gradient and its
// central finite-difference estimate, with an absolute floor so that
// near-zero components compare absolutely.
inline double grad_rel_err(const Eigen::VectorXd& analytic, const Eigen::VectorXd& fd,
                           double scale) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    const double denom = std::max(std::abs(fd[i]), scale);
    worst = std::max(worst, std::abs(analytic[i] - fd[i]) / denom);
  }
  return worst;
}

}  // namespace testutil
