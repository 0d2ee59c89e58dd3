#include "hdgp/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "hdgp/errors.hpp"

namespace hdgp {

double rmse(const Eigen::VectorXd& y_true, const Eigen::VectorXd& y_pred) {
  if (y_true.size() != y_pred.size()) throw DimensionError("rmse: length mismatch");
  if (y_true.size() == 0) throw DimensionError("rmse: empty input");
  return std::sqrt((y_true - y_pred).squaredNorm() / static_cast<double>(y_true.size()));
}

double score(const Eigen::VectorXd& y_true, const Prediction& pred) {
  const Eigen::Index n = y_true.size();
  if (pred.mean.size() != n || pred.variance.size() != n)
    throw DimensionError("score: length mismatch");
  if (n == 0) throw DimensionError("score: empty input");
  constexpr double kTwoPi = 6.2831853071795864769;
  double s = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double v = std::max(pred.variance[i], 1e-12);
    const double r = y_true[i] - pred.mean[i];
    s += -0.5 * std::log(kTwoPi * v) - r * r / (2.0 * v);
  }
  return s / static_cast<double>(n);
}

double floor_score(double raw, double floor) { return std::max(raw, floor); }

}  // namespace hdgp
