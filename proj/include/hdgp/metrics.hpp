#pragma once

#include <Eigen/Dense>

#include "hdgp/gp.hpp"

namespace hdgp {

double rmse(const Eigen::VectorXd& y_true, const Eigen::VectorXd& y_pred);

// Mean Gaussian log predictive density; variances are lifted to 1e-12 before
// use. Raw value, no flooring.
double score(const Eigen::VectorXd& y_true, const Prediction& pred);

// Visualization threshold: raw values below the floor are lifted to it.
double floor_score(double raw, double floor);

}  // namespace hdgp
