#pragma once

#include <Eigen/Dense>

namespace sd2e {

struct Metrics {
  double rmse_x = 0.0;
  double rmse_y = 0.0;
  double rmse_xy = 0.0;
};

/// sqrt(mean((pred - truth)^2)). Throws InputError on length mismatch or
/// empty input.
double rmse(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth);

/// Combines per-axis errors; rmse_xy = hypot(rmse_x, rmse_y).
Metrics combine(double rmse_x, double rmse_y);

}  // namespace sd2e
