#include "sd2e/metrics.hpp"

#include <cmath>
#include <string>

#include "sd2e/error.hpp"

namespace sd2e {

double rmse(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth) {
  if (pred.size() != truth.size()) {
    throw InputError("rmse: length mismatch (" + std::to_string(pred.size()) + " vs " +
                     std::to_string(truth.size()) + ")");
  }
  if (pred.size() == 0) throw InputError("rmse: empty input");
  return std::sqrt((pred - truth).squaredNorm() / static_cast<double>(pred.size()));
}

Metrics combine(double rmse_x, double rmse_y) { return {rmse_x, rmse_y, std::hypot(rmse_x, rmse_y)}; }

}  // namespace sd2e
