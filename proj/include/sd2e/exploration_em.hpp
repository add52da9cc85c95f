#pragma once

#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace sd2e {

/// Linear-Gaussian state-space model over one axis:
///   z_1 ~ N(z0, p0),  z_k = z_{k-1} + w,  w ~ N(0, state_noise)
///   S_k = a z_k + mu + v,  v ~ N(0, diag(obs_noise))
struct SSMParams {
  Eigen::VectorXd a;
  Eigen::VectorXd mu;
  double state_noise = 2.0;
  Eigen::VectorXd obs_noise;
  double z0 = 10.0;
  double p0 = 10.0;

  Eigen::Index dim() const noexcept { return a.size(); }
  /// Throws InputError when an invariant is violated.
  void validate() const;

  /// a = mu = 1, R_v = I, z0 = 10, p0 = 10, R_w = 2.
  static SSMParams standard_init(Eigen::Index dim);
};

struct Posterior {
  Eigen::VectorXd means;
  Eigen::VectorXd variances;
  /// Forward-pass variances; kept for diagnostics.
  Eigen::VectorXd filtered_variances;
};

enum class DenomVariant { Ols, Paper };

std::string to_string(DenomVariant v);
DenomVariant parse_denom_variant(const std::string& s);

struct ObservationWeights {
  Eigen::VectorXd a;
  Eigen::VectorXd mu;
};

struct EmIterationLog {
  int iteration = 0;
  double param_delta = 0.0;
  double mean_state = 0.0;
  double sd_state = 0.0;
  double mean_variance = 0.0;
};

struct EmResult {
  SSMParams params;
  Posterior posterior;
  std::vector<EmIterationLog> log;
  int e_steps = 0;
  int m_steps = 0;
};

/// Forward Kalman filter plus fixed-interval backward (RTS) smoother.
Posterior e_step(const Eigen::MatrixXd& features, const SSMParams& params);

/// Observation-weight update from posterior sufficient statistics.
ObservationWeights m_step(const Eigen::MatrixXd& features, const Posterior& posterior,
                          DenomVariant variant = DenomVariant::Ols);

EmResult run_em(const Eigen::MatrixXd& features, const SSMParams& init, int iterations,
                DenomVariant variant = DenomVariant::Ols);

SSMParams set_weights(const SSMParams& params, const Eigen::VectorXd& a_new, const Eigen::VectorXd& mu_new);

void write_em_log_csv(std::ostream& out, const std::vector<EmIterationLog>& log);

}  // namespace sd2e
