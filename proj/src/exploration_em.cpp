#include "sd2e/exploration_em.hpp"

#include <cmath>

#include "sd2e/error.hpp"
#include "sd2e/format.hpp"

namespace sd2e {

void SSMParams::validate() const {
  if (mu.size() != a.size() || obs_noise.size() != a.size()) {
    throw InputError("SSMParams: a, mu and obs_noise must share one dimension");
  }
  if (!(state_noise > 0.0)) throw InputError("SSMParams: state_noise must be > 0");
  if (!(p0 > 0.0)) throw InputError("SSMParams: p0 must be > 0");
  if (obs_noise.size() > 0 && !(obs_noise.minCoeff() > 0.0)) {
    throw InputError("SSMParams: obs_noise entries must be > 0");
  }
  if (!a.allFinite() || !mu.allFinite() || !std::isfinite(z0)) throw InputError("SSMParams: non-finite entry");
}

SSMParams SSMParams::standard_init(Eigen::Index dim) {
  SSMParams p;
  p.a = Eigen::VectorXd::Ones(dim);
  p.mu = Eigen::VectorXd::Ones(dim);
  p.obs_noise = Eigen::VectorXd::Ones(dim);
  p.state_noise = 2.0;
  p.z0 = 10.0;
  p.p0 = 10.0;
  return p;
}

std::string to_string(DenomVariant v) { return v == DenomVariant::Ols ? "ols" : "paper"; }

DenomVariant parse_denom_variant(const std::string& s) {
  if (s == "ols") return DenomVariant::Ols;
  if (s == "paper") return DenomVariant::Paper;
  throw ConfigError("unknown denominator variant '" + s + "' (expected ols|paper)");
}

Posterior e_step(const Eigen::MatrixXd& features, const SSMParams& params) {
  params.validate();
  const Eigen::Index k_len = features.rows();
  if (k_len < 1) throw InputError("e_step: need at least one sample");
  if (features.cols() != params.dim()) {
    throw InputError("e_step: feature width " + std::to_string(features.cols()) + " != model dimension " +
                     std::to_string(params.dim()));
  }

  // Diagonal R_v makes the scalar-state update an information-form sum.
  const Eigen::VectorXd w = params.a.cwiseQuotient(params.obs_noise);
  const double info = params.a.dot(w);
  const Eigen::VectorXd evidence = features * w - Eigen::VectorXd::Constant(k_len, params.mu.dot(w));

  Eigen::VectorXd m_pred(k_len), p_pred(k_len), m_filt(k_len), p_filt(k_len);
  double m = params.z0;
  double p = params.p0;
  for (Eigen::Index k = 0; k < k_len; ++k) {
    m_pred[k] = m;
    p_pred[k] = p;
    const double precision = 1.0 / p + info;
    if (!(precision > 0.0) || !std::isfinite(precision)) {
      throw NumericalError("e_step: singular innovation covariance at sample " + std::to_string(k));
    }
    p_filt[k] = 1.0 / precision;
    m_filt[k] = p_filt[k] * (m / p + evidence[k]);
    if (!std::isfinite(m_filt[k])) throw NumericalError("e_step: non-finite filtered mean at sample " + std::to_string(k));
    m = m_filt[k];
    p = p_filt[k] + params.state_noise;
  }

  Posterior post;
  post.means = m_filt;
  post.variances = p_filt;
  post.filtered_variances = p_filt;
  for (Eigen::Index k = k_len - 2; k >= 0; --k) {
    const double gain = p_filt[k] / p_pred[k + 1];
    post.means[k] = m_filt[k] + gain * (post.means[k + 1] - m_pred[k + 1]);
    post.variances[k] = p_filt[k] + gain * gain * (post.variances[k + 1] - p_pred[k + 1]);
  }
  if (!post.means.allFinite() || !post.variances.allFinite()) {
    throw NumericalError("e_step: non-finite smoothed posterior");
  }
  return post;
}

ObservationWeights m_step(const Eigen::MatrixXd& features, const Posterior& posterior, DenomVariant variant) {
  const Eigen::Index k_len = features.rows();
  if (posterior.means.size() != k_len || posterior.variances.size() != k_len) {
    throw InputError("m_step: posterior length does not match sample count");
  }
  if (k_len < 2) throw InputError("m_step: need at least two samples");

  const auto kd = static_cast<double>(k_len);
  const double sum_z = posterior.means.sum();
  const double sum_z2 = posterior.means.squaredNorm() + posterior.variances.sum();
  const double ols_denom = kd * sum_z2 - sum_z * sum_z;
  const double denom = variant == DenomVariant::Ols ? ols_denom : sum_z2 - sum_z;

  // A state with no spread cannot carry a slope regardless of the variant.
  if (std::abs(ols_denom) < 1e-12 || std::abs(denom) < 1e-12) {
    throw DegenerateRegressionError("m_step: degenerate regression denominator (" + to_string(variant) +
                                    " variant, value " + format_double(denom) + ")");
  }

  const Eigen::VectorXd sum_s = features.colwise().sum().transpose();
  const Eigen::VectorXd sum_sz = features.transpose() * posterior.means;

  ObservationWeights out;
  out.a = (kd * sum_sz - sum_z * sum_s) / denom;
  out.mu = (sum_s - out.a * sum_z) / kd;
  return out;
}

SSMParams set_weights(const SSMParams& params, const Eigen::VectorXd& a_new, const Eigen::VectorXd& mu_new) {
  if (a_new.size() != params.dim() || mu_new.size() != params.dim()) {
    throw InputError("set_weights: dimension mismatch (model " + std::to_string(params.dim()) + ", got " +
                     std::to_string(a_new.size()) + "/" + std::to_string(mu_new.size()) + ")");
  }
  SSMParams out = params;
  out.a = a_new;
  out.mu = mu_new;
  return out;
}

EmResult run_em(const Eigen::MatrixXd& features, const SSMParams& init, int iterations, DenomVariant variant) {
  if (iterations < 1) throw InputError("run_em: iterations must be >= 1");
  EmResult result;
  result.params = init;
  for (int it = 1; it <= iterations; ++it) {
    try {
      result.posterior = e_step(features, result.params);
      ++result.e_steps;
      const ObservationWeights w = m_step(features, result.posterior, variant);
      ++result.m_steps;

      EmIterationLog entry;
      entry.iteration = it;
      entry.param_delta =
          std::sqrt((w.a - result.params.a).squaredNorm() + (w.mu - result.params.mu).squaredNorm());
      const auto& z = result.posterior.means;
      entry.mean_state = z.mean();
      entry.sd_state = std::sqrt((z.array() - entry.mean_state).square().mean());
      entry.mean_variance = result.posterior.variances.mean();
      result.log.push_back(entry);

      result.params = set_weights(result.params, w.a, w.mu);
    } catch (const DegenerateRegressionError& e) {
      throw DegenerateRegressionError("EM iteration " + std::to_string(it) + ": " + e.what());
    } catch (const NumericalError& e) {
      throw NumericalError("EM iteration " + std::to_string(it) + ": " + e.what());
    }
  }
  return result;
}

void write_em_log_csv(std::ostream& out, const std::vector<EmIterationLog>& log) {
  out << "iteration,param_delta,mean_state,sd_state,mean_variance\n";
  for (const auto& e : log) {
    out << e.iteration << ',' << format_double(e.param_delta) << ',' << format_double(e.mean_state) << ','
        << format_double(e.sd_state) << ',' << format_double(e.mean_variance) << '\n';
  }
}

}  // namespace sd2e
