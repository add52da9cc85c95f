#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "sd2e/dataio.hpp"
#include "sd2e/exploitation.hpp"
#include "sd2e/exploration_em.hpp"
#include "sd2e/metrics.hpp"
#include "sd2e/sd_correction.hpp"
#include "sd2e/vif_feedback.hpp"

namespace sd2e {

enum class LoopMode { Open, Closed };

std::string to_string(LoopMode m);
LoopMode parse_loop_mode(const std::string& s);

/// Scalar recipe for the exploration's starting point; expanded to the
/// stacked feature width at run time.
struct EmInit {
  double z0 = 10.0;
  double p0 = 10.0;
  double state_noise = 2.0;
  double obs_noise = 1.0;
  double weight = 1.0;
  double offset = 1.0;

  SSMParams expand(Eigen::Index dim) const;
};

struct LoopConfig {
  LoopMode mode = LoopMode::Closed;
  MethodKind method = MethodKind::Global;
  int n_levels = 3;
  /// Closed loop: outer exploration/exploitation rounds (n1).
  int outer_iterations = 8;
  /// EM iterations for the open-loop exploration and every subspace EM.
  int em_iterations = 8;
  int lookback = 10;
  DenomVariant denom_variant = DenomVariant::Ols;
  EmInit em_init;
  RegressorConfig regressor;
  std::size_t min_group = 20;
  bool warm_start_local = false;
  bool rebound_per_subspace = false;
  /// Clamp corrected values to the root bounds before they become
  /// exploitation targets.
  bool clamp_targets = true;
  std::uint64_t seed = 1;

  void validate() const;
};

struct AxisCounters {
  int em_iterations = 0;  // exploration e_step/m_step rounds
  int e_steps = 0;
  int m_steps = 0;
  int set_weights_calls = 0;
  int sd_passes = 0;
  int local_em_runs = 0;
  int exploitation_trainings = 0;
};

struct AxisTimings {
  double exploration_seconds = 0.0;
  double exploitation_seconds = 0.0;
  double sd_seconds = 0.0;
};

/// Cost accounting: open loop  t1*n1 + t2*n2 + t3*n3,
///                  closed loop (t1 + t2*n2 + t3*n3) * n1.
struct CostModel {
  LoopMode mode = LoopMode::Open;
  int n1 = 0;
  int n2 = 0;
  int n3 = 0;
  double t1 = 0.0;
  double t2 = 0.0;
  double t3 = 0.0;
  double predicted_total = 0.0;
  double measured_total = 0.0;
  double ratio = 0.0;  // measured / predicted, 0 when predicted is 0
};

CostModel cost_report(LoopMode mode, const AxisCounters& counters, const AxisTimings& timings);

struct AxisReport {
  Eigen::VectorXd train_uncorrected;  // exploration output on the training set
  Eigen::VectorXd train_corrected;    // after space division
  Eigen::VectorXd train_fit;          // exploitation on the training inputs
  Eigen::VectorXd test_pred;          // exploitation on the test inputs
  Eigen::VectorXd exploration_test;   // exploration posterior on the test set
  SSMParams exploration_params;
  CorrectionTrace trace;
  std::vector<double> level_rmse;  // clamped corrected values vs truth, per level
  std::vector<EmIterationLog> em_log;
  std::vector<LossPoint> loss_curve;
  AxisCounters counters;
  AxisTimings timings;
  CostModel cost;
};

struct RunReport {
  LoopConfig config;
  Metrics corrected_train;
  Metrics uncorrected_train;
  Metrics train_fit;
  Metrics test;
  std::array<AxisReport, 2> axes;
  AxisBounds root_x{0.0, 1.0};
  AxisBounds root_y{0.0, 1.0};
  std::string experiment;  // "A", "B" or a free-form dataset tag

  const AxisReport& axis(Axis a) const { return axes[static_cast<std::size_t>(a)]; }
};

/// Training/test data already windowed and labelled for one run.
struct PreparedData {
  Dataset train;
  Dataset test;
  Eigen::MatrixXd train_windows;
  Eigen::MatrixXd test_windows;
  ViFLabels labels;
};

PreparedData prepare(const Dataset& train, const Dataset& test, const LoopConfig& cfg);
PreparedData prepare(const Dataset& train, const Dataset& test, const ViFLabels& labels, const LoopConfig& cfg);

/// Subspace-EM settings used by the space-division step.
EmSettings em_settings(const LoopConfig& cfg, Eigen::Index dim, const SSMParams& parent);

RunReport run_open_loop(const PreparedData& data, const LoopConfig& cfg);
RunReport run_closed_loop(const PreparedData& data, const LoopConfig& cfg);
/// Dispatch on cfg.mode.
RunReport run_loop(const PreparedData& data, const LoopConfig& cfg);

/// Deterministic report: no wall-clock fields.
nlohmann::json report_to_json(const RunReport& r);
/// Wall-clock durations and cost-model evaluation.
nlohmann::json timing_to_json(const RunReport& r);
nlohmann::json config_to_json(const LoopConfig& c);

std::string ledger_header();
std::string ledger_row(const RunReport& r, const std::string& run_id, const std::string& timestamp);
/// Append one row, writing the header first when the file is new.
void append_ledger(const std::string& path, const RunReport& r, const std::string& run_id,
                   const std::string& timestamp);

}  // namespace sd2e
