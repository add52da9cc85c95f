#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sd2e/dataio.hpp"
#include "sd2e/loop_runner.hpp"
#include "sd2e/metrics.hpp"
#include "sd2e/space_division.hpp"

namespace sd2e {

/// Round half away from zero to `decimals` places.
double round_to(double v, int decimals);

struct RobustnessRow {
  int n = 0;
  FaultTolerance exact;
  /// Per-axis values rounded to 3 places; r_xy is the hypot of the rounded
  /// per-axis values, rounded again.
  FaultTolerance shown;
};

std::vector<RobustnessRow> robustness_table(double extent_x, double extent_y, int n_max);
/// `N,R_x,R_y,R_xy,R_x_exact,R_y_exact,R_xy_exact`
std::string robustness_csv(const std::vector<RobustnessRow>& rows);
nlohmann::json robustness_json(const std::vector<RobustnessRow>& rows);

struct SweepRow {
  int n = 0;
  bool ok = false;
  std::string error;
  Metrics uncorrected_train;
  Metrics corrected_train;
  Metrics test;
};

/// Runs the configured loop at N = 0..n_max with one seed. A failing N is
/// recorded and the sweep moves on.
std::vector<SweepRow> sweep_n(const Dataset& train, const Dataset& test, const LoopConfig& cfg, int n_max);
std::string sweep_csv(const std::vector<SweepRow>& rows);
nlohmann::json sweep_json(const std::vector<SweepRow>& rows);

struct AblationRow {
  std::string name;
  Metrics train;
  Metrics test;
  /// Which column the row is ranked on: the &SD rows train no decoder, so
  /// their corrected training values are what they produce.
  bool rank_on_test = true;

  double ranked() const { return rank_on_test ? test.rmse_xy : train.rmse_xy; }
};

/// Rows in order: Un-EM, Un-EM&Exploitation, Un-EM&SD(L), Un-EM&SD(G),
/// full(L), full(G). Full rows use the closed loop.
std::vector<AblationRow> ablation(const Dataset& train, const Dataset& test, const LoopConfig& cfg);
std::string ablation_csv(const std::vector<AblationRow>& rows);
nlohmann::json ablation_json(const std::vector<AblationRow>& rows);
/// full < Un-EM&SD < Un-EM&Exploitation < Un-EM, each group at its best
/// method.
bool ablation_ordering_holds(const std::vector<AblationRow>& rows);

struct CorrectionEntry {
  std::string label;       // e.g. "closed(G)"
  std::string experiment;  // "A", "B", ...
  double uncorrected_train = 0.0;
  double corrected_train = 0.0;
  double test = 0.0;
};

CorrectionEntry correction_entry(const RunReport& r);
/// Reads a report produced by report_to_json.
CorrectionEntry correction_entry(const nlohmann::json& report);

/// One row per (label, experiment) plus a `(A+B)/2` row per label holding
/// the mean over that label's experiments.
std::vector<CorrectionEntry> correction_table(const std::vector<CorrectionEntry>& entries);
std::string correction_csv(const std::vector<CorrectionEntry>& rows);
nlohmann::json correction_json(const std::vector<CorrectionEntry>& rows);

}  // namespace sd2e
