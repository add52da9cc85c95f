#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "sd2e/exploration_em.hpp"
#include "sd2e/space_division.hpp"
#include "sd2e/vif_feedback.hpp"

namespace sd2e {

enum class MethodKind { Global, Local };

std::string to_string(MethodKind m);
MethodKind parse_method(const std::string& s);

/// Per-level record of a space-division pass on one axis.
struct CorrectionTrace {
  std::vector<Eigen::VectorXd> level_values;  // one K-vector per level
  std::vector<std::size_t> flips;             // reflected samples per level
  std::vector<std::pair<int, std::size_t>> degenerate;      // (level, sample) midline ties
  std::vector<std::pair<int, std::string>> empty_regions;   // (level, prefix) skipped/thin
  std::vector<std::pair<int, std::string>> local_failures;  // (level, prefix) EM error, fell back
  /// Local method: samples whose re-explored value left the subspace and
  /// kept the inherited value instead.
  std::vector<std::size_t> escaped;
  int em_runs = 0;
};

struct EmSettings {
  SSMParams init;
  int iterations = 8;
  DenomVariant variant = DenomVariant::Ols;
  /// Below this many samples a subspace is not re-explored.
  std::size_t min_group = 20;
  /// Start each subspace EM from the weights learned one level up instead of
  /// `init`. Level 1 warm-starts from `parent_params` when given.
  bool warm_start_local = false;
  std::optional<SSMParams> parent_params;
};

/// Samples of one subspace: their indices into the full K-vector and values.
struct GroupValues {
  std::vector<std::size_t> index;
  Eigen::VectorXd values;
};

struct UnitResult {
  Eigen::VectorXd values;
  std::size_t flips = 0;
  std::vector<std::size_t> degenerate;  // positions within the group
};

/// Reflect each prediction whose bit disagrees with its true bit.
UnitResult global_unit(const Eigen::VectorXd& preds, const std::vector<Bit>& true_bits, const AxisBounds& bounds);

struct LocalUnitResult {
  UnitResult unit;
  std::vector<std::size_t> escaped;  // positions within the group
  SSMParams params;                  // weights learned on the subspace
};

/// Re-explore a subspace from its own neural signals, then correct.
/// Returns nullopt when the group is too small to re-explore.
/// `inherited` are the parent-level values used for samples whose fresh
/// prediction falls outside `bounds`.
std::optional<LocalUnitResult> local_unit(const Eigen::MatrixXd& features, const std::vector<Bit>& true_bits,
                                          const AxisBounds& bounds, const Eigen::VectorXd& inherited,
                                          const SSMParams& em_init, int em_iters, const EmSettings& settings);

struct MethodResult {
  Eigen::VectorXd corrected;
  CorrectionTrace trace;
};

/// Recursive correction of one axis to depth n_levels.
MethodResult run_method(const Eigen::VectorXd& preds0, const Eigen::MatrixXd& features, const ViFLabels& labels,
                        Axis axis, MethodKind method, int n_levels, const EmSettings& em);

/// `level,flips,degenerate,rmse` rows; rmse against `truth` after clamping to
/// the root bounds.
void write_trace_csv(std::ostream& out, const CorrectionTrace& trace, const Eigen::VectorXd& truth,
                     const AxisBounds& root);

}  // namespace sd2e
