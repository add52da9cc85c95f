#pragma once

#include <map>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "sd2e/space_division.hpp"

namespace sd2e {

/// Row-major K x N bit matrix.
class BitMatrix {
 public:
  BitMatrix() = default;
  BitMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  Bit operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  Bit& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  std::span<const Bit> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<Bit> data_;
};

/// Weak supervision: per-sample region bits on each axis plus the root
/// active-space bounds they were encoded against.
struct ViFLabels {
  AxisBounds root_x{0.0, 1.0};
  AxisBounds root_y{0.0, 1.0};
  int depth = 0;
  BitMatrix bits_x;
  BitMatrix bits_y;
  /// Only populated in rebound mode: bounds of every visited subspace keyed
  /// by its bit prefix ("" is the root).
  std::map<std::string, AxisBounds> rebound_x;
  std::map<std::string, AxisBounds> rebound_y;

  std::size_t sample_count() const noexcept { return bits_x.rows(); }
  const AxisBounds& root(Axis axis) const noexcept { return axis == Axis::X ? root_x : root_y; }
  const BitMatrix& bits(Axis axis) const noexcept { return axis == Axis::X ? bits_x : bits_y; }
  bool rebound() const noexcept { return !rebound_x.empty(); }

  /// Bounds of the subspace selected by `prefix` on `axis`.
  AxisBounds region_bounds(Axis axis, std::span<const Bit> prefix) const;
};

enum class SupervisionDegree { Unsupervised, WeaklySupervised, AsymptoticallySupervised };

std::string to_string(SupervisionDegree degree);
std::string prefix_key(std::span<const Bit> prefix);

/// Per-axis extrema of a K x 2 target matrix.
std::pair<AxisBounds, AxisBounds> extract_active_bounds(const Eigen::MatrixXd& targets);

/// Encode every target to depth n_levels. With `rebound_per_subspace` the
/// bounds of each subspace are re-extracted from the targets that fall in it
/// instead of halving the parent.
ViFLabels make_labels(const Eigen::MatrixXd& targets, int n_levels, bool rebound_per_subspace = false);

/// Encode targets against fixed roots (e.g. training bounds applied to a
/// held-out set). Targets may fall outside the roots.
ViFLabels make_labels_with_roots(const Eigen::MatrixXd& targets, int n_levels, const AxisBounds& root_x,
                                 const AxisBounds& root_y);

SupervisionDegree supervision_degree(int n_levels, int saturation = 64);

/// CSV: header `k,bits_x,bits_y`, bit strings level 1 first.
void write_labels_csv(std::ostream& out, const ViFLabels& labels);

}  // namespace sd2e
