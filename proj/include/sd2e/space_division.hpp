#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace sd2e {

using Bit = std::uint8_t;

enum class Axis { X = 0, Y = 1 };

/// Closed 1-D interval [min, max] with min < max, both finite.
class AxisBounds {
 public:
  AxisBounds(double min, double max);

  double min() const noexcept { return min_; }
  double max() const noexcept { return max_; }
  double extent() const noexcept { return max_ - min_; }
  bool contains(double z) const noexcept { return z >= min_ && z <= max_; }
  double clamp(double z) const noexcept;

  friend bool operator==(const AxisBounds&, const AxisBounds&) = default;

 private:
  double min_;
  double max_;
};

/// Per-level 0/1 path (level 1 first) identifying a subspace along one axis.
struct RegionCode {
  std::vector<Bit> bits;

  std::size_t depth() const noexcept { return bits.size(); }
  friend bool operator==(const RegionCode&, const RegionCode&) = default;
};

struct FaultTolerance {
  double r_x = 0.0;
  double r_y = 0.0;
  double r_xy = 0.0;
};

/// Outcome of a single reflection step.
struct ReflectResult {
  double value = 0.0;
  bool flipped = false;
  /// Prediction sat exactly on the midline with true bit 0; the bit cannot
  /// be reached by reflection and the value is left on the midline.
  bool degenerate = false;
};

double midline(const AxisBounds& bounds) noexcept;

/// 1 if z >= midline, else 0. Throws InputError for non-finite z.
Bit encode_bit(double z, const AxisBounds& bounds);

/// Mirror z_pred across the midline when its bit disagrees with true_bit.
ReflectResult reflect_with_status(double z_pred, Bit true_bit, const AxisBounds& bounds);

double reflect_correct(double z_pred, Bit true_bit, const AxisBounds& bounds);

AxisBounds child_bounds(const AxisBounds& bounds, Bit bit);

/// Bounds reached by descending `root` along `prefix`.
AxisBounds descend(const AxisBounds& root, std::span<const Bit> prefix);

/// Number of 2-D subspaces after n_levels divisions: 4^n.
std::uint64_t region_count(int n_levels);

FaultTolerance fault_tolerance(const AxisBounds& root_x, const AxisBounds& root_y, int n_levels);

RegionCode encode_path(double z, const AxisBounds& root, int n_levels);

}  // namespace sd2e
