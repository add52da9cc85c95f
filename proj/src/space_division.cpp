#include "sd2e/space_division.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "sd2e/error.hpp"

namespace sd2e {

AxisBounds::AxisBounds(double min, double max) : min_(min), max_(max) {
  if (!std::isfinite(min) || !std::isfinite(max)) {
    throw BoundsError("axis bounds must be finite");
  }
  if (!(min < max)) {
    throw BoundsError("axis bounds require min < max (got [" + std::to_string(min) + ", " +
                      std::to_string(max) + "])");
  }
}

double AxisBounds::clamp(double z) const noexcept { return std::clamp(z, min_, max_); }

double midline(const AxisBounds& bounds) noexcept { return (bounds.min() + bounds.max()) / 2.0; }

Bit encode_bit(double z, const AxisBounds& bounds) {
  if (!std::isfinite(z)) throw InputError("encode_bit: non-finite position");
  return z >= midline(bounds) ? Bit{1} : Bit{0};
}

ReflectResult reflect_with_status(double z_pred, Bit true_bit, const AxisBounds& bounds) {
  const double mid = midline(bounds);
  if (encode_bit(z_pred, bounds) == true_bit) return {z_pred, false, false};
  if (z_pred == mid) return {z_pred, false, true};

  double r = 2.0 * (mid - z_pred) + z_pred;
  // Floating-point repair only: keep the mirrored value on the requested side
  // and, for in-range predictions, inside the interval.
  if (true_bit == 1 && r < mid) r = mid;
  if (true_bit == 0 && r >= mid) r = std::nextafter(mid, -std::numeric_limits<double>::infinity());
  if (bounds.contains(z_pred)) r = bounds.clamp(r);
  return {r, true, false};
}

double reflect_correct(double z_pred, Bit true_bit, const AxisBounds& bounds) {
  return reflect_with_status(z_pred, true_bit, bounds).value;
}

AxisBounds child_bounds(const AxisBounds& bounds, Bit bit) {
  const double mid = midline(bounds);
  return bit == 0 ? AxisBounds(bounds.min(), mid) : AxisBounds(mid, bounds.max());
}

AxisBounds descend(const AxisBounds& root, std::span<const Bit> prefix) {
  AxisBounds b = root;
  for (Bit bit : prefix) b = child_bounds(b, bit);
  return b;
}

std::uint64_t region_count(int n_levels) {
  if (n_levels < 0) throw RangeError("region_count: negative depth");
  if (n_levels > 31) throw RangeError("region_count: 4^" + std::to_string(n_levels) + " overflows 64 bits");
  return std::uint64_t{1} << (2 * n_levels);
}

FaultTolerance fault_tolerance(const AxisBounds& root_x, const AxisBounds& root_y, int n_levels) {
  if (n_levels < 0) throw RangeError("fault_tolerance: negative depth");
  FaultTolerance ft;
  ft.r_x = std::ldexp(root_x.extent(), -n_levels);
  ft.r_y = std::ldexp(root_y.extent(), -n_levels);
  ft.r_xy = std::hypot(ft.r_x, ft.r_y);
  return ft;
}

RegionCode encode_path(double z, const AxisBounds& root, int n_levels) {
  if (n_levels < 0) throw RangeError("encode_path: negative depth");
  if (!std::isfinite(z)) throw InputError("encode_path: non-finite position");
  RegionCode code;
  code.bits.reserve(static_cast<std::size_t>(n_levels));
  AxisBounds b = root;
  for (int level = 0; level < n_levels; ++level) {
    const Bit bit = encode_bit(z, b);
    code.bits.push_back(bit);
    b = child_bounds(b, bit);
  }
  return code;
}

}  // namespace sd2e
