#include "sd2e/vif_feedback.hpp"

#include <cmath>
#include <numeric>

#include "sd2e/error.hpp"

namespace sd2e {

namespace {

AxisBounds extrema(const Eigen::MatrixXd& targets, Eigen::Index col, std::span<const std::size_t> rows) {
  double lo = targets(static_cast<Eigen::Index>(rows.front()), col);
  double hi = lo;
  for (std::size_t r : rows) {
    const double v = targets(static_cast<Eigen::Index>(r), col);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return AxisBounds(lo, hi);
}

// Rebound mode: recursive split where every subspace is re-bounded by the
// extrema of the targets it contains. Subspaces with fewer than two distinct
// values fall back to halving.
void encode_rebound(const Eigen::MatrixXd& targets, Eigen::Index col, std::vector<std::size_t> rows,
                    const AxisBounds& bounds, std::vector<Bit>& prefix, int n_levels, BitMatrix& bits,
                    std::map<std::string, AxisBounds>& table) {
  const auto level = static_cast<int>(prefix.size());
  table.emplace(prefix_key(prefix), bounds);
  if (level == n_levels || rows.empty()) return;

  std::vector<std::size_t> lower;
  std::vector<std::size_t> upper;
  for (std::size_t r : rows) {
    const Bit bit = encode_bit(targets(static_cast<Eigen::Index>(r), col), bounds);
    bits(r, static_cast<std::size_t>(level)) = bit;
    (bit == 0 ? lower : upper).push_back(r);
  }
  for (Bit bit : {Bit{0}, Bit{1}}) {
    auto& child_rows = bit == 0 ? lower : upper;
    if (child_rows.empty()) continue;
    AxisBounds child = child_bounds(bounds, bit);
    try {
      child = extrema(targets, col, child_rows);
    } catch (const BoundsError&) {
      // single distinct value: keep the halved interval
    }
    prefix.push_back(bit);
    encode_rebound(targets, col, std::move(child_rows), child, prefix, n_levels, bits, table);
    prefix.pop_back();
  }
}

}  // namespace

std::string prefix_key(std::span<const Bit> prefix) {
  std::string key;
  key.reserve(prefix.size());
  for (Bit b : prefix) key.push_back(b ? '1' : '0');
  return key;
}

std::string to_string(SupervisionDegree degree) {
  switch (degree) {
    case SupervisionDegree::Unsupervised: return "unsupervised";
    case SupervisionDegree::WeaklySupervised: return "weakly-supervised";
    case SupervisionDegree::AsymptoticallySupervised: return "asymptotically-supervised";
  }
  return "unknown";
}

AxisBounds ViFLabels::region_bounds(Axis axis, std::span<const Bit> prefix) const {
  const auto& table = axis == Axis::X ? rebound_x : rebound_y;
  if (!table.empty()) {
    if (auto it = table.find(prefix_key(prefix)); it != table.end()) return it->second;
  }
  return descend(root(axis), prefix);
}

std::pair<AxisBounds, AxisBounds> extract_active_bounds(const Eigen::MatrixXd& targets) {
  if (targets.cols() != 2) throw InputError("extract_active_bounds: targets must have 2 columns");
  if (targets.rows() < 2) throw InputError("extract_active_bounds: need at least 2 samples");
  if (!targets.allFinite()) throw InputError("extract_active_bounds: non-finite target");
  auto axis_bounds = [&](Eigen::Index c, const char* name) {
    const double lo = targets.col(c).minCoeff();
    const double hi = targets.col(c).maxCoeff();
    if (!(lo < hi)) throw BoundsError(std::string("degenerate bounds on ") + name + " axis (constant targets)");
    return AxisBounds(lo, hi);
  };
  return {axis_bounds(0, "X"), axis_bounds(1, "Y")};
}

ViFLabels make_labels(const Eigen::MatrixXd& targets, int n_levels, bool rebound_per_subspace) {
  if (n_levels < 0) throw RangeError("make_labels: negative depth");
  auto [bx, by] = extract_active_bounds(targets);
  const auto k = static_cast<std::size_t>(targets.rows());
  const auto n = static_cast<std::size_t>(n_levels);

  ViFLabels labels{bx, by, n_levels, BitMatrix(k, n), BitMatrix(k, n), {}, {}};
  if (rebound_per_subspace) {
    std::vector<std::size_t> all(k);
    std::iota(all.begin(), all.end(), std::size_t{0});
    std::vector<Bit> prefix;
    encode_rebound(targets, 0, all, bx, prefix, n_levels, labels.bits_x, labels.rebound_x);
    encode_rebound(targets, 1, all, by, prefix, n_levels, labels.bits_y, labels.rebound_y);
    return labels;
  }
  return make_labels_with_roots(targets, n_levels, bx, by);
}

ViFLabels make_labels_with_roots(const Eigen::MatrixXd& targets, int n_levels, const AxisBounds& root_x,
                                 const AxisBounds& root_y) {
  if (n_levels < 0) throw RangeError("make_labels: negative depth");
  if (targets.cols() != 2) throw InputError("make_labels: targets must have 2 columns");
  const auto k = static_cast<std::size_t>(targets.rows());
  const auto n = static_cast<std::size_t>(n_levels);
  ViFLabels labels{root_x, root_y, n_levels, BitMatrix(k, n), BitMatrix(k, n), {}, {}};
  for (std::size_t r = 0; r < k; ++r) {
    const auto row = static_cast<Eigen::Index>(r);
    const RegionCode cx = encode_path(targets(row, 0), root_x, n_levels);
    const RegionCode cy = encode_path(targets(row, 1), root_y, n_levels);
    for (std::size_t l = 0; l < n; ++l) {
      labels.bits_x(r, l) = cx.bits[l];
      labels.bits_y(r, l) = cy.bits[l];
    }
  }
  return labels;
}

SupervisionDegree supervision_degree(int n_levels, int saturation) {
  if (n_levels < 0) throw RangeError("supervision_degree: negative depth");
  if (n_levels == 0) return SupervisionDegree::Unsupervised;
  if (n_levels >= saturation) return SupervisionDegree::AsymptoticallySupervised;
  return SupervisionDegree::WeaklySupervised;
}

void write_labels_csv(std::ostream& out, const ViFLabels& labels) {
  out << "k,bits_x,bits_y\n";
  for (std::size_t k = 0; k < labels.sample_count(); ++k) {
    out << k << ',' << prefix_key(labels.bits_x.row(k)) << ',' << prefix_key(labels.bits_y.row(k)) << '\n';
  }
}

}  // namespace sd2e
