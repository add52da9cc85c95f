#include <algorithm>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "doctest.h"
#include "sd2e/dataio.hpp"
#include "sd2e/error.hpp"
#include "sd2e/exploitation.hpp"
#include "sd2e/sd_correction.hpp"

using namespace sd2e;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

EmSettings settings_for(Eigen::Index dim) {
  EmSettings s;
  s.init = SSMParams::standard_init(dim);
  return s;
}

struct Scene {
  SynthData synth;
  ViFLabels labels;
  VectorXd preds_x;
};

// Synthetic trajectory plus deliberately poor predictions: uniform over the
// root with a few outside it.
Scene make_scene(std::size_t k, int depth, std::uint64_t seed) {
  SynthConfig cfg;
  cfg.samples = static_cast<Eigen::Index>(k);
  cfg.seed = seed;
  Scene s{generate_synthetic(cfg), {}, {}};
  s.labels = make_labels(s.synth.truth, depth);
  std::mt19937_64 rng(seed + 99);
  const AxisBounds& r = s.labels.root_x;
  std::uniform_real_distribution<double> u(r.min(), r.max());
  s.preds_x.resize(static_cast<Eigen::Index>(k));
  for (Eigen::Index i = 0; i < s.preds_x.size(); ++i) s.preds_x(i) = i % 50 == 0 ? r.max() + 3.0 : u(rng);
  return s;
}

bool same_region(double value, double truth, const AxisBounds& root, int n) {
  return encode_path(value, root, n) == encode_path(truth, root, n);
}

}  // namespace

TEST_CASE("method names") {
  CHECK(parse_method("global") == MethodKind::Global);
  CHECK(parse_method("G") == MethodKind::Global);
  CHECK(parse_method("local") == MethodKind::Local);
  CHECK(parse_method("L") == MethodKind::Local);
  CHECK_THROWS_AS(parse_method("middle"), ConfigError);
}

TEST_CASE("global_unit examples") {
  const UnitResult r = global_unit((VectorXd(1) << 3.0).finished(), {1}, {0, 10});
  CHECK(r.values(0) == 7.0);
  CHECK(r.flips == 1);
  const VectorXd agree = (VectorXd(3) << 1.0, 6.0, 9.0).finished();
  const UnitResult same = global_unit(agree, {0, 1, 1}, {0, 10});
  CHECK(same.values == agree);
  CHECK(same.flips == 0);
  CHECK_THROWS_AS(global_unit(agree, {0, 1}, {0, 10}), InputError);
}

TEST_CASE("wrong-quadrant prediction lands in the true quadrant") {
  // true label in the upper-right quadrant, prediction in the lower-left
  const AxisBounds bx(0, 25), by(0, 15);
  const double px = global_unit((VectorXd(1) << 4.0).finished(), {1}, bx).values(0);
  const double py = global_unit((VectorXd(1) << 2.0).finished(), {1}, by).values(0);
  CHECK(px == 21.0);
  CHECK(py == 13.0);
  CHECK(encode_bit(px, bx) == 1);
  CHECK(encode_bit(py, by) == 1);
}

TEST_CASE("run_method hand recursion") {
  MatrixXd t(2, 2);
  t << 6.5, 1.0, 0.0, 0.0;
  const ViFLabels labels = make_labels_with_roots(t, 2, {0, 8}, {0, 8});
  const VectorXd preds = (VectorXd(2) << 1.0, 0.5).finished();
  const MethodResult r = run_method(preds, MatrixXd(), labels, Axis::X, MethodKind::Global, 2, settings_for(1));
  REQUIRE(r.trace.level_values.size() == 2);
  CHECK(r.trace.level_values[0](0) == 7.0);
  CHECK(r.trace.level_values[1](0) == 7.0);
  CHECK(std::abs(r.corrected(0) - 6.5) <= 8.0 / 4.0);
  CHECK(r.trace.flips[0] == 1);
  CHECK(r.trace.flips[1] == 0);
}

TEST_CASE("N=0 passes predictions through") {
  const Scene s = make_scene(200, 0, 3);
  for (MethodKind m : {MethodKind::Global, MethodKind::Local}) {
    const MethodResult r = run_method(s.preds_x, s.synth.data.features, s.labels, Axis::X, m, 0, settings_for(42));
    CHECK(r.corrected == s.preds_x);
    CHECK(r.trace.level_values.empty());
    CHECK(r.trace.em_runs == 0);
  }
}

TEST_CASE("run_method input checks") {
  const Scene s = make_scene(100, 2, 3);
  CHECK_THROWS_AS(run_method(s.preds_x, s.synth.data.features, s.labels, Axis::X, MethodKind::Global, 3,
                             settings_for(42)),
                  InputError);
  CHECK_THROWS_AS(run_method(s.preds_x.head(50), s.synth.data.features, s.labels, Axis::X, MethodKind::Global, 2,
                             settings_for(42)),
                  InputError);
  CHECK_THROWS_AS(run_method(s.preds_x, s.synth.data.features, s.labels, Axis::X, MethodKind::Global, -1,
                             settings_for(42)),
                  RangeError);
}

TEST_CASE("region agreement and error bound at every depth (global)") {
  const Scene s = make_scene(2000, 8, 5);
  const VectorXd truth = s.synth.truth.col(0);
  const AxisBounds& root = s.labels.root_x;
  for (int n = 1; n <= 8; ++n) {
    const MethodResult r = run_method(s.preds_x, MatrixXd(), s.labels, Axis::X, MethodKind::Global, n,
                                      settings_for(42));
    std::set<std::size_t> degenerate;
    for (const auto& [lvl, k] : r.trace.degenerate) degenerate.insert(k);
    const double bound = root.extent() / std::ldexp(1.0, n);
    for (Eigen::Index k = 0; k < truth.size(); ++k) {
      if (!root.contains(s.preds_x(k)) || degenerate.count(static_cast<std::size_t>(k))) continue;
      CHECK(std::abs(r.corrected(k) - truth(k)) <= bound);
      CHECK(same_region(r.corrected(k), truth(k), root, n));
    }
  }
}

TEST_CASE("global correction never moves a sample away from its label") {
  const Scene s = make_scene(1000, 6, 8);
  const VectorXd truth = s.synth.truth.col(0);
  const MethodResult r = run_method(s.preds_x, MatrixXd(), s.labels, Axis::X, MethodKind::Global, 6,
                                    settings_for(42));
  VectorXd prev = s.preds_x;
  double prev_rmse = std::sqrt((prev - truth).squaredNorm() / 1000.0);
  for (const VectorXd& level : r.trace.level_values) {
    for (Eigen::Index k = 0; k < truth.size(); ++k) {
      CHECK(std::abs(level(k) - truth(k)) <= std::abs(prev(k) - truth(k)) + 1e-12);
    }
    const double rmse = std::sqrt((level - truth).squaredNorm() / 1000.0);
    CHECK(rmse <= prev_rmse + 1e-12);
    prev = level;
    prev_rmse = rmse;
  }
}

TEST_CASE("local method keeps the guarantee and bounds its EM count") {
  const Scene s = make_scene(2000, 4, 12);
  const VectorXd truth = s.synth.truth.col(0);
  const AxisBounds& root = s.labels.root_x;
  for (int n = 1; n <= 4; ++n) {
    const MethodResult r = run_method(s.preds_x, s.synth.data.features, s.labels, Axis::X, MethodKind::Local, n,
                                      settings_for(42));
    CHECK(r.trace.em_runs >= 1);
    CHECK(r.trace.em_runs <= (1 << (n + 1)) - 2);
    std::set<std::size_t> degenerate;
    for (const auto& [lvl, k] : r.trace.degenerate) degenerate.insert(k);
    const double bound = root.extent() / std::ldexp(1.0, n);
    for (Eigen::Index k = 0; k < truth.size(); ++k) {
      if (!root.contains(s.preds_x(k)) || degenerate.count(static_cast<std::size_t>(k))) continue;
      CHECK(std::abs(r.corrected(k) - truth(k)) <= bound);
      CHECK(same_region(r.corrected(k), truth(k), root, n));
    }
  }
}

TEST_CASE("global method never runs EM") {
  const Scene s = make_scene(500, 5, 2);
  const MethodResult r = run_method(s.preds_x, s.synth.data.features, s.labels, Axis::X, MethodKind::Global, 5,
                                    settings_for(42));
  CHECK(r.trace.em_runs == 0);
  CHECK(r.trace.escaped.empty());
}

TEST_CASE("merging scatters every sample back exactly once") {
  const Scene s = make_scene(600, 5, 6);
  std::vector<Eigen::Index> perm(600);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(1));

  MatrixXd truth_p(600, 2);
  VectorXd preds_p(600);
  for (Eigen::Index i = 0; i < 600; ++i) {
    truth_p.row(i) = s.synth.truth.row(perm[i]);
    preds_p(i) = s.preds_x(perm[i]);
  }
  const ViFLabels labels_p = make_labels(truth_p, 5);
  const MethodResult a = run_method(s.preds_x, MatrixXd(), s.labels, Axis::X, MethodKind::Global, 5, settings_for(1));
  const MethodResult b = run_method(preds_p, MatrixXd(), labels_p, Axis::X, MethodKind::Global, 5, settings_for(1));
  for (Eigen::Index i = 0; i < 600; ++i) CHECK(b.corrected(i) == a.corrected(perm[i]));
  for (const auto& level : a.trace.level_values) CHECK(level.size() == 600);
}

TEST_CASE("local_unit signals thin groups") {
  const EmSettings st = settings_for(3);
  CHECK_FALSE(local_unit(MatrixXd(0, 3), {}, {0, 1}, VectorXd(0), st.init, 2, st).has_value());
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 1.0);
  MatrixXd f(19, 3);
  for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = n(rng);
  const std::vector<Bit> bits(19, 1);
  const VectorXd inherited = VectorXd::Constant(19, 0.7);
  CHECK_FALSE(local_unit(f, bits, {0, 1}, inherited, st.init, 2, st).has_value());
  EmSettings relaxed = st;
  relaxed.min_group = 19;
  CHECK(local_unit(f, bits, {0, 1}, inherited, st.init, 2, relaxed).has_value());
  CHECK_THROWS_AS(local_unit(f, std::vector<Bit>(18, 1), {0, 1}, inherited, st.init, 2, st), InputError);
}

TEST_CASE("local_unit on a subspace of a known population") {
  SynthConfig cfg;
  cfg.samples = 3000;
  cfg.seed = 4;
  const SynthData d = generate_synthetic(cfg);
  const ViFLabels labels = make_labels(d.truth, 2);
  const AxisBounds sub = child_bounds(labels.root_x, 0);
  std::vector<Eigen::Index> rows;
  for (Eigen::Index k = 0; k < d.truth.rows(); ++k) {
    if (labels.bits_x(static_cast<std::size_t>(k), 0) == 0) rows.push_back(k);
  }
  MatrixXd f(static_cast<Eigen::Index>(rows.size()), d.data.features.cols());
  std::vector<Bit> bits(rows.size());
  VectorXd truth(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    f.row(r) = d.data.features.row(rows[i]);
    bits[i] = labels.bits_x(static_cast<std::size_t>(rows[i]), 1);
    truth(r) = d.truth(rows[i], 0);
  }
  const VectorXd inherited = VectorXd::Constant(truth.size(), midline(sub) - 1.0);
  const EmSettings st = settings_for(f.cols());
  const auto out = local_unit(f, bits, sub, inherited, st.init, 8, st);
  REQUIRE(out.has_value());
  std::size_t close = 0;
  for (Eigen::Index i = 0; i < truth.size(); ++i) {
    if (std::abs(out->unit.values(i) - truth(i)) <= sub.extent() / 2.0) ++close;
  }
  CHECK(static_cast<double>(close) >= 0.95 * static_cast<double>(truth.size()));
}

TEST_CASE("trace csv") {
  MatrixXd t(2, 2);
  t << 6.5, 1.0, 0.0, 0.0;
  const ViFLabels labels = make_labels_with_roots(t, 2, {0, 8}, {0, 8});
  const MethodResult r = run_method((VectorXd(2) << 1.0, 0.5).finished(), MatrixXd(), labels, Axis::X,
                                    MethodKind::Global, 2, settings_for(1));
  std::ostringstream out;
  write_trace_csv(out, r.trace, t.col(0), labels.root_x);
  CHECK(out.str().rfind("level,flips,degenerate,rmse\n1,1,0,", 0) == 0);
}
