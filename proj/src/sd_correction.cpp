#include "sd2e/sd_correction.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "sd2e/error.hpp"
#include "sd2e/format.hpp"

namespace sd2e {

std::string to_string(MethodKind m) { return m == MethodKind::Global ? "global" : "local"; }

MethodKind parse_method(const std::string& s) {
  if (s == "global" || s == "G") return MethodKind::Global;
  if (s == "local" || s == "L") return MethodKind::Local;
  throw ConfigError("unknown method '" + s + "' (expected global|local)");
}

UnitResult global_unit(const Eigen::VectorXd& preds, const std::vector<Bit>& true_bits, const AxisBounds& bounds) {
  if (static_cast<std::size_t>(preds.size()) != true_bits.size()) {
    throw InputError("global_unit: predictions and bits differ in length");
  }
  UnitResult out;
  out.values.resize(preds.size());
  for (Eigen::Index i = 0; i < preds.size(); ++i) {
    const ReflectResult r = reflect_with_status(preds[i], true_bits[static_cast<std::size_t>(i)], bounds);
    out.values[i] = r.value;
    out.flips += r.flipped ? 1 : 0;
    if (r.degenerate) out.degenerate.push_back(static_cast<std::size_t>(i));
  }
  return out;
}

std::optional<LocalUnitResult> local_unit(const Eigen::MatrixXd& features, const std::vector<Bit>& true_bits,
                                          const AxisBounds& bounds, const Eigen::VectorXd& inherited,
                                          const SSMParams& em_init, int em_iters, const EmSettings& settings) {
  const auto k = static_cast<std::size_t>(features.rows());
  if (true_bits.size() != k || static_cast<std::size_t>(inherited.size()) != k) {
    throw InputError("local_unit: features, bits and inherited values differ in length");
  }
  if (k == 0 || k < settings.min_group || k < 2) return std::nullopt;

  const EmResult em = run_em(features, em_init, em_iters, settings.variant);
  Eigen::VectorXd fresh = em.posterior.means;
  LocalUnitResult out;
  out.params = em.params;
  for (std::size_t i = 0; i < k; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    if (!bounds.contains(fresh[r])) {
      fresh[r] = inherited[r];
      out.escaped.push_back(i);
    }
  }
  out.unit = global_unit(fresh, true_bits, bounds);
  return out;
}

MethodResult run_method(const Eigen::VectorXd& preds0, const Eigen::MatrixXd& features, const ViFLabels& labels,
                        Axis axis, MethodKind method, int n_levels, const EmSettings& em) {
  const Eigen::Index k_len = preds0.size();
  if (n_levels < 0) throw RangeError("run_method: negative depth");
  if (static_cast<std::size_t>(k_len) != labels.sample_count()) {
    throw InputError("run_method: predictions and labels differ in sample count");
  }
  if (labels.depth < n_levels) {
    throw InputError("run_method: labels carry depth " + std::to_string(labels.depth) + " < requested " +
                     std::to_string(n_levels));
  }
  if (method == MethodKind::Local && features.rows() != k_len) {
    throw InputError("run_method: feature rows do not match prediction count");
  }

  const BitMatrix& bits = labels.bits(axis);
  MethodResult result;
  result.corrected = preds0;
  Eigen::VectorXd current = preds0;
  std::map<std::string, SSMParams> learned;  // local method: weights per subspace prefix

  for (int level = 1; level <= n_levels; ++level) {
    const auto lvl = static_cast<std::size_t>(level);
    // Group by the true-bit prefix of length level-1.
    std::map<std::string, std::vector<std::size_t>> groups;
    for (Eigen::Index k = 0; k < k_len; ++k) {
      const auto row = bits.row(static_cast<std::size_t>(k));
      groups[prefix_key(row.first(lvl - 1))].push_back(static_cast<std::size_t>(k));
    }

    Eigen::VectorXd next = current;
    std::size_t flips = 0;
    for (const auto& [key, members] : groups) {
      const auto first = bits.row(members.front());
      const AxisBounds bounds = labels.region_bounds(axis, first.first(lvl - 1));
      std::vector<Bit> true_bits(members.size());
      Eigen::VectorXd inherited(static_cast<Eigen::Index>(members.size()));
      for (std::size_t i = 0; i < members.size(); ++i) {
        true_bits[i] = bits(members[i], lvl - 1);
        inherited[static_cast<Eigen::Index>(i)] = current[static_cast<Eigen::Index>(members[i])];
      }

      UnitResult unit;
      bool done = false;
      if (method == MethodKind::Local) {
        Eigen::MatrixXd sub(static_cast<Eigen::Index>(members.size()), features.cols());
        for (std::size_t i = 0; i < members.size(); ++i) {
          sub.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(members[i]));
        }
        try {
          const SSMParams* start = &em.init;
          if (em.warm_start_local) {
            if (level == 1 && em.parent_params) start = &*em.parent_params;
            if (level > 1) {
              if (auto it = learned.find(key.substr(0, key.size() - 1)); it != learned.end()) start = &it->second;
            }
          }
          auto local = local_unit(sub, true_bits, bounds, inherited, *start, em.iterations, em);
          if (local) {
            ++result.trace.em_runs;
            if (em.warm_start_local) learned.insert_or_assign(key, local->params);
            unit = std::move(local->unit);
            for (std::size_t e : local->escaped) result.trace.escaped.push_back(members[e]);
            done = true;
          } else {
            result.trace.empty_regions.emplace_back(level, key);
          }
        } catch (const DegenerateRegressionError&) {
          ++result.trace.em_runs;
          result.trace.local_failures.emplace_back(level, key);
        } catch (const NumericalError&) {
          ++result.trace.em_runs;
          result.trace.local_failures.emplace_back(level, key);
        }
      }
      if (!done) unit = global_unit(inherited, true_bits, bounds);

      for (std::size_t i = 0; i < members.size(); ++i) {
        next[static_cast<Eigen::Index>(members[i])] = unit.values[static_cast<Eigen::Index>(i)];
      }
      for (std::size_t d : unit.degenerate) result.trace.degenerate.emplace_back(level, members[d]);
      flips += unit.flips;
    }
    current = std::move(next);
    result.trace.level_values.push_back(current);
    result.trace.flips.push_back(flips);
  }
  result.corrected = current;
  return result;
}

void write_trace_csv(std::ostream& out, const CorrectionTrace& trace, const Eigen::VectorXd& truth,
                     const AxisBounds& root) {
  out << "level,flips,degenerate,rmse\n";
  for (std::size_t l = 0; l < trace.level_values.size(); ++l) {
    const auto& v = trace.level_values[l];
    double sse = 0.0;
    for (Eigen::Index k = 0; k < v.size(); ++k) {
      const double e = root.clamp(v[k]) - truth[k];
      sse += e * e;
    }
    const auto level = static_cast<int>(l + 1);
    const auto degenerate = std::count_if(trace.degenerate.begin(), trace.degenerate.end(),
                                          [level](const auto& d) { return d.first == level; });
    out << level << ',' << trace.flips[l] << ',' << degenerate << ','
        << format_double(std::sqrt(sse / static_cast<double>(v.size()))) << '\n';
  }
}

}  // namespace sd2e
