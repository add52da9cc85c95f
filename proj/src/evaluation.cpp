#include "sd2e/evaluation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "sd2e/error.hpp"
#include "sd2e/format.hpp"

namespace sd2e {

using Eigen::VectorXd;

double round_to(double v, int decimals) {
  const double scale = std::pow(10.0, decimals);
  return std::round(v * scale) / scale;
}

std::vector<RobustnessRow> robustness_table(double extent_x, double extent_y, int n_max) {
  if (!(extent_x > 0.0) || !(extent_y > 0.0)) throw InputError("robustness_table: extents must be > 0");
  if (n_max < 0) throw RangeError("robustness_table: n_max must be >= 0");
  std::vector<RobustnessRow> rows;
  for (int n = 0; n <= n_max; ++n) {
    RobustnessRow row;
    row.n = n;
    row.exact = fault_tolerance(AxisBounds(0.0, extent_x), AxisBounds(0.0, extent_y), n);
    row.shown.r_x = round_to(row.exact.r_x, 3);
    row.shown.r_y = round_to(row.exact.r_y, 3);
    row.shown.r_xy = round_to(std::hypot(row.shown.r_x, row.shown.r_y), 3);
    rows.push_back(row);
  }
  return rows;
}

std::string robustness_csv(const std::vector<RobustnessRow>& rows) {
  std::ostringstream out;
  out << "N,R_x,R_y,R_xy,R_x_exact,R_y_exact,R_xy_exact\n";
  for (const auto& r : rows) {
    out << r.n << ',' << format_double(r.shown.r_x) << ',' << format_double(r.shown.r_y) << ','
        << format_double(r.shown.r_xy) << ',' << format_double(r.exact.r_x) << ',' << format_double(r.exact.r_y)
        << ',' << format_double(r.exact.r_xy) << '\n';
  }
  return out.str();
}

nlohmann::json robustness_json(const std::vector<RobustnessRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    out.push_back({{"N", r.n},
                   {"R_x", r.shown.r_x},
                   {"R_y", r.shown.r_y},
                   {"R_xy", r.shown.r_xy},
                   {"R_x_exact", r.exact.r_x},
                   {"R_y_exact", r.exact.r_y},
                   {"R_xy_exact", r.exact.r_xy}});
  }
  return out;
}

namespace {

std::string metrics_cells(const Metrics& m) {
  return format_double(m.rmse_x) + ',' + format_double(m.rmse_y) + ',' + format_double(m.rmse_xy);
}

nlohmann::json metrics_json(const Metrics& m) {
  return {{"rmse_x", m.rmse_x}, {"rmse_y", m.rmse_y}, {"rmse_xy", m.rmse_xy}};
}

VectorXd clamp_to(const VectorXd& v, const AxisBounds& b) {
  return v.unaryExpr([&b](double z) { return b.clamp(z); });
}

}  // namespace

std::vector<SweepRow> sweep_n(const Dataset& train, const Dataset& test, const LoopConfig& cfg, int n_max) {
  if (n_max < 0) throw RangeError("sweep_n: n_max must be >= 0");
  LoopConfig deepest = cfg;
  deepest.n_levels = n_max;
  // Bits are prefix-consistent, so one labelling at n_max serves every N.
  const PreparedData data = prepare(train, test, deepest);
  std::vector<SweepRow> rows;
  for (int n = 0; n <= n_max; ++n) {
    SweepRow row;
    row.n = n;
    LoopConfig c = cfg;
    c.n_levels = n;
    try {
      const RunReport r = run_loop(data, c);
      row.ok = true;
      row.uncorrected_train = r.uncorrected_train;
      row.corrected_train = r.corrected_train;
      row.test = r.test;
    } catch (const Error& e) {
      row.error = e.what();
    }
    rows.push_back(row);
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "N,ok,uncorrected_train_rmse_x,uncorrected_train_rmse_y,uncorrected_train_rmse_xy,"
         "corrected_train_rmse_x,corrected_train_rmse_y,corrected_train_rmse_xy,"
         "test_rmse_x,test_rmse_y,test_rmse_xy,error\n";
  for (const auto& r : rows) {
    std::string err = r.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    out << r.n << ',' << (r.ok ? 1 : 0) << ',' << metrics_cells(r.uncorrected_train) << ','
        << metrics_cells(r.corrected_train) << ',' << metrics_cells(r.test) << ',' << err << '\n';
  }
  return out.str();
}

nlohmann::json sweep_json(const std::vector<SweepRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json row = {{"N", r.n}, {"ok", r.ok}};
    if (r.ok) {
      row["uncorrected_train"] = metrics_json(r.uncorrected_train);
      row["corrected_train"] = metrics_json(r.corrected_train);
      row["test"] = metrics_json(r.test);
    } else {
      row["error"] = r.error;
    }
    out.push_back(row);
  }
  return out;
}

std::vector<AblationRow> ablation(const Dataset& train, const Dataset& test, const LoopConfig& cfg) {
  const PreparedData data = prepare(train, test, cfg);
  const ViFLabels test_labels =
      make_labels_with_roots(test.positions, cfg.n_levels, data.labels.root_x, data.labels.root_y);
  const VectorXd tx = train.positions.col(0), ty = train.positions.col(1);
  const VectorXd sx = test.positions.col(0), sy = test.positions.col(1);

  LoopConfig base = cfg;
  base.mode = LoopMode::Open;
  base.n_levels = 0;
  const RunReport plain = run_loop(data, base);
  const AxisReport& px = plain.axis(Axis::X);
  const AxisReport& py = plain.axis(Axis::Y);

  std::vector<AblationRow> rows;
  rows.push_back({"Un-EM",
                  combine(rmse(clamp_to(px.train_uncorrected, data.labels.root_x), tx),
                          rmse(clamp_to(py.train_uncorrected, data.labels.root_y), ty)),
                  combine(rmse(clamp_to(px.exploration_test, data.labels.root_x), sx),
                          rmse(clamp_to(py.exploration_test, data.labels.root_y), sy)),
                  true});
  rows.push_back({"Un-EM&Exploitation", plain.train_fit, plain.test, true});

  for (MethodKind m : {MethodKind::Local, MethodKind::Global}) {
    std::array<VectorXd, 2> tr, te;
    for (Axis a : {Axis::X, Axis::Y}) {
      const AxisReport& ax = plain.axis(a);
      const auto i = static_cast<std::size_t>(a);
      const EmSettings em = em_settings(cfg, data.train_windows.cols(), ax.exploration_params);
      tr[i] = clamp_to(run_method(ax.train_uncorrected, data.train_windows, data.labels, a, m, cfg.n_levels, em)
                           .corrected,
                       data.labels.root(a));
      te[i] = clamp_to(run_method(ax.exploration_test, data.test_windows, test_labels, a, m, cfg.n_levels, em)
                           .corrected,
                       data.labels.root(a));
    }
    const std::string suffix = m == MethodKind::Local ? "(L)" : "(G)";
    rows.push_back({"Un-EM&SD" + suffix, combine(rmse(tr[0], tx), rmse(tr[1], ty)),
                    combine(rmse(te[0], sx), rmse(te[1], sy)), false});
  }

  for (MethodKind m : {MethodKind::Local, MethodKind::Global}) {
    LoopConfig full = cfg;
    full.mode = LoopMode::Closed;
    full.method = m;
    const RunReport r = run_loop(data, full);
    rows.push_back({std::string("full") + (m == MethodKind::Local ? "(L)" : "(G)"), r.train_fit, r.test, true});
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out << "row,train_rmse_x,train_rmse_y,train_rmse_xy,test_rmse_x,test_rmse_y,test_rmse_xy,ranked_on\n";
  for (const auto& r : rows) {
    out << r.name << ',' << metrics_cells(r.train) << ',' << metrics_cells(r.test) << ','
        << (r.rank_on_test ? "test" : "train") << '\n';
  }
  return out.str();
}

nlohmann::json ablation_json(const std::vector<AblationRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    out.push_back({{"row", r.name},
                   {"train", metrics_json(r.train)},
                   {"test", metrics_json(r.test)},
                   {"ranked_on", r.rank_on_test ? "test" : "train"}});
  }
  return out;
}

bool ablation_ordering_holds(const std::vector<AblationRow>& rows) {
  auto best = [&rows](const std::string& prefix) {
    double v = std::numeric_limits<double>::infinity();
    bool found = false;
    for (const auto& r : rows) {
      if (r.name == prefix || r.name.rfind(prefix + "(", 0) == 0) {
        v = std::min(v, r.ranked());
        found = true;
      }
    }
    if (!found) throw InputError("ablation row missing: " + prefix);
    return v;
  };
  const double full = best("full");
  const double sd = best("Un-EM&SD");
  const double exploit = best("Un-EM&Exploitation");
  const double un = best("Un-EM");
  return full < sd && sd < exploit && exploit < un;
}

CorrectionEntry correction_entry(const RunReport& r) {
  CorrectionEntry e;
  e.label = to_string(r.config.mode) + (r.config.method == MethodKind::Global ? "(G)" : "(L)");
  e.experiment = r.experiment;
  e.uncorrected_train = r.uncorrected_train.rmse_xy;
  e.corrected_train = r.corrected_train.rmse_xy;
  e.test = r.test.rmse_xy;
  return e;
}

CorrectionEntry correction_entry(const nlohmann::json& report) {
  try {
    CorrectionEntry e;
    const auto& c = report.at("config");
    const std::string method = c.at("method").get<std::string>();
    e.label = c.at("mode").get<std::string>() + (method == "global" ? "(G)" : "(L)");
    e.experiment = report.value("experiment", std::string());
    e.uncorrected_train = report.at("uncorrected_train").at("rmse_xy").get<double>();
    e.corrected_train = report.at("corrected_train").at("rmse_xy").get<double>();
    e.test = report.at("test").at("rmse_xy").get<double>();
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw DataError(std::string("malformed run report: ") + ex.what());
  }
}

std::vector<CorrectionEntry> correction_table(const std::vector<CorrectionEntry>& entries) {
  if (entries.empty()) throw InputError("correction_table: no reports");
  std::vector<std::string> order;
  std::map<std::string, std::vector<CorrectionEntry>> by_label;
  for (const auto& e : entries) {
    if (!by_label.count(e.label)) order.push_back(e.label);
    by_label[e.label].push_back(e);
  }
  std::vector<CorrectionEntry> rows;
  for (const auto& label : order) {
    auto group = by_label[label];
    std::stable_sort(group.begin(), group.end(),
                     [](const auto& a, const auto& b) { return a.experiment < b.experiment; });
    CorrectionEntry mean{label, "(A+B)/2", 0.0, 0.0, 0.0};
    for (const auto& e : group) {
      rows.push_back(e);
      mean.uncorrected_train += e.uncorrected_train;
      mean.corrected_train += e.corrected_train;
      mean.test += e.test;
    }
    const double n = static_cast<double>(group.size());
    mean.uncorrected_train /= n;
    mean.corrected_train /= n;
    mean.test /= n;
    rows.push_back(mean);
  }
  return rows;
}

std::string correction_csv(const std::vector<CorrectionEntry>& rows) {
  std::ostringstream out;
  out << "method,experiment,uncorrected_train_rmse_xy,corrected_train_rmse_xy,test_rmse_xy\n";
  for (const auto& r : rows) {
    out << r.label << ',' << r.experiment << ',' << format_double(r.uncorrected_train) << ','
        << format_double(r.corrected_train) << ',' << format_double(r.test) << '\n';
  }
  return out.str();
}

nlohmann::json correction_json(const std::vector<CorrectionEntry>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    out.push_back({{"method", r.label},
                   {"experiment", r.experiment},
                   {"uncorrected_train_rmse_xy", r.uncorrected_train},
                   {"corrected_train_rmse_xy", r.corrected_train},
                   {"test_rmse_xy", r.test}});
  }
  return out;
}

}  // namespace sd2e
