// sd2e: decode, sweep, ablate and tabulate from the command line.
//
// Exit codes: 0 ok, 2 config, 3 data, 4 numerical, 1 anything else.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "sd2e/config.hpp"
#include "sd2e/dataio.hpp"
#include "sd2e/error.hpp"
#include "sd2e/evaluation.hpp"
#include "sd2e/format.hpp"
#include "sd2e/loop_runner.hpp"

namespace fs = std::filesystem;
using namespace sd2e;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  std::string format = "csv";
};

KeyValueConfig load_config(const Common& c) {
  KeyValueConfig kv;
  if (!c.config_path.empty()) kv = KeyValueConfig::load(c.config_path);
  for (const auto& o : c.overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + o + "'");
    kv.set(o.substr(0, eq), o.substr(eq + 1));
  }
  if (c.seed) kv.set("seed", std::to_string(*c.seed));
  return kv;
}

struct Inputs {
  Dataset train;
  Dataset test;
  std::string experiment;
};

/// Real data when `data1`/`data2` are configured, otherwise a synthetic
/// pair drawn from two seeds.
Inputs load_inputs(const KeyValueConfig& kv) {
  const std::string d1 = kv.get_string("data1", "");
  const std::string d2 = kv.get_string("data2", "");
  const std::string exp = kv.get_string("experiment", "A");
  if (!d1.empty() || !d2.empty()) {
    if (d1.empty() || d2.empty()) throw ConfigError("data1 and data2 must be given together");
    const Experiment which = parse_experiment(exp);
    auto [train, test] = experiment_split(load_csv(d1), load_csv(d2), which);
    // synth keys are irrelevant here but may sit in a shared config file
    synth_config_from(kv);
    return {std::move(train), std::move(test), exp};
  }
  SynthConfig s = synth_config_from(kv);
  Dataset train = generate_synthetic(s).data;
  s.seed += 1000;
  Dataset test = generate_synthetic(s).data;
  train.name = "synthetic-train";
  test.name = "synthetic-test";
  return {std::move(train), std::move(test), "synthetic"};
}

std::string out_path(const Common& c, const std::string& name) { return (fs::path(c.out_dir) / name).string(); }

void emit(const Common& c, const std::string& stem, const std::string& csv, const nlohmann::json& json) {
  if (c.format == "json") {
    write_file_atomic(out_path(c, stem + ".json"), json.dump(2) + "\n");
  } else {
    write_file_atomic(out_path(c, stem + ".csv"), csv);
  }
}

std::string timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

std::string predictions_csv(const Dataset& test, const RunReport& r) {
  std::ostringstream out;
  out << "k,x,y,x_pred,y_pred\n";
  const auto& px = r.axis(Axis::X).test_pred;
  const auto& py = r.axis(Axis::Y).test_pred;
  for (Eigen::Index k = 0; k < test.size(); ++k) {
    out << k << ',' << format_double(test.positions(k, 0)) << ',' << format_double(test.positions(k, 1)) << ','
        << format_double(px(k)) << ',' << format_double(py(k)) << '\n';
  }
  return out.str();
}

std::string metrics_csv(const RunReport& r) {
  std::ostringstream out;
  out << "metric,rmse_x,rmse_y,rmse_xy\n";
  const std::pair<const char*, const Metrics*> rows[] = {{"uncorrected_train", &r.uncorrected_train},
                                                          {"corrected_train", &r.corrected_train},
                                                          {"train_fit", &r.train_fit},
                                                          {"test", &r.test}};
  for (const auto& [name, m] : rows) {
    out << name << ',' << format_double(m->rmse_x) << ',' << format_double(m->rmse_y) << ','
        << format_double(m->rmse_xy) << '\n';
  }
  return out.str();
}

int cmd_decode(const Common& c) {
  const KeyValueConfig kv = load_config(c);
  const LoopConfig cfg = loop_config_from(kv);
  Inputs in = load_inputs(kv);
  kv.check_all_used();
  RunReport r = run_loop(prepare(in.train, in.test, cfg), cfg);
  r.experiment = in.experiment;

  write_file_atomic(out_path(c, "report.json"), report_to_json(r).dump(2) + "\n");
  write_file_atomic(out_path(c, "timing.json"), timing_to_json(r).dump(2) + "\n");
  write_file_atomic(out_path(c, "test_predictions.csv"), predictions_csv(in.test, r));
  if (c.format == "csv") write_file_atomic(out_path(c, "metrics.csv"), metrics_csv(r));
  const std::string run_id = to_string(cfg.mode) + "-" + to_string(cfg.method) + "-N" +
                             std::to_string(cfg.n_levels) + "-seed" + std::to_string(cfg.seed);
  append_ledger(out_path(c, "results_ledger.csv"), r, run_id, timestamp());
  std::cout << metrics_csv(r);
  return 0;
}

int cmd_sweep(const Common& c, int n_max) {
  const KeyValueConfig kv = load_config(c);
  const LoopConfig cfg = loop_config_from(kv);
  const Inputs in = load_inputs(kv);
  kv.check_all_used();
  const auto rows = sweep_n(in.train, in.test, cfg, n_max);
  const std::string csv = sweep_csv(rows);
  emit(c, "sweep_n", csv, sweep_json(rows));
  std::cout << csv;
  return 0;
}

int cmd_ablate(const Common& c) {
  const KeyValueConfig kv = load_config(c);
  const LoopConfig cfg = loop_config_from(kv);
  const Inputs in = load_inputs(kv);
  kv.check_all_used();
  const auto rows = ablation(in.train, in.test, cfg);
  const std::string csv = ablation_csv(rows);
  emit(c, "ablation", csv, ablation_json(rows));
  std::cout << csv << "ordering_holds," << (ablation_ordering_holds(rows) ? "yes" : "no") << '\n';
  return 0;
}

int cmd_robustness(const Common& c, double extent_x, double extent_y, int n_max, bool write) {
  const auto rows = robustness_table(extent_x, extent_y, n_max);
  const std::string csv = robustness_csv(rows);
  if (write) emit(c, "robustness", csv, robustness_json(rows));
  std::cout << csv;
  return 0;
}

int cmd_correction(const Common& c, const std::vector<std::string>& reports) {
  std::vector<CorrectionEntry> entries;
  for (const auto& path : reports) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open report " + path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ": " + e.what());
    }
    entries.push_back(correction_entry(j));
  }
  const auto rows = correction_table(entries);
  const std::string csv = correction_csv(rows);
  emit(c, "correction_table", csv, correction_json(rows));
  std::cout << csv;
  return 0;
}

int cmd_synth(const Common& c) {
  const KeyValueConfig kv = load_config(c);
  SynthConfig s = synth_config_from(kv);
  kv.check_all_used();
  write_csv(out_path(c, "synthetic_d1.csv"), generate_synthetic(s).data);
  s.seed += 1000;
  write_csv(out_path(c, "synthetic_d2.csv"), generate_synthetic(s).data);
  std::cout << out_path(c, "synthetic_d1.csv") << '\n' << out_path(c, "synthetic_d2.csv") << '\n';
  return 0;
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config_path, "key = value config file");
  sub->add_option("--set", c.overrides, "override one config key (key=value), repeatable");
  sub->add_option("--seed", c.seed, "random seed");
  sub->add_option("--out", c.out_dir, "output directory");
  sub->add_option("--format", c.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sd2e: space-division exploration/exploitation decoder"};
  app.require_subcommand(1);
  Common common;

  auto* decode = app.add_subcommand("decode", "one decoding run");
  add_common(decode, common);

  int sweep_max = 8;
  auto* sweep = app.add_subcommand("sweep-n", "error against division depth N");
  add_common(sweep, common);
  sweep->add_option("--n-max", sweep_max, "largest depth")->check(CLI::NonNegativeNumber);

  auto* ablate = app.add_subcommand("ablate", "ablation rows");
  add_common(ablate, common);

  double extent_x = 25.0, extent_y = 15.0;
  int robust_max = 6;
  auto* robust = app.add_subcommand("robustness", "maximum fault tolerance against N");
  add_common(robust, common);
  robust->add_option("--L", extent_x, "x extent");
  robust->add_option("--B", extent_y, "y extent");
  robust->add_option("--n-max", robust_max, "largest depth")->check(CLI::NonNegativeNumber);

  std::vector<std::string> reports;
  auto* correction = app.add_subcommand("correction-table", "train/test correction table from report files");
  add_common(correction, common);
  correction->add_option("reports", reports, "report.json files")->required();

  auto* synth = app.add_subcommand("synth", "write a synthetic dataset pair");
  add_common(synth, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (decode->parsed()) return cmd_decode(common);
    if (sweep->parsed()) return cmd_sweep(common, sweep_max);
    if (ablate->parsed()) return cmd_ablate(common);
    if (robust->parsed()) return cmd_robustness(common, extent_x, extent_y, robust_max, robust->count("--out") > 0);
    if (correction->parsed()) return cmd_correction(common, reports);
    if (synth->parsed()) return cmd_synth(common);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const RangeError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const ParseError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const BoundsError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const InputError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 4;
  } catch (const DegenerateRegressionError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 4;
  } catch (const TrainingError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
