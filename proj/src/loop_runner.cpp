#include "sd2e/loop_runner.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <tuple>

#include "sd2e/error.hpp"
#include "sd2e/format.hpp"

namespace sd2e {

using Eigen::Index;
using Eigen::VectorXd;

std::string to_string(LoopMode m) { return m == LoopMode::Open ? "open" : "closed"; }

LoopMode parse_loop_mode(const std::string& s) {
  if (s == "open" || s == "o") return LoopMode::Open;
  if (s == "closed" || s == "c") return LoopMode::Closed;
  throw ConfigError("unknown loop mode '" + s + "' (expected open|closed)");
}

SSMParams EmInit::expand(Index dim) const {
  SSMParams p;
  p.a = VectorXd::Constant(dim, weight);
  p.mu = VectorXd::Constant(dim, offset);
  p.obs_noise = VectorXd::Constant(dim, obs_noise);
  p.state_noise = state_noise;
  p.z0 = z0;
  p.p0 = p0;
  p.validate();
  return p;
}

void LoopConfig::validate() const {
  if (n_levels < 0) throw ConfigError("n_levels must be >= 0");
  if (outer_iterations < 1) throw ConfigError("outer_iterations must be >= 1");
  if (em_iterations < 1) throw ConfigError("em_iterations must be >= 1");
  if (lookback < 1) throw ConfigError("lookback must be >= 1");
  if (!(em_init.state_noise > 0.0) || !(em_init.p0 > 0.0) || !(em_init.obs_noise > 0.0)) {
    throw ConfigError("state_noise, p0 and obs_noise must be > 0");
  }
  regressor.validate();
}

CostModel cost_report(LoopMode mode, const AxisCounters& counters, const AxisTimings& timings) {
  CostModel c;
  c.mode = mode;
  const int rounds = counters.em_iterations;
  c.t1 = rounds > 0 ? timings.exploration_seconds / rounds : 0.0;
  c.t2 = counters.exploitation_trainings > 0 ? timings.exploitation_seconds / counters.exploitation_trainings : 0.0;
  c.t3 = counters.sd_passes > 0 ? timings.sd_seconds / counters.sd_passes : 0.0;
  if (mode == LoopMode::Open) {
    c.n1 = rounds;
    c.n2 = counters.exploitation_trainings;
    c.n3 = counters.sd_passes;
    c.predicted_total = c.t1 * c.n1 + c.t2 * c.n2 + c.t3 * c.n3;
  } else {
    // per outer round: one exploration iteration, n2 trainings, n3 SD passes
    c.n1 = rounds;
    c.n2 = rounds > 0 ? counters.exploitation_trainings / rounds : 0;
    c.n3 = rounds > 0 ? counters.sd_passes / rounds : 0;
    c.predicted_total = (c.t1 + c.t2 * c.n2 + c.t3 * c.n3) * c.n1;
  }
  c.measured_total = timings.exploration_seconds + timings.exploitation_seconds + timings.sd_seconds;
  c.ratio = c.predicted_total > 0.0 ? c.measured_total / c.predicted_total : 0.0;
  return c;
}

namespace {

using Clock = std::chrono::steady_clock;

double elapsed(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

[[noreturn]] void rethrow_labelled(const std::string& label) {
  try {
    throw;
  } catch (const NumericalError& e) {
    throw NumericalError(label + ": " + e.what());
  } catch (const DegenerateRegressionError& e) {
    throw DegenerateRegressionError(label + ": " + e.what());
  } catch (const TrainingError& e) {
    throw TrainingError(label + ": " + e.what());
  } catch (const InputError& e) {
    throw InputError(label + ": " + e.what());
  }
}

VectorXd clamp_to(const VectorXd& v, const AxisBounds& b) {
  return v.unaryExpr([&b](double z) { return b.clamp(z); });
}

const char* axis_name(Axis a) { return a == Axis::X ? "X" : "Y"; }

RegressorConfig axis_regressor(const LoopConfig& cfg, Axis a) {
  RegressorConfig r = cfg.regressor;
  r.seed = cfg.seed * 2 + static_cast<std::uint64_t>(a);
  return r;
}

void correct(AxisReport& ax, const PreparedData& d, const LoopConfig& cfg, Axis a, const VectorXd& preds,
             const SSMParams& parent) {
  const auto t0 = Clock::now();
  try {
    MethodResult mr = run_method(preds, d.train_windows, d.labels, a, cfg.method, cfg.n_levels,
                                 em_settings(cfg, d.train_windows.cols(), parent));
    ax.train_corrected = std::move(mr.corrected);
    ax.counters.local_em_runs += mr.trace.em_runs;
    ax.trace = std::move(mr.trace);
  } catch (const Error&) {
    rethrow_labelled("space division");
  }
  ax.timings.sd_seconds += elapsed(t0);
  ++ax.counters.sd_passes;
}

void exploit(AxisReport& ax, const PreparedData& d, const LoopConfig& cfg, Axis a) {
  const AxisBounds& root = d.labels.root(a);
  const VectorXd targets = cfg.clamp_targets ? clamp_to(ax.train_corrected, root) : ax.train_corrected;
  const auto t0 = Clock::now();
  try {
    const TrainedRegressor model = train({d.train_windows, targets, cfg.lookback}, axis_regressor(cfg, a));
    ax.train_fit = predict(model, d.train_windows);
    ax.test_pred = predict(model, d.test_windows);
    ax.loss_curve = model.loss_curve;
  } catch (const Error&) {
    rethrow_labelled("exploitation");
  }
  ax.timings.exploitation_seconds += elapsed(t0);
  ++ax.counters.exploitation_trainings;
}

AxisReport open_axis(const PreparedData& d, const LoopConfig& cfg, Axis a) {
  AxisReport ax;
  const SSMParams init = cfg.em_init.expand(d.train_windows.cols());
  const auto t0 = Clock::now();
  EmResult em;
  try {
    em = run_em(d.train_windows, init, cfg.em_iterations, cfg.denom_variant);
  } catch (const Error&) {
    rethrow_labelled("exploration");
  }
  ax.timings.exploration_seconds += elapsed(t0);
  ax.counters.em_iterations = cfg.em_iterations;
  ax.counters.e_steps = em.e_steps;
  ax.counters.m_steps = em.m_steps;
  ax.em_log = em.log;
  ax.train_uncorrected = em.posterior.means;
  ax.exploration_params = em.params;

  correct(ax, d, cfg, a, ax.train_uncorrected, em.params);
  exploit(ax, d, cfg, a);
  ax.exploration_test = e_step(d.test_windows, em.params).means;
  ax.cost = cost_report(LoopMode::Open, ax.counters, ax.timings);
  return ax;
}

AxisReport closed_axis(const PreparedData& d, const LoopConfig& cfg, Axis a) {
  AxisReport ax;
  const Index dim = d.train_windows.cols();
  SSMParams params = cfg.em_init.expand(dim);
  for (int round = 1; round <= cfg.outer_iterations; ++round) {
    const std::string label = "outer iteration " + std::to_string(round);
    try {
      auto t0 = Clock::now();
      const Posterior post = e_step(d.train_windows, params);
      ax.timings.exploration_seconds += elapsed(t0);
      ++ax.counters.e_steps;
      ax.train_uncorrected = post.means;

      correct(ax, d, cfg, a, post.means, params);
      exploit(ax, d, cfg, a);

      // Feedback: exploitation output replaces the posterior means in the
      // weight update; variances come from the e-step above.
      t0 = Clock::now();
      const ObservationWeights w = m_step(d.train_windows, Posterior{ax.train_fit, post.variances, {}},
                                          cfg.denom_variant);
      ++ax.counters.m_steps;
      EmIterationLog entry;
      entry.iteration = round;
      entry.param_delta = std::sqrt((w.a - params.a).squaredNorm() + (w.mu - params.mu).squaredNorm());
      entry.mean_state = post.means.mean();
      entry.sd_state = std::sqrt((post.means.array() - entry.mean_state).square().mean());
      entry.mean_variance = post.variances.mean();
      ax.em_log.push_back(entry);
      params = set_weights(params, w.a, w.mu);
      ++ax.counters.set_weights_calls;
      ax.timings.exploration_seconds += elapsed(t0);
      ++ax.counters.em_iterations;
    } catch (const Error&) {
      rethrow_labelled(label);
    }
  }
  ax.exploration_params = params;
  ax.exploration_test = e_step(d.test_windows, params).means;
  ax.cost = cost_report(LoopMode::Closed, ax.counters, ax.timings);
  return ax;
}

RunReport assemble(const PreparedData& d, const LoopConfig& cfg, AxisReport x, AxisReport y) {
  RunReport r;
  r.config = cfg;
  r.root_x = d.labels.root_x;
  r.root_y = d.labels.root_y;
  const VectorXd tx = d.train.positions.col(0);
  const VectorXd ty = d.train.positions.col(1);
  r.corrected_train = combine(rmse(clamp_to(x.train_corrected, r.root_x), tx),
                              rmse(clamp_to(y.train_corrected, r.root_y), ty));
  r.uncorrected_train = combine(rmse(clamp_to(x.train_uncorrected, r.root_x), tx),
                                rmse(clamp_to(y.train_uncorrected, r.root_y), ty));
  r.train_fit = combine(rmse(x.train_fit, tx), rmse(y.train_fit, ty));
  r.test = combine(rmse(x.test_pred, d.test.positions.col(0)), rmse(y.test_pred, d.test.positions.col(1)));
  for (auto [ax, truth, root] : {std::tuple{&x, &tx, &r.root_x}, std::tuple{&y, &ty, &r.root_y}}) {
    for (const auto& v : ax->trace.level_values) ax->level_rmse.push_back(rmse(clamp_to(v, *root), *truth));
  }
  r.axes = {std::move(x), std::move(y)};
  return r;
}

}  // namespace

EmSettings em_settings(const LoopConfig& cfg, Index dim, const SSMParams& parent) {
  EmSettings s;
  s.init = cfg.em_init.expand(dim);
  s.iterations = cfg.em_iterations;
  s.variant = cfg.denom_variant;
  s.min_group = cfg.min_group;
  s.warm_start_local = cfg.warm_start_local;
  if (cfg.warm_start_local) s.parent_params = parent;
  return s;
}

PreparedData prepare(const Dataset& train, const Dataset& test, const LoopConfig& cfg) {
  train.validate();
  return prepare(train, test, make_labels(train.positions, cfg.n_levels, cfg.rebound_per_subspace), cfg);
}

PreparedData prepare(const Dataset& train, const Dataset& test, const ViFLabels& labels, const LoopConfig& cfg) {
  cfg.validate();
  train.validate();
  test.validate();
  if (train.features.cols() != test.features.cols()) throw DataError("train and test feature widths differ");
  if (labels.sample_count() != static_cast<std::size_t>(train.size())) {
    throw InputError("labels and training set differ in sample count");
  }
  PreparedData d{train, test, build_window_inputs(train.features, cfg.lookback),
                 build_window_inputs(test.features, cfg.lookback), labels};
  return d;
}

RunReport run_open_loop(const PreparedData& data, const LoopConfig& cfg) {
  if (cfg.mode != LoopMode::Open) throw ConfigError("run_open_loop requires mode=open");
  cfg.validate();
  AxisReport x = open_axis(data, cfg, Axis::X);
  AxisReport y = open_axis(data, cfg, Axis::Y);
  return assemble(data, cfg, std::move(x), std::move(y));
}

RunReport run_closed_loop(const PreparedData& data, const LoopConfig& cfg) {
  if (cfg.mode != LoopMode::Closed) throw ConfigError("run_closed_loop requires mode=closed");
  cfg.validate();
  AxisReport x = closed_axis(data, cfg, Axis::X);
  AxisReport y = closed_axis(data, cfg, Axis::Y);
  return assemble(data, cfg, std::move(x), std::move(y));
}

RunReport run_loop(const PreparedData& data, const LoopConfig& cfg) {
  return cfg.mode == LoopMode::Open ? run_open_loop(data, cfg) : run_closed_loop(data, cfg);
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

nlohmann::json metrics_json(const Metrics& m) {
  return {{"rmse_x", m.rmse_x}, {"rmse_y", m.rmse_y}, {"rmse_xy", m.rmse_xy}};
}

nlohmann::json counters_json(const AxisCounters& c) {
  return {{"em_iterations", c.em_iterations},
          {"e_steps", c.e_steps},
          {"m_steps", c.m_steps},
          {"set_weights_calls", c.set_weights_calls},
          {"sd_passes", c.sd_passes},
          {"local_em_runs", c.local_em_runs},
          {"exploitation_trainings", c.exploitation_trainings}};
}

nlohmann::json axis_json(const AxisReport& ax) {
  nlohmann::json levels = nlohmann::json::array();
  for (std::size_t l = 0; l < ax.trace.level_values.size(); ++l) {
    levels.push_back({{"level", l + 1}, {"flips", ax.trace.flips[l]}, {"rmse", ax.level_rmse[l]}});
  }
  nlohmann::json em = nlohmann::json::array();
  for (const auto& e : ax.em_log) em.push_back({{"iteration", e.iteration}, {"param_delta", e.param_delta}});
  nlohmann::json loss = nlohmann::json::array();
  for (const auto& p : ax.loss_curve) loss.push_back({{"epoch", p.epoch}, {"mse", p.mse}});
  return {{"counters", counters_json(ax.counters)},
          {"cost", {{"n1", ax.cost.n1}, {"n2", ax.cost.n2}, {"n3", ax.cost.n3}}},
          {"levels", levels},
          {"degenerate", ax.trace.degenerate.size()},
          {"empty_regions", ax.trace.empty_regions.size()},
          {"local_failures", ax.trace.local_failures.size()},
          {"escaped", ax.trace.escaped.size()},
          {"em_log", em},
          {"loss_curve", loss}};
}

}  // namespace

nlohmann::json config_to_json(const LoopConfig& c) {
  const auto& r = c.regressor;
  return {{"mode", to_string(c.mode)},
          {"method", to_string(c.method)},
          {"n_levels", c.n_levels},
          {"outer_iterations", c.outer_iterations},
          {"em_iterations", c.em_iterations},
          {"lookback", c.lookback},
          {"denom_variant", to_string(c.denom_variant)},
          {"z0", c.em_init.z0},
          {"p0", c.em_init.p0},
          {"state_noise", c.em_init.state_noise},
          {"obs_noise", c.em_init.obs_noise},
          {"init_weight", c.em_init.weight},
          {"init_offset", c.em_init.offset},
          {"min_group", c.min_group},
          {"warm_start_local", c.warm_start_local},
          {"rebound_per_subspace", c.rebound_per_subspace},
          {"clamp_targets", c.clamp_targets},
          {"seed", c.seed},
          {"regressor",
           {{"kind", to_string(r.kind)},
            {"hidden_size", r.hidden_size},
            {"layer_count", r.layer_count},
            {"learning_rate", r.learning_rate},
            {"max_epochs", r.max_epochs},
            {"eval_period", r.eval_period},
            {"patience", r.patience},
            {"bptt_length", r.bptt_length},
            {"clip_norm", r.clip_norm},
            {"ridge_lambda", r.ridge_lambda},
            {"standardize", r.standardize}}}};
}

nlohmann::json report_to_json(const RunReport& r) {
  return {{"config", config_to_json(r.config)},
          {"experiment", r.experiment},
          {"seed", r.config.seed},
          {"root_x", {r.root_x.min(), r.root_x.max()}},
          {"root_y", {r.root_y.min(), r.root_y.max()}},
          {"corrected_train", metrics_json(r.corrected_train)},
          {"uncorrected_train", metrics_json(r.uncorrected_train)},
          {"train_fit", metrics_json(r.train_fit)},
          {"test", metrics_json(r.test)},
          {"axes", {{"X", axis_json(r.axis(Axis::X))}, {"Y", axis_json(r.axis(Axis::Y))}}}};
}

nlohmann::json timing_to_json(const RunReport& r) {
  nlohmann::json out = nlohmann::json::object();
  for (Axis a : {Axis::X, Axis::Y}) {
    const auto& c = r.axis(a).cost;
    out[axis_name(a)] = {{"mode", to_string(c.mode)}, {"n1", c.n1}, {"n2", c.n2},   {"n3", c.n3},
                         {"t1", c.t1},                {"t2", c.t2}, {"t3", c.t3},
                         {"predicted_total", c.predicted_total},
                         {"measured_total", c.measured_total},
                         {"measured_over_predicted", c.ratio}};
  }
  return out;
}

std::string ledger_header() {
  return "run_id,timestamp,mode,method,N,n1,"
         "train_corr_rmse_x,train_corr_rmse_y,train_corr_rmse_xy,"
         "train_uncorr_rmse_x,train_uncorr_rmse_y,train_uncorr_rmse_xy,"
         "test_rmse_x,test_rmse_y,test_rmse_xy,t1,t2,t3";
}

std::string ledger_row(const RunReport& r, const std::string& run_id, const std::string& timestamp) {
  std::ostringstream out;
  const auto& c = r.config;
  const int n1 = c.mode == LoopMode::Closed ? c.outer_iterations : c.em_iterations;
  out << run_id << ',' << timestamp << ',' << to_string(c.mode) << ',' << to_string(c.method) << ','
      << c.n_levels << ',' << n1;
  for (const Metrics* m : {&r.corrected_train, &r.uncorrected_train, &r.test}) {
    out << ',' << format_double(m->rmse_x) << ',' << format_double(m->rmse_y) << ',' << format_double(m->rmse_xy);
  }
  const auto& cx = r.axis(Axis::X).cost;
  const auto& cy = r.axis(Axis::Y).cost;
  out << ',' << format_double((cx.t1 + cy.t1) / 2) << ',' << format_double((cx.t2 + cy.t2) / 2) << ','
      << format_double((cx.t3 + cy.t3) / 2);
  return out.str();
}

void append_ledger(const std::string& path, const RunReport& r, const std::string& run_id,
                   const std::string& timestamp) {
  const bool fresh = !std::filesystem::exists(path);
  std::ofstream out(path, std::ios::app | std::ios::binary);
  if (!out) throw DataError("cannot open results ledger " + path);
  if (fresh) out << ledger_header() << '\n';
  out << ledger_row(r, run_id, timestamp) << '\n';
}

}  // namespace sd2e
