#include "sd2e/config.hpp"

#include <fstream>

#include "sd2e/error.hpp"
#include "sd2e/format.hpp"

namespace sd2e {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::istream& in, const std::string& source) {
  KeyValueConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(source + ":" + std::to_string(line_no) + ": empty key");
    cfg.values_[key] = trim(line.substr(eq + 1));
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  return parse(in, path);
}

const std::string* KeyValueConfig::lookup(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return nullptr;
  used_.insert(key);
  return &it->second;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  const auto* v = lookup(key);
  return v ? *v : fallback;
}

int KeyValueConfig::get_int(const std::string& key, int fallback) const {
  const auto* v = lookup(key);
  if (!v) return fallback;
  try {
    std::size_t pos = 0;
    const int out = std::stoi(*v, &pos);
    if (pos != v->size()) throw std::invalid_argument(*v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected integer, got '" + *v + "'");
  }
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
  const auto* v = lookup(key);
  if (!v) return fallback;
  try {
    std::size_t pos = 0;
    if (!v->empty() && v->front() == '-') throw std::invalid_argument(*v);
    const auto out = std::stoull(*v, &pos);
    if (pos != v->size()) throw std::invalid_argument(*v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected unsigned integer, got '" + *v + "'");
  }
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  const auto* v = lookup(key);
  if (!v) return fallback;
  try {
    return parse_double(*v, key);
  } catch (const ParseError&) {
    throw ConfigError("config key '" + key + "': expected number, got '" + *v + "'");
  }
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  const auto* v = lookup(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "on" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "off" || *v == "no") return false;
  throw ConfigError("config key '" + key + "': expected boolean, got '" + *v + "'");
}

void KeyValueConfig::check_all_used() const {
  std::string unknown;
  for (const auto& [k, v] : values_) {
    if (!used_.count(k)) unknown += (unknown.empty() ? "" : ", ") + k;
  }
  if (!unknown.empty()) throw ConfigError("unknown config keys: " + unknown);
}

LoopConfig loop_config_from(const KeyValueConfig& kv, LoopConfig base) {
  LoopConfig c = std::move(base);
  c.mode = parse_loop_mode(kv.get_string("mode", to_string(c.mode)));
  c.method = parse_method(kv.get_string("method", to_string(c.method)));
  c.denom_variant = parse_denom_variant(kv.get_string("denom_variant", to_string(c.denom_variant)));
  c.regressor.kind = parse_regressor_kind(kv.get_string("kind", to_string(c.regressor.kind)));
  c.n_levels = kv.get_int("n_levels", c.n_levels);
  c.outer_iterations = kv.get_int("outer_iterations", c.outer_iterations);
  c.em_iterations = kv.get_int("em_iterations", c.em_iterations);
  c.lookback = kv.get_int("lookback", c.lookback);
  c.em_init.z0 = kv.get_double("z0", c.em_init.z0);
  c.em_init.p0 = kv.get_double("p0", c.em_init.p0);
  c.em_init.state_noise = kv.get_double("state_noise", c.em_init.state_noise);
  c.em_init.obs_noise = kv.get_double("obs_noise", c.em_init.obs_noise);
  c.em_init.weight = kv.get_double("init_weight", c.em_init.weight);
  c.em_init.offset = kv.get_double("init_offset", c.em_init.offset);
  c.min_group = static_cast<std::size_t>(kv.get_u64("min_group", c.min_group));
  c.warm_start_local = kv.get_bool("warm_start_local", c.warm_start_local);
  c.rebound_per_subspace = kv.get_bool("rebound_per_subspace", c.rebound_per_subspace);
  c.clamp_targets = kv.get_bool("clamp_targets", c.clamp_targets);
  c.seed = kv.get_u64("seed", c.seed);

  auto& r = c.regressor;
  r.hidden_size = kv.get_int("hidden_size", r.hidden_size);
  r.layer_count = kv.get_int("layer_count", r.layer_count);
  r.learning_rate = kv.get_double("learning_rate", r.learning_rate);
  r.max_epochs = kv.get_int("max_epochs", r.max_epochs);
  r.eval_period = kv.get_int("eval_period", r.eval_period);
  r.patience = kv.get_int("patience", r.patience);
  r.bptt_length = kv.get_int("bptt_length", r.bptt_length);
  r.clip_norm = kv.get_double("clip_norm", r.clip_norm);
  r.ridge_lambda = kv.get_double("ridge_lambda", r.ridge_lambda);
  r.standardize = kv.get_bool("standardize", r.standardize);
  c.validate();
  return c;
}

SynthConfig synth_config_from(const KeyValueConfig& kv, SynthConfig base) {
  SynthConfig s = base;
  s.samples = kv.get_int("k", static_cast<int>(s.samples));
  s.feature_dim = kv.get_int("feature_dim", static_cast<int>(s.feature_dim));
  const std::string traj = kv.get_string("trajectory", s.trajectory == Trajectory::Lissajous ? "lissajous"
                                                                                            : "smooth-random-walk");
  if (traj == "lissajous") {
    s.trajectory = Trajectory::Lissajous;
  } else if (traj == "smooth-random-walk") {
    s.trajectory = Trajectory::SmoothRandomWalk;
  } else {
    throw ConfigError("unknown trajectory '" + traj + "'");
  }
  const std::string tuning = kv.get_string("tuning", s.tuning == Tuning::Linear ? "linear" : "cosine");
  if (tuning == "linear") {
    s.tuning = Tuning::Linear;
  } else if (tuning == "cosine") {
    s.tuning = Tuning::Cosine;
  } else {
    throw ConfigError("unknown tuning '" + tuning + "'");
  }
  s.gain_min = kv.get_double("gain_min", s.gain_min);
  s.gain_max = kv.get_double("gain_max", s.gain_max);
  s.baseline = kv.get_double("baseline", s.baseline);
  s.noise_sd = kv.get_double("noise_sd", s.noise_sd);
  s.poisson = kv.get_bool("poisson", s.poisson);
  s.y_tuning_weight = kv.get_double("y_tuning_weight", s.y_tuning_weight);
  s.box_x = kv.get_double("box_x", s.box_x);
  s.box_y = kv.get_double("box_y", s.box_y);
  s.seed = kv.get_u64("seed", s.seed);
  s.tuning_seed = kv.get_u64("tuning_seed", s.tuning_seed);
  s.validate();
  return s;
}

}  // namespace sd2e
