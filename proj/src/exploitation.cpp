#include "sd2e/exploitation.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "json.hpp"

#include "sd2e/error.hpp"
#include "sd2e/format.hpp"

namespace sd2e {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

Eigen::MatrixXd build_window_inputs(const Eigen::MatrixXd& features, int lookback) {
  if (lookback < 1) throw InputError("build_windows: lookback must be >= 1");
  if (lookback > features.rows()) {
    throw InputError("build_windows: lookback " + std::to_string(lookback) + " exceeds sample count " +
                     std::to_string(features.rows()));
  }
  const Index k_len = features.rows();
  const Index f = features.cols();
  MatrixXd out = MatrixXd::Zero(k_len, f * lookback);
  for (Index k = 0; k < k_len; ++k) {
    for (int s = 0; s < lookback; ++s) {
      const Index src = k - (lookback - 1) + s;
      if (src >= 0) out.block(k, s * f, 1, f) = features.row(src);
    }
  }
  return out;
}

WindowedDataset build_windows(const Eigen::MatrixXd& features, const Eigen::VectorXd& targets, int lookback) {
  if (targets.size() != features.rows()) throw InputError("build_windows: targets length != sample count");
  return {build_window_inputs(features, lookback), targets, lookback};
}

std::string to_string(RegressorKind k) { return k == RegressorKind::Recurrent ? "recurrent" : "linear"; }

RegressorKind parse_regressor_kind(const std::string& s) {
  if (s == "recurrent" || s == "lstm") return RegressorKind::Recurrent;
  if (s == "linear") return RegressorKind::Linear;
  throw ConfigError("unknown regressor kind '" + s + "' (expected recurrent|linear)");
}

void RegressorConfig::validate() const {
  if (hidden_size < 1) throw ConfigError("regressor: hidden_size must be >= 1");
  if (layer_count < 1) throw ConfigError("regressor: layer_count must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("regressor: learning_rate must be > 0");
  if (max_epochs < 1) throw ConfigError("regressor: max_epochs must be >= 1");
  if (eval_period < 1) throw ConfigError("regressor: eval_period must be >= 1");
  if (bptt_length < 1) throw ConfigError("regressor: bptt_length must be >= 1");
  if (patience < 0) throw ConfigError("regressor: patience must be >= 0");
  if (!(clip_norm > 0.0)) throw ConfigError("regressor: clip_norm must be > 0");
  if (ridge_lambda < 0.0) throw ConfigError("regressor: ridge_lambda must be >= 0");
}

// ---------------------------------------------------------------------------
// Recurrent network

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct LayerCache {
  MatrixXd x;       // in x len
  MatrixXd gates;   // 4H x len, post-activation (i, f, g, o)
  MatrixXd c;       // H x len
  MatrixXd tanh_c;  // H x len
  MatrixXd h;       // H x len
  VectorXd h0;
  VectorXd c0;
};

}  // namespace

RecurrentNet::RecurrentNet(int input_size, int hidden_size, int layer_count)
    : input_size_(input_size), hidden_size_(hidden_size), layer_count_(layer_count) {
  if (input_size < 1 || hidden_size < 1 || layer_count < 1) throw InputError("RecurrentNet: sizes must be >= 1");
  Index offset = 0;
  const Index g = 4 * static_cast<Index>(hidden_size);
  for (int l = 0; l < layer_count; ++l) {
    Layout lay;
    lay.in = l == 0 ? input_size : hidden_size;
    lay.w = offset;
    offset += g * lay.in;
    lay.u = offset;
    offset += g * hidden_size;
    lay.b = offset;
    offset += g;
    layout_.push_back(lay);
  }
  head_ = offset;
  offset += hidden_size + 1;
  params_ = VectorXd::Zero(offset);
}

void RecurrentNet::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const double r = 1.0 / std::sqrt(static_cast<double>(hidden_size_));
  std::uniform_real_distribution<double> dist(-r, r);
  for (Index i = 0; i < params_.size(); ++i) params_[i] = dist(rng);
  const Index hs = hidden_size_;
  for (const auto& lay : layout_) params_.segment(lay.b + hs, hs).setConstant(1.0);
}

RecurrentNet::State RecurrentNet::zero_state() const {
  State s;
  for (int l = 0; l < layer_count_; ++l) {
    s.h.push_back(VectorXd::Zero(hidden_size_));
    s.c.push_back(VectorXd::Zero(hidden_size_));
  }
  return s;
}

namespace {

template <typename Params>
void layer_forward(const Params& params, const RecurrentNet::Layout& lay, Index hs, const MatrixXd& x,
                   VectorXd& h, VectorXd& c, LayerCache* cache, MatrixXd& h_out) {
  const Index len = x.cols();
  const Index g4 = 4 * hs;
  Eigen::Map<const MatrixXd> w(params.data() + lay.w, g4, lay.in);
  Eigen::Map<const MatrixXd> u(params.data() + lay.u, g4, hs);
  Eigen::Map<const VectorXd> b(params.data() + lay.b, g4);

  MatrixXd z = w * x;
  z.colwise() += b;
  h_out.resize(hs, len);
  if (cache) {
    cache->x = x;
    cache->h0 = h;
    cache->c0 = c;
    cache->gates.resize(g4, len);
    cache->c.resize(hs, len);
    cache->tanh_c.resize(hs, len);
  }
  VectorXd pre(g4);
  for (Index t = 0; t < len; ++t) {
    pre.noalias() = z.col(t) + u * h;
    for (Index j = 0; j < hs; ++j) {
      const double ig = sigmoid(pre[j]);
      const double fg = sigmoid(pre[hs + j]);
      const double gg = std::tanh(pre[2 * hs + j]);
      const double og = sigmoid(pre[3 * hs + j]);
      c[j] = fg * c[j] + ig * gg;
      const double tc = std::tanh(c[j]);
      h[j] = og * tc;
      if (cache) {
        cache->gates(j, t) = ig;
        cache->gates(hs + j, t) = fg;
        cache->gates(2 * hs + j, t) = gg;
        cache->gates(3 * hs + j, t) = og;
        cache->c(j, t) = c[j];
        cache->tanh_c(j, t) = tc;
      }
    }
    h_out.col(t) = h;
  }
  if (cache) cache->h = h_out;
}

}  // namespace

Eigen::VectorXd RecurrentNet::forward(const Eigen::MatrixXd& inputs, State& state) const {
  if (inputs.cols() != input_size_) throw InputError("RecurrentNet::forward: input width mismatch");
  MatrixXd x = inputs.transpose();
  MatrixXd h_out;
  for (int l = 0; l < layer_count_; ++l) {
    layer_forward(params_, layout_[static_cast<std::size_t>(l)], hidden_size_, x, state.h[l], state.c[l], nullptr,
                  h_out);
    x.swap(h_out);
  }
  Eigen::Map<const VectorXd> w_out(params_.data() + head_, hidden_size_);
  const double b_out = params_[head_ + hidden_size_];
  VectorXd y = x.transpose() * w_out;
  y.array() += b_out;
  return y;
}

double RecurrentNet::loss_and_gradient(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets, State& state,
                                       Eigen::VectorXd& gradient) const {
  if (inputs.cols() != input_size_) throw InputError("RecurrentNet: input width mismatch");
  if (targets.size() != inputs.rows()) throw InputError("RecurrentNet: targets length mismatch");
  const Index len = inputs.rows();
  const Index hs = hidden_size_;
  const Index g4 = 4 * hs;

  std::vector<LayerCache> caches(static_cast<std::size_t>(layer_count_));
  MatrixXd x = inputs.transpose();
  MatrixXd h_out;
  for (int l = 0; l < layer_count_; ++l) {
    layer_forward(params_, layout_[static_cast<std::size_t>(l)], hs, x, state.h[l], state.c[l],
                  &caches[static_cast<std::size_t>(l)], h_out);
    x.swap(h_out);
  }
  Eigen::Map<const VectorXd> w_out(params_.data() + head_, hs);
  const double b_out = params_[head_ + hs];
  VectorXd y = x.transpose() * w_out;
  y.array() += b_out;
  const VectorXd err = y - targets;
  const double loss = err.squaredNorm() / static_cast<double>(len);

  gradient.setZero(params_.size());
  const VectorXd dy = 2.0 * err / static_cast<double>(len);
  gradient.segment(head_, hs) = x * dy;
  gradient[head_ + hs] = dy.sum();

  // dh from the layer above (or the read-out), one column per step
  MatrixXd dh_above = w_out * dy.transpose();
  for (int l = layer_count_ - 1; l >= 0; --l) {
    const auto& lay = layout_[static_cast<std::size_t>(l)];
    const auto& cc = caches[static_cast<std::size_t>(l)];
    Eigen::Map<const MatrixXd> w(params_.data() + lay.w, g4, lay.in);
    Eigen::Map<const MatrixXd> u(params_.data() + lay.u, g4, hs);
    Eigen::Map<MatrixXd> dw(gradient.data() + lay.w, g4, lay.in);
    Eigen::Map<MatrixXd> du(gradient.data() + lay.u, g4, hs);
    Eigen::Map<VectorXd> db(gradient.data() + lay.b, g4);

    MatrixXd dz(g4, len);
    VectorXd dh_next = VectorXd::Zero(hs);
    VectorXd dc_next = VectorXd::Zero(hs);
    for (Index t = len - 1; t >= 0; --t) {
      for (Index j = 0; j < hs; ++j) {
        const double ig = cc.gates(j, t);
        const double fg = cc.gates(hs + j, t);
        const double gg = cc.gates(2 * hs + j, t);
        const double og = cc.gates(3 * hs + j, t);
        const double tc = cc.tanh_c(j, t);
        const double c_prev = t > 0 ? cc.c(j, t - 1) : cc.c0[j];
        const double dh = dh_above(j, t) + dh_next[j];
        const double dc = dh * og * (1.0 - tc * tc) + dc_next[j];
        dz(j, t) = dc * gg * ig * (1.0 - ig);
        dz(hs + j, t) = dc * c_prev * fg * (1.0 - fg);
        dz(2 * hs + j, t) = dc * ig * (1.0 - gg * gg);
        dz(3 * hs + j, t) = dh * tc * og * (1.0 - og);
        dc_next[j] = dc * fg;
      }
      dh_next.noalias() = u.transpose() * dz.col(t);
      if (t > 0) {
        du.noalias() += dz.col(t) * cc.h.col(t - 1).transpose();
      } else {
        du.noalias() += dz.col(t) * cc.h0.transpose();
      }
    }
    dw.noalias() += dz * cc.x.transpose();
    db += dz.rowwise().sum();
    if (l > 0) dh_above = w.transpose() * dz;
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Training

namespace {

void fit_standardizer(const MatrixXd& x, bool enabled, VectorXd& mean, VectorXd& scale) {
  const Index w = x.cols();
  mean = VectorXd::Zero(w);
  scale = VectorXd::Ones(w);
  if (!enabled || x.rows() == 0) return;
  mean = x.colwise().mean().transpose();
  for (Index j = 0; j < w; ++j) {
    const double var = (x.col(j).array() - mean[j]).square().mean();
    scale[j] = var > 1e-24 ? std::sqrt(var) : 1.0;
  }
}

MatrixXd apply_standardizer(const TrainedRegressor& m, const MatrixXd& x) {
  return (x.rowwise() - m.input_mean.transpose()).array().rowwise() / m.input_scale.transpose().array();
}

double sequence_mse(const RecurrentNet& net, const MatrixXd& x, const VectorXd& y_std, double target_scale) {
  auto state = net.zero_state();
  const VectorXd pred = net.forward(x, state);
  return (pred - y_std).squaredNorm() / static_cast<double>(y_std.size()) * target_scale * target_scale;
}

void train_linear(TrainedRegressor& m, const MatrixXd& x, const VectorXd& y) {
  const double k = static_cast<double>(x.rows());
  const VectorXd x_mean = x.colwise().mean().transpose();
  const double y_mean = y.mean();
  const MatrixXd xc = x.rowwise() - x_mean.transpose();
  MatrixXd gram = xc.transpose() * xc;
  gram.diagonal().array() += m.config.ridge_lambda;
  const VectorXd rhs = xc.transpose() * (y.array() - y_mean).matrix();
  m.linear_weights = gram.ldlt().solve(rhs);
  if (!m.linear_weights.allFinite()) throw TrainingError("linear regressor: singular normal equations");
  m.linear_bias = y_mean - x_mean.dot(m.linear_weights);
  const double base = (y.array() - y_mean).square().sum() / k;
  const VectorXd fit = x * m.linear_weights + VectorXd::Constant(x.rows(), m.linear_bias);
  const double final = (fit - y).squaredNorm() / k;
  m.loss_curve = {{0, base * m.target_scale * m.target_scale}, {1, final * m.target_scale * m.target_scale}};
  m.epochs_run = 1;
}

void train_recurrent(TrainedRegressor& m, const MatrixXd& x, const VectorXd& y) {
  const auto& cfg = m.config;
  m.net = RecurrentNet(static_cast<int>(x.cols()), cfg.hidden_size, cfg.layer_count);
  m.net.initialize(cfg.seed);

  const Index k_len = x.rows();
  VectorXd best = m.net.parameters();
  double best_loss = sequence_mse(m.net, x, y, m.target_scale);
  m.loss_curve.push_back({0, best_loss});
  int stale = 0;

  VectorXd grad;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    auto state = m.net.zero_state();
    for (Index start = 0; start < k_len; start += cfg.bptt_length) {
      const Index len = std::min<Index>(cfg.bptt_length, k_len - start);
      const double loss =
          m.net.loss_and_gradient(x.middleRows(start, len), y.segment(start, len), state, grad);
      if (!std::isfinite(loss) || !grad.allFinite()) {
        throw TrainingError("recurrent regressor diverged at epoch " + std::to_string(epoch));
      }
      const double norm = grad.norm();
      if (norm > cfg.clip_norm) grad *= cfg.clip_norm / norm;
      m.net.parameters() -= cfg.learning_rate * grad;
    }
    m.epochs_run = epoch;

    if (epoch % cfg.eval_period == 0 || epoch == cfg.max_epochs) {
      const double mse = sequence_mse(m.net, x, y, m.target_scale);
      if (!std::isfinite(mse)) throw TrainingError("recurrent regressor diverged at epoch " + std::to_string(epoch));
      m.loss_curve.push_back({epoch, mse});
      if (mse < best_loss * (1.0 - 1e-6)) {
        best_loss = mse;
        best = m.net.parameters();
        stale = 0;
      } else if (cfg.patience > 0 && ++stale >= cfg.patience) {
        break;
      }
    }
  }
  m.net.parameters() = best;
}

}  // namespace

TrainedRegressor train(const WindowedDataset& data, const RegressorConfig& cfg) {
  cfg.validate();
  if (data.inputs.rows() == 0) throw InputError("train: empty dataset");
  if (data.targets.size() != data.inputs.rows()) throw InputError("train: targets length != row count");
  if (!data.targets.allFinite()) throw InputError("train: non-finite target");
  if (!data.inputs.allFinite()) throw InputError("train: non-finite input");

  TrainedRegressor m;
  m.config = cfg;
  m.input_width = data.inputs.cols();
  fit_standardizer(data.inputs, cfg.standardize, m.input_mean, m.input_scale);
  if (cfg.standardize) {
    m.target_mean = data.targets.mean();
    const double var = (data.targets.array() - m.target_mean).square().mean();
    m.target_scale = var > 1e-24 ? std::sqrt(var) : 1.0;
  }
  const MatrixXd x = apply_standardizer(m, data.inputs);
  const VectorXd y = (data.targets.array() - m.target_mean) / m.target_scale;

  if (cfg.kind == RegressorKind::Linear) {
    train_linear(m, x, y);
  } else {
    train_recurrent(m, x, y);
  }
  return m;
}

Eigen::VectorXd predict(const TrainedRegressor& model, const Eigen::MatrixXd& inputs) {
  if (inputs.rows() == 0) return VectorXd(0);
  if (inputs.cols() != model.input_width) {
    throw InputError("predict: input width " + std::to_string(inputs.cols()) + " != trained width " +
                     std::to_string(model.input_width));
  }
  const MatrixXd x = apply_standardizer(model, inputs);
  VectorXd y;
  if (model.config.kind == RegressorKind::Linear) {
    y = x * model.linear_weights;
    y.array() += model.linear_bias;
  } else {
    auto state = model.net.zero_state();
    y = model.net.forward(x, state);
  }
  return (y.array() * model.target_scale + model.target_mean).matrix();
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

constexpr char kMagic[4] = {'S', 'D', '2', 'E'};

nlohmann::json config_to_json(const RegressorConfig& c) {
  return {{"kind", to_string(c.kind)},       {"hidden_size", c.hidden_size},
          {"layer_count", c.layer_count},    {"learning_rate", c.learning_rate},
          {"max_epochs", c.max_epochs},      {"eval_period", c.eval_period},
          {"patience", c.patience},          {"bptt_length", c.bptt_length},
          {"clip_norm", c.clip_norm},        {"ridge_lambda", c.ridge_lambda},
          {"standardize", c.standardize},    {"seed", c.seed}};
}

RegressorConfig config_from_json(const nlohmann::json& j) {
  RegressorConfig c;
  c.kind = parse_regressor_kind(j.at("kind").get<std::string>());
  c.hidden_size = j.at("hidden_size").get<int>();
  c.layer_count = j.at("layer_count").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.max_epochs = j.at("max_epochs").get<int>();
  c.eval_period = j.at("eval_period").get<int>();
  c.patience = j.at("patience").get<int>();
  c.bptt_length = j.at("bptt_length").get<int>();
  c.clip_norm = j.at("clip_norm").get<double>();
  c.ridge_lambda = j.at("ridge_lambda").get<double>();
  c.standardize = j.at("standardize").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

template <typename T>
void put(std::string& out, const T& v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw DataError(path + ": truncated model file");
  return v;
}

void put_vector(std::string& out, const VectorXd& v) {
  out.append(reinterpret_cast<const char*>(v.data()), static_cast<std::size_t>(v.size()) * sizeof(double));
}

VectorXd get_vector(std::istream& in, Index n, const std::string& path) {
  VectorXd v(n);
  if (!in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)))) {
    throw DataError(path + ": truncated model file");
  }
  return v;
}

}  // namespace

void save_model(const TrainedRegressor& model, const std::string& path) {
  const bool linear = model.config.kind == RegressorKind::Linear;
  const VectorXd& weights = linear ? model.linear_weights : model.net.parameters();
  std::string out(kMagic, 4);
  put<std::uint16_t>(out, kModelFormatVersion);
  put<std::uint16_t>(out, linear ? 1 : 0);
  // dimension table: input width, hidden size, layer count, weight count
  const std::uint64_t dims[4] = {static_cast<std::uint64_t>(model.input_width),
                                 static_cast<std::uint64_t>(linear ? 0 : model.net.hidden_size()),
                                 static_cast<std::uint64_t>(linear ? 0 : model.net.layer_count()),
                                 static_cast<std::uint64_t>(weights.size())};
  put<std::uint32_t>(out, 4);
  for (auto d : dims) put(out, d);
  put_vector(out, model.input_mean);
  put_vector(out, model.input_scale);
  put(out, model.target_mean);
  put(out, model.target_scale);
  put(out, model.linear_bias);
  put_vector(out, weights);
  write_file_atomic(path, out);

  nlohmann::json sidecar = {{"format_version", kModelFormatVersion}, {"config", config_to_json(model.config)},
                            {"epochs_run", model.epochs_run}};
  write_file_atomic(path + ".json", sidecar.dump(2) + "\n");
}

TrainedRegressor load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw DataError(path + ": bad magic");
  const auto version = get<std::uint16_t>(in, path);
  if (version != kModelFormatVersion) throw DataError(path + ": unsupported format version " + std::to_string(version));
  const auto kind = get<std::uint16_t>(in, path);
  const auto ndims = get<std::uint32_t>(in, path);
  if (ndims != 4) throw DataError(path + ": unexpected dimension table size");
  std::uint64_t dims[4];
  for (auto& d : dims) d = get<std::uint64_t>(in, path);

  std::ifstream side(path + ".json");
  if (!side) throw DataError("missing config sidecar " + path + ".json");
  nlohmann::json j;
  try {
    side >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ".json: " + e.what());
  }

  TrainedRegressor m;
  m.config = config_from_json(j.at("config"));
  m.epochs_run = j.value("epochs_run", 0);
  if ((kind == 1) != (m.config.kind == RegressorKind::Linear)) throw DataError(path + ": kind disagrees with sidecar");
  m.input_width = static_cast<Index>(dims[0]);
  m.input_mean = get_vector(in, m.input_width, path);
  m.input_scale = get_vector(in, m.input_width, path);
  m.target_mean = get<double>(in, path);
  m.target_scale = get<double>(in, path);
  m.linear_bias = get<double>(in, path);
  VectorXd weights = get_vector(in, static_cast<Index>(dims[3]), path);
  if (kind == 1) {
    m.linear_weights = std::move(weights);
  } else {
    m.net = RecurrentNet(static_cast<int>(dims[0]), static_cast<int>(dims[1]), static_cast<int>(dims[2]));
    if (m.net.parameter_count() != weights.size()) throw DataError(path + ": weight count mismatch");
    m.net.parameters() = std::move(weights);
  }
  return m;
}

}  // namespace sd2e
