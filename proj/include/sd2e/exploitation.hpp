#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace sd2e {

/// Look-back stacked inputs: row k = [f_{k-T+1}, ..., f_k], zero-padded
/// before time 0.
struct WindowedDataset {
  Eigen::MatrixXd inputs;
  Eigen::VectorXd targets;
  int lookback = 1;
};

Eigen::MatrixXd build_window_inputs(const Eigen::MatrixXd& features, int lookback);
WindowedDataset build_windows(const Eigen::MatrixXd& features, const Eigen::VectorXd& targets, int lookback);

enum class RegressorKind { Recurrent, Linear };

std::string to_string(RegressorKind k);
RegressorKind parse_regressor_kind(const std::string& s);

struct RegressorConfig {
  RegressorKind kind = RegressorKind::Recurrent;
  int hidden_size = 70;
  int layer_count = 3;
  double learning_rate = 0.02;
  int max_epochs = 1000;
  /// Epochs between training-loss evaluations (and early-stop checks).
  int eval_period = 10;
  /// Evaluations without improvement before stopping; 0 disables.
  int patience = 5;
  /// Truncated back-propagation length along the training sequence.
  int bptt_length = 32;
  double clip_norm = 1.0;
  double ridge_lambda = 1e-3;
  bool standardize = true;
  std::uint64_t seed = 7;

  void validate() const;
};

struct LossPoint {
  int epoch = 0;
  double mse = 0.0;
};

/// Stacked gated recurrent cells (input/forget/output gates, cell state)
/// with a scalar linear read-out. All weights live in one flat vector.
class RecurrentNet {
 public:
  struct State {
    std::vector<Eigen::VectorXd> h;
    std::vector<Eigen::VectorXd> c;
  };

  RecurrentNet() = default;
  RecurrentNet(int input_size, int hidden_size, int layer_count);

  int input_size() const noexcept { return input_size_; }
  int hidden_size() const noexcept { return hidden_size_; }
  int layer_count() const noexcept { return layer_count_; }
  Eigen::Index parameter_count() const noexcept { return params_.size(); }

  const Eigen::VectorXd& parameters() const noexcept { return params_; }
  Eigen::VectorXd& parameters() noexcept { return params_; }

  /// Uniform(-1/sqrt(H), 1/sqrt(H)) weights, forget-gate bias 1.
  void initialize(std::uint64_t seed);

  State zero_state() const;

  /// Run `inputs` (one row per time step) from `state`, which is advanced.
  Eigen::VectorXd forward(const Eigen::MatrixXd& inputs, State& state) const;

  /// Mean squared error over the chunk and its gradient w.r.t. parameters().
  /// `state` is advanced to the end of the chunk; no gradient flows into it.
  double loss_and_gradient(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets, State& state,
                           Eigen::VectorXd& gradient) const;

  /// Offsets of the parameter blocks, for inspection and tests.
  struct Layout {
    Eigen::Index w = 0;  // 4H x in, gate order i, f, g, o
    Eigen::Index u = 0;  // 4H x H
    Eigen::Index b = 0;  // 4H
    int in = 0;
  };
  const std::vector<Layout>& layout() const noexcept { return layout_; }
  Eigen::Index head_offset() const noexcept { return head_; }

 private:
  int input_size_ = 0;
  int hidden_size_ = 0;
  int layer_count_ = 0;
  std::vector<Layout> layout_;
  Eigen::Index head_ = 0;
  Eigen::VectorXd params_;
};

struct TrainedRegressor {
  RegressorConfig config;
  Eigen::Index input_width = 0;
  Eigen::VectorXd input_mean;
  Eigen::VectorXd input_scale;
  double target_mean = 0.0;
  double target_scale = 1.0;
  // linear kind
  Eigen::VectorXd linear_weights;
  double linear_bias = 0.0;
  // recurrent kind
  RecurrentNet net;
  std::vector<LossPoint> loss_curve;
  int epochs_run = 0;
};

TrainedRegressor train(const WindowedDataset& data, const RegressorConfig& cfg);

/// Rows are consumed in order as one sequence starting from a zero state.
Eigen::VectorXd predict(const TrainedRegressor& model, const Eigen::MatrixXd& inputs);

/// Binary parameter file ("SD2E" magic, u16 version, dimension table) plus
/// `<path>.json` holding the configuration.
void save_model(const TrainedRegressor& model, const std::string& path);
TrainedRegressor load_model(const std::string& path);

inline constexpr std::uint16_t kModelFormatVersion = 1;

}  // namespace sd2e
