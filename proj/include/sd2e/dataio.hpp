#pragma once

#include <cstdint>
#include <string>
#include <utility>

#include <Eigen/Dense>

namespace sd2e {

inline constexpr Eigen::Index kNeuralChannels = 42;

/// Binned spike-count features paired with 2-D positions.
struct Dataset {
  Eigen::MatrixXd features;   // K x F
  Eigen::MatrixXd positions;  // K x 2 (x, y)
  std::string name;

  Eigen::Index size() const noexcept { return features.rows(); }
  /// Throws DataError when row counts differ or entries are non-finite.
  void validate() const;
};

/// Canonical CSV: header `f0,...,f{F-1},x,y`, one sample per line.
Dataset load_csv(const std::string& path, Eigen::Index feature_count = kNeuralChannels);
std::string to_csv(const Dataset& d);
void write_csv(const std::string& path, const Dataset& d);

enum class Experiment { A, B };
Experiment parse_experiment(const std::string& s);

/// A: train on d1, test on d2. B: swapped.
std::pair<Dataset, Dataset> experiment_split(const Dataset& d1, const Dataset& d2, Experiment which);

/// FNV-1a over the raw bytes of both matrices.
std::uint64_t content_hash(const Dataset& d);

enum class Trajectory { SmoothRandomWalk, Lissajous };
enum class Tuning { Cosine, Linear };

struct SynthConfig {
  Eigen::Index samples = 1000;
  Eigen::Index feature_dim = kNeuralChannels;
  Trajectory trajectory = Trajectory::SmoothRandomWalk;
  Tuning tuning = Tuning::Cosine;
  double gain_min = 1.0;
  double gain_max = 3.0;
  double baseline = 2.0;
  double noise_sd = 0.5;
  bool poisson = false;
  /// Scales the y component of each channel's tuning; 0 leaves channels
  /// driven by x alone.
  double y_tuning_weight = 1.0;
  double box_x = 25.0;
  double box_y = 15.0;
  /// Trajectory and noise.
  std::uint64_t seed = 1;
  /// Channel directions and gains; datasets sharing it come from the same
  /// simulated population.
  std::uint64_t tuning_seed = 1;

  void validate() const;
};

struct SynthData {
  Dataset data;
  Eigen::MatrixXd truth;  // K x 2, identical to data.positions
};

SynthData generate_synthetic(const SynthConfig& cfg);

}  // namespace sd2e
