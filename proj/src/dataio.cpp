#include "sd2e/dataio.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <vector>

#include "sd2e/error.hpp"
#include "sd2e/format.hpp"

namespace sd2e {

void Dataset::validate() const {
  if (features.rows() != positions.rows()) throw DataError(name + ": feature and position row counts differ");
  if (features.rows() < 1) throw DataError(name + ": empty dataset");
  if (positions.cols() != 2) throw DataError(name + ": positions must have 2 columns");
  if (!features.allFinite() || !positions.allFinite()) throw DataError(name + ": non-finite entry");
}

Dataset load_csv(const std::string& path, Eigen::Index feature_count) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);

  const auto columns = static_cast<std::size_t>(feature_count + 2);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ":1: missing header");
  {
    std::size_t commas = 0;
    for (char c : line) commas += c == ',';
    if (commas + 1 != columns) {
      throw ParseError(path + ":1: header has " + std::to_string(commas + 1) + " columns, expected " +
                       std::to_string(columns));
    }
  }

  std::vector<double> values;
  std::size_t line_no = 1;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::size_t fields = 0;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      const std::string_view cell =
          std::string_view(line).substr(start, comma == std::string::npos ? std::string::npos : comma - start);
      if (fields >= columns) {
        throw ParseError(path + ":" + std::to_string(line_no) + ": too many columns (expected " +
                         std::to_string(columns) + ")");
      }
      double v = 0.0;
      try {
        v = parse_double(cell, "value");
      } catch (const ParseError& e) {
        throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
      }
      if (!std::isfinite(v)) throw DataError(path + ":" + std::to_string(line_no) + ": non-finite value");
      values.push_back(v);
      ++fields;
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (fields != columns) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": " + std::to_string(fields) +
                       " columns, expected " + std::to_string(columns));
    }
    ++rows;
  }
  if (rows == 0) throw DataError(path + ": no samples");

  Dataset d;
  d.name = path;
  const auto k = static_cast<Eigen::Index>(rows);
  d.features.resize(k, feature_count);
  d.positions.resize(k, 2);
  for (Eigen::Index r = 0; r < k; ++r) {
    const double* row = values.data() + static_cast<std::size_t>(r) * columns;
    for (Eigen::Index c = 0; c < feature_count; ++c) d.features(r, c) = row[c];
    d.positions(r, 0) = row[feature_count];
    d.positions(r, 1) = row[feature_count + 1];
  }
  return d;
}

std::string to_csv(const Dataset& d) {
  d.validate();
  std::ostringstream out;
  for (Eigen::Index c = 0; c < d.features.cols(); ++c) out << 'f' << c << ',';
  out << "x,y\n";
  for (Eigen::Index r = 0; r < d.size(); ++r) {
    for (Eigen::Index c = 0; c < d.features.cols(); ++c) out << format_double(d.features(r, c)) << ',';
    out << format_double(d.positions(r, 0)) << ',' << format_double(d.positions(r, 1)) << '\n';
  }
  return out.str();
}

void write_csv(const std::string& path, const Dataset& d) { write_file_atomic(path, to_csv(d)); }

Experiment parse_experiment(const std::string& s) {
  if (s == "A" || s == "a") return Experiment::A;
  if (s == "B" || s == "b") return Experiment::B;
  throw ConfigError("unknown experiment '" + s + "' (expected A|B)");
}

std::pair<Dataset, Dataset> experiment_split(const Dataset& d1, const Dataset& d2, Experiment which) {
  d1.validate();
  d2.validate();
  if (which == Experiment::A) return {d1, d2};
  return {d2, d1};
}

std::uint64_t content_hash(const Dataset& d) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const double* p, Eigen::Index n) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < static_cast<std::size_t>(n) * sizeof(double); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  };
  mix(d.features.data(), d.features.size());
  mix(d.positions.data(), d.positions.size());
  return h;
}

void SynthConfig::validate() const {
  if (samples < 2) throw ConfigError("synth: samples must be >= 2");
  if (feature_dim < 1) throw ConfigError("synth: feature_dim must be >= 1");
  if (noise_sd < 0.0) throw ConfigError("synth: noise_sd must be >= 0");
  if (!(gain_min <= gain_max)) throw ConfigError("synth: gain_min must be <= gain_max");
  if (!(box_x > 0.0) || !(box_y > 0.0)) throw ConfigError("synth: box extents must be > 0");
}

namespace {

Eigen::MatrixXd random_walk(const SynthConfig& cfg, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const double box[2] = {cfg.box_x, cfg.box_y};
  Eigen::MatrixXd z(cfg.samples, 2);
  double pos[2] = {cfg.box_x / 2.0, cfg.box_y / 2.0};
  double vel[2] = {0.0, 0.0};
  for (Eigen::Index k = 0; k < cfg.samples; ++k) {
    for (int a = 0; a < 2; ++a) {
      vel[a] = 0.9 * vel[a] + 0.35 * normal(rng);
      pos[a] += vel[a];
      // reflective walls
      while (pos[a] < 0.0 || pos[a] > box[a]) {
        if (pos[a] < 0.0) pos[a] = -pos[a];
        if (pos[a] > box[a]) pos[a] = 2.0 * box[a] - pos[a];
        vel[a] = -vel[a];
      }
      z(k, a) = pos[a];
    }
  }
  return z;
}

Eigen::MatrixXd lissajous(const SynthConfig& cfg, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  const double px = phase(rng);
  const double py = phase(rng);
  Eigen::MatrixXd z(cfg.samples, 2);
  for (Eigen::Index k = 0; k < cfg.samples; ++k) {
    const double t = static_cast<double>(k);
    z(k, 0) = cfg.box_x * (0.5 + 0.45 * std::sin(2.0 * std::numbers::pi * t / 173.0 + px));
    z(k, 1) = cfg.box_y * (0.5 + 0.45 * std::sin(2.0 * std::numbers::pi * t / 131.0 + py));
  }
  return z;
}

}  // namespace

SynthData generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  Eigen::MatrixXd truth = cfg.trajectory == Trajectory::Lissajous ? lissajous(cfg, rng) : random_walk(cfg, rng);

  std::mt19937_64 tuning_rng(cfg.tuning_seed);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> gain(cfg.gain_min, cfg.gain_max);
  Eigen::VectorXd dir_x(cfg.feature_dim), dir_y(cfg.feature_dim), gains(cfg.feature_dim);
  for (Eigen::Index j = 0; j < cfg.feature_dim; ++j) {
    const double th = angle(tuning_rng);
    dir_x[j] = std::cos(th);
    dir_y[j] = std::sin(th);
    gains[j] = gain(tuning_rng);
  }

  const double scale = cfg.box_x / 2.0;
  std::normal_distribution<double> noise(0.0, 1.0);
  Dataset d;
  d.name = "synthetic-" + std::to_string(cfg.seed);
  d.features.resize(cfg.samples, cfg.feature_dim);
  for (Eigen::Index k = 0; k < cfg.samples; ++k) {
    const double ux = (truth(k, 0) - cfg.box_x / 2.0) / scale;
    const double uy = cfg.y_tuning_weight * (truth(k, 1) - cfg.box_y / 2.0) / scale;
    for (Eigen::Index j = 0; j < cfg.feature_dim; ++j) {
      double drive = dir_x[j] * ux + dir_y[j] * uy;
      if (cfg.tuning == Tuning::Cosine) drive = std::max(0.0, drive);
      const double rate = cfg.baseline + gains[j] * drive;
      double value = 0.0;
      if (cfg.poisson) {
        if (rate > 0.0) {
          std::poisson_distribution<int> counts(rate);
          value = static_cast<double>(counts(rng));
        }
      } else {
        value = cfg.noise_sd > 0.0 ? std::max(0.0, rate + cfg.noise_sd * noise(rng)) : rate;
      }
      d.features(k, j) = value;
    }
  }
  d.positions = truth;
  return {std::move(d), std::move(truth)};
}

}  // namespace sd2e
