#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "spsalab/experiments.hpp"

namespace spsalab {

/// Line-based `key = value` experiment description shared by every command.
/// `#` starts a comment. `pair` may repeat; list values are comma separated.
struct ExperimentConfig {
  std::string loss = "skewed_quartic:p=10";
  double noise_sigma2 = 0.0;
  double a = 0.1;
  double A = 0.0;
  double alpha = 0.602;
  double c = 0.1;
  double gamma = 0.101;
  /// One value broadcasts to every coordinate.
  std::vector<double> theta0{1.0};
  /// Empty means "measure error against the loss minimizer".
  std::vector<double> mse_reference;
  std::size_t iterations = 1000;
  std::size_t trials = 100;
  std::uint64_t seed = 0;
  unsigned parallel = 1;
  std::string out = "out";
  std::vector<std::string> pairs;
  std::size_t curve_window = 200;
  double divergence_bound = 1e6;

  GridSpec grid;
  std::size_t grid_trials = 20;

  std::vector<std::size_t> zstudy_p{1, 2, 3, 4, 5, 6, 7, 8};
  std::size_t zstudy_trials = 100000;
  double zstudy_a_range = 1.0;

  /// Throws Error(Config) naming the line and key on any problem.
  static ExperimentConfig parse(std::string_view text);
  /// Throws Error(Io) when the file cannot be read.
  static ExperimentConfig load(const std::filesystem::path& path);

  /// Canonical text; parse(serialize()) reproduces every field bit for bit.
  std::string serialize() const;
  /// FNV-1a 64 of the canonical text without `parallel` and `out`, which do
  /// not change results.
  std::uint64_t hash() const;
  std::string hash_hex() const;

  LossModel make_loss() const;
  GainSequence gains() const;
  ParamVector theta0_for(std::size_t p) const;
  std::optional<ParamVector> reference_for(std::size_t p) const;
  std::vector<MethodDist> method_pairs() const;
  TrialBattery battery() const;
  GridSearch grid_search_for(const MethodDist& pair) const;

  bool operator==(const ExperimentConfig&) const = default;
};

/// Shortest text that parses back to the same double.
std::string format_double(double v);

}  // namespace spsalab
