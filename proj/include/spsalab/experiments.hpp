#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "spsalab/estimators.hpp"

namespace spsalab {

/// One algorithm configuration in a battery: a method and its perturbation law.
struct MethodDist {
  Method method;
  PerturbationDist dist;

  /// "spsa bernoulli", "rdsa spherical", "spsa ushape:d=10,cmax=1.17", "fdsa".
  static MethodDist parse(std::string_view text);
  std::string spec() const;
  std::string label() const;
};

struct TrialBattery {
  LossModel loss;
  std::vector<MethodDist> pairs;
  GainSequence gs;
  ParamVector theta0;
  std::size_t iterations = 1;
  std::size_t n_trials = 1;
  std::uint64_t base_seed = 0;
  /// Length of the tail of the per-iteration mean squared error curve.
  std::size_t curve_window = 200;
  /// Point the squared error is measured against. Defaults to the loss minimizer.
  std::optional<ParamVector> reference;
  double divergence_bound = 1e6;
};

struct PairReport {
  MethodDist pair;
  /// Mean of |theta_K - reference|^2 over trials that did not diverge.
  double mean_mse = 0.0;
  std::pair<double, double> ci95{0.0, 0.0};
  /// One entry per trial; +inf marks a diverged trial.
  std::vector<double> sq_errors;
  std::size_t diverged = 0;
  /// Mean terminal squared distance to the loss minimizer.
  double mean_mse_vs_minimizer = 0.0;
  /// Mean squared error at iterations curve_start .. K over non-diverged trials.
  std::vector<double> curve;
  std::size_t loss_evals = 0;
};

struct MseReport {
  std::vector<PairReport> pairs;
  std::size_t curve_start = 0;
};

/// Trial t of pair i runs on RngStream(base_seed, (i << 32) | t).
MseReport run_battery(const TrialBattery& tb, unsigned parallelism = 1);

/// Mean and 95% normal interval mean +- 1.96 s / sqrt(n) over the finite entries.
struct MeanCi {
  double mean;
  double lo;
  double hi;
  std::size_t n;
};
MeanCi mean_ci95(std::span<const double> values);

struct WelchResult {
  double t;
  double dof;
  double p_value;
};

/// Two-sided Welch unequal-variance t-test.
WelchResult welch_t_test(std::span<const double> x, std::span<const double> y);

struct GridSpec {
  double a_min = 0.1;
  double a_max = 1.0;
  double a_step = 0.02;
  double c_min = 0.1;
  double c_max = 1.0;
  double c_step = 0.02;

  std::vector<double> a_values() const;
  std::vector<double> c_values() const;

  bool operator==(const GridSpec&) const = default;
};

struct GridPoint {
  double a;
  double c;
  /// Mean terminal squared error over non-diverged trials; NaN when all diverged.
  double mse;
  std::size_t diverged;
  /// Ranking key: mse, or +inf when any trial diverged.
  double score;
};

struct GridResult {
  double a_best = 0.0;
  double c_best = 0.0;
  double best_score = 0.0;
  std::vector<GridPoint> table;
};

struct GridSearch {
  LossModel loss;
  MethodDist pair;
  GridSpec grid;
  double A = 10.0;
  double alpha = 0.606;
  double gamma = 0.101;
  ParamVector theta0;
  std::size_t trials_per_point = 20;
  std::size_t iterations = 4000;
  std::uint64_t base_seed = 0;
  std::optional<ParamVector> reference;
  double divergence_bound = 1e6;
};

/// Exhaustive search over (a, c). Every grid point replays the same trial
/// streams, so differences between points are not masked by sampling noise.
/// Ties go to the smaller a, then the smaller c.
GridResult grid_search(const GridSearch& gs, unsigned parallelism = 1);

}  // namespace spsalab
