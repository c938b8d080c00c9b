#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "spsalab/core.hpp"
#include "spsalab/losses.hpp"
#include "spsalab/perturb.hpp"

namespace spsalab {

enum class Method { SPSA, RDSA, FDSA };

std::string to_string(Method m);
Method parse_method(std::string_view text);

struct GradEstimate {
  Vector g_hat;
  std::size_t measurements_used = 0;
  /// Delta_k for SPSA, pi_k for RDSA, empty for FDSA.
  Vector perturbation;
};

/// [y(t + c D) - y(t - c D)] / (2 c D_i), two measurements.
GradEstimate spsa_gradient(const LossModel& loss, const ParamVector& theta, double c_k,
                           const PerturbationDist& dist, RngStream& rng);
/// [y(t + c pi) - y(t - c pi)] / (2 c) * pi, two measurements.
GradEstimate rdsa_gradient(const LossModel& loss, const ParamVector& theta, double c_k,
                           const PerturbationDist& dist, RngStream& rng);
/// Central difference along each axis, 2p measurements.
GradEstimate fdsa_gradient(const LossModel& loss, const ParamVector& theta, double c_k,
                           RngStream& rng);

// Fixed-perturbation forms. The stream only feeds measurement noise.
GradEstimate spsa_gradient_with(const LossModel& loss, const ParamVector& theta, double c_k,
                                const Vector& delta, RngStream& rng);
GradEstimate rdsa_gradient_with(const LossModel& loss, const ParamVector& theta, double c_k,
                                const Vector& direction, RngStream& rng);

enum class Record { Full, FinalOnly };

struct SaOptions {
  std::size_t iterations = 1;
  Record record = Record::FinalOnly;
  /// Abort when |theta_k| exceeds this bound or turns non-finite.
  double divergence_bound = 1e6;
};

struct Divergence {
  std::size_t iteration;
  double norm;
};

struct Trajectory {
  /// theta_0 .. theta_K for Record::Full, {theta_0, theta_K} for FinalOnly.
  /// On divergence, ends at the last finite iterate within the bound.
  std::vector<ParamVector> iterates;
  std::size_t loss_evals = 0;
  std::size_t iterations_run = 0;
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;
  std::optional<Divergence> divergence;

  const ParamVector& final() const { return iterates.back(); }
  bool diverged() const { return divergence.has_value(); }
};

/// Called after every update with (k + 1, theta_{k+1}).
using IterateObserver = std::function<void(std::size_t, const Vector&)>;

/// theta_{k+1} = theta_k - a_k g_hat_k(theta_k) for k = 0 .. K-1.
Trajectory run_sa(const LossModel& loss, const ParamVector& theta0, const GainSequence& gs,
                  Method method, const PerturbationDist& dist, const SaOptions& options,
                  RngStream& rng, const IterateObserver& observer = {});

/// Checks that dist's family matches the method (SPSA needs SP, RDSA needs RD).
void check_method_dist(Method method, const PerturbationDist& dist);

}  // namespace spsalab
