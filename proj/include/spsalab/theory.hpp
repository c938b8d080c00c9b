#pragma once

#include <cstdint>

#include "spsalab/core.hpp"
#include "spsalab/losses.hpp"
#include "spsalab/perturb.hpp"

namespace spsalab {

/// Leading O(c_k^2) bias of the gradient estimate at theta.
///   RD: (c^2/6) (phi L'''_mmm + 3 upsilon sum_{i!=m} L'''_iim)
///   SP: (c^2/6) xi^2 (L'''_mmm + 3 sum_{i!=m} L'''_iim)
Vector predict_bias(const LossModel& loss, const ParamVector& theta, double c_k,
                    const PerturbationDist& dist);

/// Limit law of k^(beta/2) (theta_k - theta*) ~ N(mu, P M P^T).
struct AsymptoticParams {
  double beta = 0.0;
  double beta_plus = 0.0;
  /// Eigenvalues of a H(theta*), ascending.
  Vector lambda;
  Vector mu;
  /// Diagonal of M in the eigenbasis of H(theta*). Scaled by rho^2 for SP laws.
  Vector M_diag;
  double sigma_eff2 = 0.0;
  /// True when 3 gamma - alpha / 2 == 0 and the bias survives in the limit.
  bool biased_regime = false;

  double mse() const { return mu.squaredNorm() + M_diag.sum(); }
};

/// sigma_eff2 is the limit of E(eps+ - eps-)^2; it equals 2 sigma^2 when the
/// two measurement noises are independent.
AsymptoticParams asymptotic_distribution(const LossModel& loss, const GainSequence& gs,
                                         const PerturbationDist& dist, double sigma_eff2);

struct MseDecomposition {
  Vector u1;
  Vector u2;
  Matrix S;
  Vector lambda;
  double beta_plus = 0.0;
  double a = 0.0;
  double c = 0.0;
  double sigma_eff2 = 0.0;
  double u1Su1 = 0.0;
  double u1Su2 = 0.0;
  double u2Su2 = 0.0;
  double Q1 = 0.0;
  double Q2 = 0.0;
  double D = 0.0;

  std::size_t dim() const { return static_cast<std::size_t>(u1.size()); }
};

/// u1 = a c^2 L'''_ll / 6, u2 = a c^2 (3 sum_{j!=l} L'''_jjl) / 6,
/// S = (a H - beta_plus/2 I)^-2, Q1 = (u1+u2)'S(u1+u2), Q2 = (3u1+u2)'S(3u1+u2),
/// D = (a^2 sigma^2 / 4c^2) sum 1 / (2 lambda_i - beta_plus). All at theta*.
MseDecomposition mse_decomposition(const LossModel& loss, double a, double c, double beta_plus,
                                   double sigma_eff2);

/// The same D computed as (a^2 sigma^2 / 8c^2) tr((aH)^-1) through a Cholesky
/// solve, without an eigendecomposition. Only defined for beta_plus = 0.
double variance_trace_direct(const LossModel& loss, double a, double c, double sigma_eff2);

/// Asymptotic MSE mu'mu + tr(M), obtained by substituting the law's moments:
/// RD: (phi u1 + upsilon u2)'S(phi u1 + upsilon u2) + D;
/// SP: xi^4 (u1+u2)'S(u1+u2) + rho^2 D.
double predict_mse(const MseDecomposition& dec, const PerturbationDist& dist, std::size_t p);

struct Prop3 {
  bool holds;
  double value;
};

/// value = 2 u1'S u1 + u1'S u2. When non-negative, Bernoulli SPSA has an
/// asymptotic MSE no larger than Gaussian RDSA.
Prop3 prop3_predicate(const MseDecomposition& dec);

struct ZStudy {
  std::size_t p = 0;
  std::size_t n_trials = 0;
  std::size_t count_leq_0 = 0;
  double p_z_leq_0 = 0.0;
  /// 41 / (41 + 20p), the one-sided Chebyshev bound built from the
  /// variance 16 * 41 p a^4 / 45, which overstates Var(z).
  double chebyshev_bound = 0.0;
  /// Same bound with the exact variance: 21 / (21 + 20p).
  double chebyshev_bound_exact = 0.0;
  double expected_z = 0.0;
  double variance_z = 0.0;
};

/// Monte Carlo estimate of P(z <= 0) for z = 4 x'(2x + y), x, y with
/// i.i.d. U(-a_range, a_range) entries, S = I.
ZStudy z_study(std::size_t p, double a_range, std::size_t n_trials, std::uint64_t seed,
               unsigned parallelism = 1);

}  // namespace spsalab
