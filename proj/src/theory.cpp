#include "spsalab/theory.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "parallel.hpp"

namespace spsalab {

namespace {

constexpr double kRegimeTol = 1e-12;

struct ThirdOrderCoeffs {
  double diag;   // multiplies L'''_lll
  double cross;  // multiplies sum_{i!=l} L'''_iil
};

ThirdOrderCoeffs third_order_coeffs(const PerturbationDist& dist, std::size_t p) {
  const MomentSet m = moments(dist, p);
  if (dist.family() == Family::RD) return {*m.phi, 3.0 * *m.upsilon};
  return {*m.xi2, 3.0 * *m.xi2};
}

void require_third(const LossModel& loss) {
  if (!loss.analytic_derivatives()) {
    throw Error(ErrorKind::NotDifferentiable,
                "loss '" + loss.spec() + "' has no analytic third derivatives");
  }
}

Vector eigenvalues_scaled(const Matrix& H, double a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(a * H, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

}  // namespace

Vector predict_bias(const LossModel& loss, const ParamVector& theta, double c_k,
                    const PerturbationDist& dist) {
  require_third(loss);
  const DerivativeBundle d = derivatives(loss, theta);
  const ThirdOrderCoeffs k = third_order_coeffs(dist, loss.dim());
  return (c_k * c_k / 6.0) * (k.diag * d.third_diag + k.cross * d.third_cross);
}

AsymptoticParams asymptotic_distribution(const LossModel& loss, const GainSequence& gs,
                                         const PerturbationDist& dist, double sigma_eff2) {
  gs.validate();
  require_third(loss);
  AsymptoticParams out;
  out.sigma_eff2 = sigma_eff2;
  out.beta = gs.alpha - 2.0 * gs.gamma;
  if (!(out.beta > 0.0)) {
    throw Error(ErrorKind::RegimeRejected, "beta = alpha - 2 gamma must be > 0");
  }
  const double mean_exponent = 3.0 * gs.gamma - gs.alpha / 2.0;
  if (mean_exponent < -kRegimeTol) {
    throw Error(ErrorKind::RegimeRejected, "asymptotic mean formula undefined for this regime");
  }
  out.biased_regime = std::abs(mean_exponent) <= kRegimeTol;

  const DerivativeBundle d = derivatives(loss, loss.theta_star());
  out.lambda = eigenvalues_scaled(d.hessian, gs.a);
  if (!(out.lambda.minCoeff() > 0.0)) {
    throw Error(ErrorKind::RegimeRejected, "Hessian at the minimizer is not positive definite");
  }
  const bool unit_alpha = std::abs(gs.alpha - 1.0) <= kRegimeTol;
  out.beta_plus = unit_alpha ? out.beta : 0.0;
  if (unit_alpha && !(out.beta_plus < 2.0 * out.lambda.minCoeff())) {
    std::ostringstream os;
    os << "alpha = 1 requires beta < 2 min(lambda); beta = " << out.beta
       << ", min(lambda) = " << out.lambda.minCoeff();
    throw Error(ErrorKind::RegimeRejected, os.str());
  }

  const std::size_t p = loss.dim();
  const MomentSet m = moments(dist, p);
  const double var_scale = dist.family() == Family::SP ? *m.rho2 : 1.0;
  out.M_diag = (gs.a * gs.a * sigma_eff2 / (4.0 * gs.c * gs.c) * var_scale) *
               (2.0 * out.lambda.array() - out.beta_plus).inverse().matrix();

  const auto n = static_cast<Eigen::Index>(p);
  out.mu = Vector::Zero(n);
  if (out.biased_regime) {
    const ThirdOrderCoeffs k = third_order_coeffs(dist, p);
    const Vector T = -(gs.a * gs.c * gs.c / 6.0) * (k.diag * d.third_diag + k.cross * d.third_cross);
    const Matrix shifted = gs.a * d.hessian - 0.5 * out.beta_plus * Matrix::Identity(n, n);
    out.mu = shifted.ldlt().solve(T);
  }
  return out;
}

MseDecomposition mse_decomposition(const LossModel& loss, double a, double c, double beta_plus,
                                   double sigma_eff2) {
  require_third(loss);
  if (!(a > 0.0) || !(c > 0.0)) throw Error(ErrorKind::InvalidGains, "a and c must be > 0");
  const DerivativeBundle d = derivatives(loss, loss.theta_star());
  const auto n = static_cast<Eigen::Index>(loss.dim());

  MseDecomposition out;
  out.a = a;
  out.c = c;
  out.beta_plus = beta_plus;
  out.sigma_eff2 = sigma_eff2;
  out.u1 = (a * c * c / 6.0) * d.third_diag;
  out.u2 = (a * c * c / 6.0) * (3.0 * d.third_cross);

  const Matrix shifted = a * d.hessian - 0.5 * beta_plus * Matrix::Identity(n, n);
  Eigen::SelfAdjointEigenSolver<Matrix> es(shifted);
  if (!(es.eigenvalues().minCoeff() > 0.0)) {
    throw Error(ErrorKind::RegimeRejected, "a H(theta*) - beta_plus/2 I is not positive definite");
  }
  const Vector inv_sq = es.eigenvalues().array().square().inverse().matrix();
  out.S = es.eigenvectors() * inv_sq.asDiagonal() * es.eigenvectors().transpose();
  out.lambda = eigenvalues_scaled(d.hessian, a);

  out.u1Su1 = out.u1.dot(out.S * out.u1);
  out.u1Su2 = out.u1.dot(out.S * out.u2);
  out.u2Su2 = out.u2.dot(out.S * out.u2);
  const Vector s1 = out.u1 + out.u2;
  const Vector s2 = 3.0 * out.u1 + out.u2;
  out.Q1 = s1.dot(out.S * s1);
  out.Q2 = s2.dot(out.S * s2);
  out.D = a * a * sigma_eff2 / (4.0 * c * c) *
          (2.0 * out.lambda.array() - beta_plus).inverse().sum();
  return out;
}

double variance_trace_direct(const LossModel& loss, double a, double c, double sigma_eff2) {
  require_third(loss);
  const DerivativeBundle d = derivatives(loss, loss.theta_star());
  const auto n = static_cast<Eigen::Index>(loss.dim());
  Eigen::LLT<Matrix> llt(a * d.hessian);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorKind::RegimeRejected, "a H(theta*) is not positive definite");
  }
  const Matrix inv = llt.solve(Matrix::Identity(n, n));
  return a * a * sigma_eff2 / (8.0 * c * c) * inv.trace();
}

double predict_mse(const MseDecomposition& dec, const PerturbationDist& dist, std::size_t p) {
  const MomentSet m = moments(dist, p);
  if (dist.family() == Family::RD) {
    const Vector w = *m.phi * dec.u1 + *m.upsilon * dec.u2;
    return w.dot(dec.S * w) + dec.D;
  }
  const Vector w = *m.xi2 * (dec.u1 + dec.u2);
  return w.dot(dec.S * w) + *m.rho2 * dec.D;
}

Prop3 prop3_predicate(const MseDecomposition& dec) {
  const double value = 2.0 * dec.u1Su1 + dec.u1Su2;
  const bool holds = value >= 0.0;
  // Q2 - Q1 = 4 value, so the predicate implies the MSE ordering.
  const double scale = std::max({1.0, std::abs(dec.Q1), std::abs(dec.Q2)});
  if (holds && dec.Q1 > dec.Q2 + 1e-10 * scale) {
    throw std::logic_error("ordering predicate holds but Q1 > Q2");
  }
  return {holds, value};
}

ZStudy z_study(std::size_t p, double a_range, std::size_t n_trials, std::uint64_t seed,
               unsigned parallelism) {
  if (p < 1) throw Error(ErrorKind::InvalidArgument, "dimension p must be >= 1");
  if (n_trials < 1) throw Error(ErrorKind::InvalidArgument, "n_trials must be >= 1");
  if (!(a_range > 0.0)) throw Error(ErrorKind::InvalidArgument, "a_range must be > 0");

  constexpr std::size_t kChunk = 8192;
  const std::size_t n_chunks = (n_trials + kChunk - 1) / kChunk;
  std::vector<std::size_t> counts(n_chunks, 0);
  parallel_for(n_chunks, parallelism, [&](std::size_t chunk) {
    RngStream rng(seed, chunk);
    const std::size_t begin = chunk * kChunk;
    const std::size_t end = std::min(n_trials, begin + kChunk);
    std::size_t hits = 0;
    std::vector<double> x(p);
    for (std::size_t t = begin; t < end; ++t) {
      for (auto& xi : x) xi = a_range * (2.0 * rng.uniform() - 1.0);
      double z = 0.0;
      for (std::size_t i = 0; i < p; ++i) {
        const double y = a_range * (2.0 * rng.uniform() - 1.0);
        z += x[i] * (2.0 * x[i] + y);
      }
      if (4.0 * z <= 0.0) ++hits;
    }
    counts[chunk] = hits;
  });

  ZStudy out;
  out.p = p;
  out.n_trials = n_trials;
  for (std::size_t c : counts) out.count_leq_0 += c;
  const double pp = static_cast<double>(p);
  const double a2 = a_range * a_range;
  out.p_z_leq_0 = static_cast<double>(out.count_leq_0) / static_cast<double>(n_trials);
  out.chebyshev_bound = 41.0 / (41.0 + 20.0 * pp);
  out.expected_z = 8.0 * a2 * pp / 3.0;
  // Var(8 x'x) = 64 p (E x^4 - (E x^2)^2) = 256 p a^4 / 45 and Var(4 x'y) = 16 p a^4 / 9.
  out.variance_z = 336.0 * pp * a2 * a2 / 45.0;
  out.chebyshev_bound_exact =
      out.variance_z / (out.variance_z + out.expected_z * out.expected_z);
  return out;
}

}  // namespace spsalab
