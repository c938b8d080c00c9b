#include "spsalab/estimators.hpp"

#include <cmath>

namespace spsalab {

namespace {

void check_inputs(const LossModel& loss, std::size_t p, double c_k) {
  if (p != loss.dim()) {
    throw Error(ErrorKind::InvalidArgument, "theta dimension does not match loss dimension");
  }
  if (!(c_k > 0.0)) throw Error(ErrorKind::InvalidArgument, "c_k must be > 0");
}

// Workspace-based kernels shared by the public estimators and the SA loop.
double difference_quotient(const LossModel& loss, const Vector& theta, double c_k,
                           const Vector& dir, Vector& work, RngStream& rng) {
  work = theta + c_k * dir;
  const double y_plus = loss.measure(work, rng);
  work = theta - c_k * dir;
  const double y_minus = loss.measure(work, rng);
  return (y_plus - y_minus) / (2.0 * c_k);
}

void spsa_kernel(const LossModel& loss, const Vector& theta, double c_k, const Vector& delta,
                 Vector& work, Vector& g, RngStream& rng) {
  const double q = difference_quotient(loss, theta, c_k, delta, work, rng);
  g = q * delta.cwiseInverse();
}

void rdsa_kernel(const LossModel& loss, const Vector& theta, double c_k, const Vector& dir,
                 Vector& work, Vector& g, RngStream& rng) {
  const double q = difference_quotient(loss, theta, c_k, dir, work, rng);
  g = q * dir;
}

void fdsa_kernel(const LossModel& loss, const Vector& theta, double c_k, Vector& work, Vector& g,
                 RngStream& rng) {
  work = theta;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    work[i] = theta[i] + c_k;
    const double y_plus = loss.measure(work, rng);
    work[i] = theta[i] - c_k;
    const double y_minus = loss.measure(work, rng);
    work[i] = theta[i];
    g[i] = (y_plus - y_minus) / (2.0 * c_k);
  }
}

void require_nonzero(const Vector& delta) {
  for (Eigen::Index i = 0; i < delta.size(); ++i) {
    if (delta[i] == 0.0) {
      throw Error(ErrorKind::InvalidPerturbation, "SPSA perturbation has a zero component");
    }
  }
}

}  // namespace

std::string to_string(Method m) {
  switch (m) {
    case Method::SPSA:
      return "spsa";
    case Method::RDSA:
      return "rdsa";
    case Method::FDSA:
      return "fdsa";
  }
  return {};
}

Method parse_method(std::string_view text) {
  if (text == "spsa") return Method::SPSA;
  if (text == "rdsa") return Method::RDSA;
  if (text == "fdsa") return Method::FDSA;
  throw Error(ErrorKind::Config, "unknown method '" + std::string(text) + "'");
}

void check_method_dist(Method method, const PerturbationDist& dist) {
  if (method == Method::SPSA && dist.family() != Family::SP) {
    throw Error(ErrorKind::InvalidPerturbation, "SPSA requires an SP-family perturbation");
  }
  if (method == Method::RDSA && dist.family() != Family::RD) {
    throw Error(ErrorKind::InvalidPerturbation, "RDSA requires an RD-family perturbation");
  }
}

GradEstimate spsa_gradient_with(const LossModel& loss, const ParamVector& theta, double c_k,
                                const Vector& delta, RngStream& rng) {
  check_inputs(loss, theta.size(), c_k);
  if (static_cast<std::size_t>(delta.size()) != theta.size()) {
    throw Error(ErrorKind::InvalidArgument, "perturbation length does not match theta");
  }
  require_nonzero(delta);
  GradEstimate out;
  Vector work;
  spsa_kernel(loss, theta.values(), c_k, delta, work, out.g_hat, rng);
  out.measurements_used = 2;
  out.perturbation = delta;
  return out;
}

GradEstimate rdsa_gradient_with(const LossModel& loss, const ParamVector& theta, double c_k,
                                const Vector& direction, RngStream& rng) {
  check_inputs(loss, theta.size(), c_k);
  if (static_cast<std::size_t>(direction.size()) != theta.size()) {
    throw Error(ErrorKind::InvalidArgument, "direction length does not match theta");
  }
  GradEstimate out;
  Vector work;
  rdsa_kernel(loss, theta.values(), c_k, direction, work, out.g_hat, rng);
  out.measurements_used = 2;
  out.perturbation = direction;
  return out;
}

GradEstimate spsa_gradient(const LossModel& loss, const ParamVector& theta, double c_k,
                           const PerturbationDist& dist, RngStream& rng) {
  check_method_dist(Method::SPSA, dist);
  check_inputs(loss, theta.size(), c_k);
  return spsa_gradient_with(loss, theta, c_k, sample(dist, theta.size(), rng), rng);
}

GradEstimate rdsa_gradient(const LossModel& loss, const ParamVector& theta, double c_k,
                           const PerturbationDist& dist, RngStream& rng) {
  check_method_dist(Method::RDSA, dist);
  check_inputs(loss, theta.size(), c_k);
  return rdsa_gradient_with(loss, theta, c_k, sample(dist, theta.size(), rng), rng);
}

GradEstimate fdsa_gradient(const LossModel& loss, const ParamVector& theta, double c_k,
                           RngStream& rng) {
  check_inputs(loss, theta.size(), c_k);
  GradEstimate out;
  out.g_hat.resize(theta.values().size());
  Vector work;
  fdsa_kernel(loss, theta.values(), c_k, work, out.g_hat, rng);
  out.measurements_used = 2 * theta.size();
  return out;
}

Trajectory run_sa(const LossModel& loss, const ParamVector& theta0, const GainSequence& gs,
                  Method method, const PerturbationDist& dist, const SaOptions& options,
                  RngStream& rng, const IterateObserver& observer) {
  gs.validate();
  check_method_dist(method, dist);
  if (options.iterations < 1) throw Error(ErrorKind::InvalidArgument, "iterations must be >= 1");
  if (theta0.size() != loss.dim()) {
    throw Error(ErrorKind::InvalidArgument, "theta0 dimension does not match loss dimension");
  }

  Trajectory traj;
  traj.seed = rng.seed();
  traj.stream_id = rng.stream_id();
  if (options.record == Record::Full) traj.iterates.reserve(options.iterations + 1);
  traj.iterates.push_back(theta0);

  const auto n = static_cast<Eigen::Index>(loss.dim());
  Vector theta = theta0.values();
  Vector next(n);
  Vector dir(n);
  Vector work(n);
  Vector g(n);
  const std::size_t evals_per_iter = method == Method::FDSA ? 2 * loss.dim() : 2;

  for (std::size_t k = 0; k < options.iterations; ++k) {
    const Gains gk = gain_at(gs, k);
    switch (method) {
      case Method::SPSA:
        sample_into(dist, rng, dir);
        spsa_kernel(loss, theta, gk.c_k, dir, work, g, rng);
        break;
      case Method::RDSA:
        sample_into(dist, rng, dir);
        rdsa_kernel(loss, theta, gk.c_k, dir, work, g, rng);
        break;
      case Method::FDSA:
        fdsa_kernel(loss, theta, gk.c_k, work, g, rng);
        break;
    }
    traj.loss_evals += evals_per_iter;
    next = theta - gk.a_k * g;
    const double norm = next.norm();
    if (!std::isfinite(norm) || norm > options.divergence_bound) {
      traj.divergence = Divergence{k + 1, norm};
      traj.iterations_run = k + 1;
      if (options.record == Record::FinalOnly) traj.iterates.emplace_back(theta);
      return traj;
    }
    theta.swap(next);
    if (options.record == Record::Full) traj.iterates.emplace_back(theta);
    if (observer) observer(k + 1, theta);
  }
  traj.iterations_run = options.iterations;
  if (options.record == Record::FinalOnly) traj.iterates.emplace_back(theta);
  return traj;
}

}  // namespace spsalab
