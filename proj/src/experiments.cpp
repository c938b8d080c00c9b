#include "spsalab/experiments.hpp"

#include <cmath>
#include <limits>

#include <boost/math/distributions/students_t.hpp>

#include "parallel.hpp"

namespace spsalab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct TrialOutcome {
  double sq_error = kInf;
  double sq_error_minimizer = kInf;
  std::vector<double> tail;
  std::size_t loss_evals = 0;
};

TrialOutcome run_trial(const LossModel& loss, const MethodDist& pair, const GainSequence& gs,
                       const ParamVector& theta0, const Vector& reference, std::size_t iterations,
                       std::size_t window, double divergence_bound, RngStream rng) {
  SaOptions opts;
  opts.iterations = iterations;
  opts.record = Record::FinalOnly;
  opts.divergence_bound = divergence_bound;

  TrialOutcome out;
  const std::size_t curve_start = iterations - window + 1;
  if (window > 0) out.tail.reserve(window);
  IterateObserver observer;
  if (window > 0) {
    observer = [&](std::size_t k, const Vector& theta) {
      if (k >= curve_start) out.tail.push_back((theta - reference).squaredNorm());
    };
  }
  const Trajectory traj =
      run_sa(loss, theta0, gs, pair.method, pair.dist, opts, rng, observer);
  out.loss_evals = traj.loss_evals;
  if (!traj.diverged()) {
    out.sq_error = (traj.final().values() - reference).squaredNorm();
    out.sq_error_minimizer = (traj.final().values() - loss.theta_star().values()).squaredNorm();
  } else {
    out.tail.clear();
  }
  return out;
}

std::vector<double> linspace_steps(double lo, double hi, double step, const char* what) {
  if (!(step > 0.0) || !(hi >= lo)) {
    throw Error(ErrorKind::InvalidArgument, std::string("invalid grid range for ") + what);
  }
  const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
  std::vector<double> out(n);
  // Index-based to avoid accumulated rounding; rounded to 1e-12 for clean output.
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = std::round((lo + static_cast<double>(i) * step) * 1e12) / 1e12;
  }
  return out;
}

}  // namespace

MethodDist MethodDist::parse(std::string_view text) {
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
  const auto space = text.find(' ');
  const Method method = parse_method(text.substr(0, space));
  std::string_view rest = space == std::string_view::npos ? std::string_view{} : text.substr(space + 1);
  while (!rest.empty() && rest.front() == ' ') rest.remove_prefix(1);
  if (method == Method::FDSA) {
    if (!rest.empty()) {
      throw Error(ErrorKind::InvalidPerturbation, "FDSA takes no perturbation distribution");
    }
    return {method, PerturbationDist::bernoulli(Family::SP)};
  }
  if (rest.empty()) {
    throw Error(ErrorKind::InvalidPerturbation,
                "method '" + std::string(text) + "' needs a perturbation distribution");
  }
  const Family family = method == Method::SPSA ? Family::SP : Family::RD;
  return {method, PerturbationDist::parse(rest, family)};
}

std::string MethodDist::spec() const {
  if (method == Method::FDSA) return "fdsa";
  return to_string(method) + " " + dist.spec();
}

std::string MethodDist::label() const {
  if (method == Method::FDSA) return "FDSA";
  return dist.label();
}

MeanCi mean_ci95(std::span<const double> values) {
  double sum = 0.0;
  std::size_t n = 0;
  for (double v : values) {
    if (std::isfinite(v)) {
      sum += v;
      ++n;
    }
  }
  if (n == 0) return {kNaN, kNaN, kNaN, 0};
  const double mean = sum / static_cast<double>(n);
  if (n == 1) return {mean, mean, mean, 1};
  double ss = 0.0;
  for (double v : values) {
    if (std::isfinite(v)) ss += (v - mean) * (v - mean);
  }
  const double half = 1.96 * std::sqrt(ss / static_cast<double>(n - 1)) /
                      std::sqrt(static_cast<double>(n));
  return {mean, mean - half, mean + half, n};
}

MseReport run_battery(const TrialBattery& tb, unsigned parallelism) {
  tb.gs.validate();
  if (tb.pairs.empty()) throw Error(ErrorKind::InvalidArgument, "battery has no method/dist pairs");
  if (tb.n_trials < 1) throw Error(ErrorKind::InvalidArgument, "n_trials must be >= 1");
  if (tb.iterations < 1) throw Error(ErrorKind::InvalidArgument, "iterations must be >= 1");
  if (tb.n_trials >= (std::uint64_t{1} << 32)) {
    throw Error(ErrorKind::InvalidArgument, "n_trials exceeds the stream id range");
  }
  for (const auto& pair : tb.pairs) check_method_dist(pair.method, pair.dist);
  if (tb.theta0.size() != tb.loss.dim()) {
    throw Error(ErrorKind::InvalidArgument, "theta0 dimension does not match loss dimension");
  }
  const Vector reference = tb.reference ? tb.reference->values() : tb.loss.theta_star().values();
  if (static_cast<std::size_t>(reference.size()) != tb.loss.dim()) {
    throw Error(ErrorKind::InvalidArgument, "reference dimension does not match loss dimension");
  }
  const std::size_t window = std::min(tb.curve_window, tb.iterations);

  const std::size_t n_pairs = tb.pairs.size();
  std::vector<TrialOutcome> outcomes(n_pairs * tb.n_trials);
  parallel_for(outcomes.size(), parallelism, [&](std::size_t job) {
    const std::size_t pair = job / tb.n_trials;
    const std::size_t trial = job % tb.n_trials;
    RngStream rng(tb.base_seed, (static_cast<std::uint64_t>(pair) << 32) | trial);
    outcomes[job] = run_trial(tb.loss, tb.pairs[pair], tb.gs, tb.theta0, reference,
                              tb.iterations, window, tb.divergence_bound, rng);
  });

  MseReport report;
  report.curve_start = tb.iterations - window + 1;
  for (std::size_t i = 0; i < n_pairs; ++i) {
    PairReport pr{tb.pairs[i]};
    pr.sq_errors.reserve(tb.n_trials);
    std::vector<double> vs_min;
    vs_min.reserve(tb.n_trials);
    pr.curve.assign(window, 0.0);
    std::size_t curve_n = 0;
    for (std::size_t t = 0; t < tb.n_trials; ++t) {
      const TrialOutcome& o = outcomes[i * tb.n_trials + t];
      pr.sq_errors.push_back(o.sq_error);
      vs_min.push_back(o.sq_error_minimizer);
      pr.loss_evals += o.loss_evals;
      if (!std::isfinite(o.sq_error)) {
        ++pr.diverged;
        continue;
      }
      for (std::size_t w = 0; w < window; ++w) pr.curve[w] += o.tail[w];
      ++curve_n;
    }
    for (double& v : pr.curve) v = curve_n ? v / static_cast<double>(curve_n) : kNaN;
    const MeanCi ci = mean_ci95(pr.sq_errors);
    pr.mean_mse = ci.mean;
    pr.ci95 = {ci.lo, ci.hi};
    pr.mean_mse_vs_minimizer = mean_ci95(vs_min).mean;
    report.pairs.push_back(std::move(pr));
  }
  return report;
}

WelchResult welch_t_test(std::span<const double> x, std::span<const double> y) {
  if (x.size() < 2 || y.size() < 2) {
    throw Error(ErrorKind::InvalidArgument, "Welch t-test needs at least two samples per group");
  }
  const auto moments = [](std::span<const double> v) {
    double mean = 0.0;
    for (double e : v) mean += e;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double e : v) ss += (e - mean) * (e - mean);
    return std::pair{mean, ss / static_cast<double>(v.size() - 1)};
  };
  const auto [mx, vx] = moments(x);
  const auto [my, vy] = moments(y);
  const double nx = static_cast<double>(x.size());
  const double ny = static_cast<double>(y.size());
  const double sx = vx / nx;
  const double sy = vy / ny;
  const double se2 = sx + sy;
  if (se2 == 0.0) {
    if (mx == my) return {0.0, nx + ny - 2.0, 1.0};
    return {mx > my ? kInf : -kInf, nx + ny - 2.0, 0.0};
  }
  const double t = (mx - my) / std::sqrt(se2);
  const double dof = se2 * se2 / (sx * sx / (nx - 1.0) + sy * sy / (ny - 1.0));
  const boost::math::students_t_distribution<double> dist(dof);
  const double p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
  return {t, dof, std::min(1.0, p)};
}

std::vector<double> GridSpec::a_values() const { return linspace_steps(a_min, a_max, a_step, "a"); }

std::vector<double> GridSpec::c_values() const { return linspace_steps(c_min, c_max, c_step, "c"); }

GridResult grid_search(const GridSearch& gs, unsigned parallelism) {
  check_method_dist(gs.pair.method, gs.pair.dist);
  if (gs.trials_per_point < 1) {
    throw Error(ErrorKind::InvalidArgument, "trials_per_point must be >= 1");
  }
  const std::vector<double> as = gs.grid.a_values();
  const std::vector<double> cs = gs.grid.c_values();
  const Vector reference = gs.reference ? gs.reference->values() : gs.loss.theta_star().values();

  const std::size_t n_points = as.size() * cs.size();
  std::vector<double> errors(n_points * gs.trials_per_point, kInf);
  parallel_for(errors.size(), parallelism, [&](std::size_t job) {
    const std::size_t point = job / gs.trials_per_point;
    const std::size_t trial = job % gs.trials_per_point;
    GainSequence g{as[point / cs.size()], gs.A, gs.alpha, cs[point % cs.size()], gs.gamma};
    RngStream rng(gs.base_seed, trial);
    errors[job] = run_trial(gs.loss, gs.pair, g, gs.theta0, reference, gs.iterations, 0,
                            gs.divergence_bound, rng)
                      .sq_error;
  });

  GridResult result;
  result.best_score = kInf;
  result.table.reserve(n_points);
  bool have_best = false;
  for (std::size_t point = 0; point < n_points; ++point) {
    const std::span<const double> slice(errors.data() + point * gs.trials_per_point,
                                        gs.trials_per_point);
    const MeanCi ci = mean_ci95(slice);
    GridPoint gp{as[point / cs.size()], cs[point % cs.size()], ci.mean,
                 gs.trials_per_point - ci.n, 0.0};
    gp.score = gp.diverged > 0 ? kInf : gp.mse;
    // Row-major order visits smaller a first, then smaller c; strict < keeps the first tie.
    if (!have_best || gp.score < result.best_score) {
      have_best = true;
      result.best_score = gp.score;
      result.a_best = gp.a;
      result.c_best = gp.c;
    }
    result.table.push_back(gp);
  }
  return result;
}

}  // namespace spsalab
