#include <cmath>
#include <vector>

#include "doctest.h"
#include "spsalab/experiments.hpp"

using namespace spsalab;

TEST_CASE("Welch t-test examples") {
  const std::vector<double> x{1, 2, 3, 4, 5}, y{2, 3, 4, 5, 6};
  const WelchResult r = welch_t_test(x, y);
  CHECK(r.t == doctest::Approx(-1.0));
  CHECK(r.dof == doctest::Approx(8.0));
  CHECK(r.p_value == doctest::Approx(0.3466).epsilon(1e-3));

  const WelchResult same = welch_t_test(x, x);
  CHECK(same.t == 0.0);
  CHECK(same.p_value == doctest::Approx(1.0));

  const std::vector<double> c1{2, 2, 2}, c2{2, 2};
  CHECK(welch_t_test(c1, c2).p_value == 1.0);
  const std::vector<double> c3{3, 3};
  CHECK(welch_t_test(c1, c3).p_value == 0.0);
  CHECK_THROWS_AS(welch_t_test(std::vector<double>{1.0}, x), Error);
}

TEST_CASE("Welch t-test on unequal variances") {
  // Reference: scipy.stats.ttest_ind(x, y, equal_var=False).
  const std::vector<double> x{19.8, 20.4, 19.6, 17.8, 18.5, 18.9, 18.3, 18.9, 19.5, 22.0};
  const std::vector<double> y{28.2, 26.6, 20.1, 23.3, 25.2, 22.1, 17.7, 27.6, 20.6, 13.7,
                              23.2, 17.5, 20.6, 18.0, 23.9, 21.6, 24.3, 20.4, 23.9, 13.3};
  const WelchResult r = welch_t_test(x, y);
  CHECK(r.t == doctest::Approx(-2.225512039969852).epsilon(1e-10));
  CHECK(r.dof == doctest::Approx(24.524634944257343).epsilon(1e-10));
  CHECK(r.p_value == doctest::Approx(0.035484530830010325).epsilon(1e-8));
}

TEST_CASE("mean_ci95 skips non-finite entries") {
  const std::vector<double> v{1.0, 2.0, 3.0, INFINITY};
  const MeanCi ci = mean_ci95(v);
  CHECK(ci.n == 3);
  CHECK(ci.mean == doctest::Approx(2.0));
  CHECK(ci.hi - ci.mean == doctest::Approx(1.96 / std::sqrt(3.0)));
  CHECK(std::isnan(mean_ci95(std::vector<double>{INFINITY}).mean));
}

TEST_CASE("95% interval covers the true mean about 95% of the time") {
  RngStream rng(404, 0);
  int covered = 0;
  const int reps = 1000;
  for (int r = 0; r < reps; ++r) {
    std::vector<double> xs(200);
    for (auto& x : xs) x = 3.0 + rng.normal();
    const MeanCi ci = mean_ci95(xs);
    covered += ci.lo <= 3.0 && 3.0 <= ci.hi;
  }
  CHECK(std::abs(covered / double(reps) - 0.95) <= 0.02);
}

TEST_CASE("MethodDist parsing") {
  const MethodDist a = MethodDist::parse("spsa bernoulli");
  CHECK(a.method == Method::SPSA);
  CHECK(a.dist.family() == Family::SP);
  CHECK(a.label() == "Bernoulli SP");
  CHECK(MethodDist::parse(" rdsa  spherical ").spec() == "rdsa spherical");
  CHECK(MethodDist::parse("spsa ushape:d=10,cmax=1.17").spec() == "spsa ushape:d=10,cmax=1.17");
  CHECK(MethodDist::parse("fdsa").label() == "FDSA");
  CHECK_THROWS_AS(MethodDist::parse("spsa gaussian"), Error);
  CHECK_THROWS_AS(MethodDist::parse("rdsa ushape"), Error);
  CHECK_THROWS_AS(MethodDist::parse("spsa"), Error);
  CHECK_THROWS_AS(MethodDist::parse("fdsa bernoulli"), Error);
}

namespace {

TrialBattery small_battery() {
  TrialBattery tb{LossModel::skewed_quartic(5, NoiseModel::gaussian(0.01)),
                  {MethodDist::parse("spsa bernoulli"), MethodDist::parse("rdsa gaussian")},
                  {0.12, 10.0, 0.606, 0.8, 0.101},
                  ParamVector::constant(5, 1.0)};
  tb.iterations = 400;
  tb.n_trials = 12;
  tb.base_seed = 77;
  tb.curve_window = 50;
  return tb;
}

}  // namespace

TEST_CASE("noise-free battery at the minimizer of a quadratic has zero error") {
  TrialBattery tb{LossModel::identity_quadratic(3),
                  {MethodDist::parse("spsa bernoulli"), MethodDist::parse("rdsa gaussian"),
                   MethodDist::parse("fdsa")},
                  {0.1, 0.0, 0.602, 0.1, 0.101},
                  ParamVector::zeros(3)};
  tb.iterations = 100;
  tb.n_trials = 5;
  const MseReport r = run_battery(tb);
  for (const auto& pr : r.pairs) {
    CHECK(pr.mean_mse == 0.0);
    CHECK(pr.ci95.first == 0.0);
    CHECK(pr.ci95.second == 0.0);
    CHECK(pr.diverged == 0);
  }
  CHECK(r.pairs[2].loss_evals == 5 * 100 * 6);
}

TEST_CASE("battery is deterministic and independent of the worker count") {
  const TrialBattery tb = small_battery();
  const MseReport a = run_battery(tb, 1);
  const MseReport b = run_battery(tb, 3);
  REQUIRE(a.pairs.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(a.pairs[i].sq_errors == b.pairs[i].sq_errors);
    CHECK(a.pairs[i].curve == b.pairs[i].curve);
    CHECK(a.pairs[i].mean_mse == b.pairs[i].mean_mse);
  }
  CHECK(a.curve_start == 351);
  CHECK(a.pairs[0].curve.size() == 50);
  // Last curve point is the terminal error.
  CHECK(a.pairs[0].curve.back() == doctest::Approx(a.pairs[0].mean_mse));

  TrialBattery other = tb;
  other.base_seed = 78;
  CHECK(run_battery(other).pairs[0].sq_errors != a.pairs[0].sq_errors);
}

TEST_CASE("pair i, trial t uses stream (i << 32) | t") {
  const TrialBattery tb = small_battery();
  const MseReport r = run_battery(tb);
  SaOptions opt;
  opt.iterations = tb.iterations;
  RngStream rng(tb.base_seed, (std::uint64_t{1} << 32) | 4);
  const auto traj = run_sa(tb.loss, tb.theta0, tb.gs, Method::RDSA, PerturbationDist::gaussian(), opt, rng);
  CHECK(r.pairs[1].sq_errors[4] == traj.final().values().squaredNorm());
}

TEST_CASE("reference point and minimizer are reported separately") {
  TrialBattery tb = small_battery();
  tb.reference = ParamVector::constant(5, 0.5);
  const MseReport r = run_battery(tb);
  const MseReport base = run_battery(small_battery());
  CHECK(r.pairs[0].mean_mse_vs_minimizer == doctest::Approx(base.pairs[0].mean_mse));
  CHECK(r.pairs[0].mean_mse != doctest::Approx(base.pairs[0].mean_mse));
}

TEST_CASE("diverged trials are counted and excluded") {
  TrialBattery tb{LossModel::identity_quadratic(2, NoiseModel::gaussian(1.0)),
                  {MethodDist::parse("spsa bernoulli")},
                  {0.9, 0.0, 0.602, 0.01, 0.101},
                  ParamVector::constant(2, 1.0)};
  tb.iterations = 200;
  tb.n_trials = 40;
  tb.divergence_bound = 50.0;
  const MseReport r = run_battery(tb);
  const PairReport& pr = r.pairs[0];
  std::size_t inf = 0;
  for (double e : pr.sq_errors) inf += std::isinf(e);
  CHECK(pr.diverged == inf);
  CHECK(pr.diverged > 0);
  if (pr.diverged < tb.n_trials) CHECK(std::isfinite(pr.mean_mse));
}

TEST_CASE("battery validation") {
  TrialBattery tb = small_battery();
  tb.pairs.clear();
  CHECK_THROWS_AS(run_battery(tb), Error);
  tb = small_battery();
  tb.theta0 = ParamVector::constant(3, 1.0);
  CHECK_THROWS_AS(run_battery(tb), Error);
  tb = small_battery();
  tb.n_trials = 0;
  CHECK_THROWS_AS(run_battery(tb), Error);
}

TEST_CASE("grid values") {
  const GridSpec g;
  CHECK(g.a_values().size() == 46);
  CHECK(g.c_values().front() == 0.1);
  CHECK(g.c_values().back() == 1.0);
  CHECK(g.a_values()[5] == 0.2);
  CHECK_THROWS_AS((GridSpec{1.0, 0.5, 0.1, 0.1, 1.0, 0.1}.a_values()), Error);
}

TEST_CASE("single-point grid returns that point") {
  GridSearch gs{LossModel::skewed_quartic(3, NoiseModel::gaussian(0.01)),
                MethodDist::parse("spsa bernoulli"),
                {0.3, 0.3, 0.1, 0.5, 0.5, 0.1}, 10.0, 0.606, 0.101,
                ParamVector::constant(3, 1.0)};
  gs.iterations = 100;
  gs.trials_per_point = 4;
  const GridResult r = grid_search(gs);
  REQUIRE(r.table.size() == 1);
  CHECK(r.a_best == 0.3);
  CHECK(r.c_best == 0.5);
  CHECK(r.best_score == r.table[0].mse);
}

TEST_CASE("grid over a noise-free FDSA quadratic matches the scalar recursion") {
  GridSearch gs{LossModel::identity_quadratic(1), MethodDist::parse("fdsa"),
                {0.1, 0.4, 0.1, 0.1, 0.3, 0.1}, 0.0, 0.602, 0.101, ParamVector{1.0}};
  gs.iterations = 30;
  gs.trials_per_point = 2;
  const GridResult r = grid_search(gs, 2);
  REQUIRE(r.table.size() == 12);
  double best = INFINITY;
  for (const GridPoint& p : r.table) {
    double x = 1.0;
    for (std::size_t k = 0; k < 30; ++k) x *= 1.0 - 2.0 * gain_at({p.a, 0.0, 0.602, p.c, 0.101}, k).a_k;
    CHECK(p.mse == doctest::Approx(x * x).epsilon(1e-9));
    best = std::min(best, x * x);
  }
  CHECK(r.best_score == doctest::Approx(best).epsilon(1e-9));
}

TEST_CASE("grid ties go to the smallest a, then the smallest c") {
  // Started at the minimizer without noise, every point scores exactly zero.
  GridSearch gs{LossModel::identity_quadratic(2), MethodDist::parse("spsa bernoulli"),
                {0.1, 0.4, 0.1, 0.1, 0.3, 0.1}, 10.0, 0.606, 0.101, ParamVector::zeros(2)};
  gs.iterations = 10;
  gs.trials_per_point = 2;
  const GridResult r = grid_search(gs);
  CHECK(r.best_score == 0.0);
  CHECK(r.a_best == 0.1);
  CHECK(r.c_best == 0.1);
}

TEST_CASE("grid points share trial streams") {
  GridSearch gs{LossModel::skewed_quartic(3, NoiseModel::gaussian(0.01)),
                MethodDist::parse("spsa bernoulli"),
                {0.2, 0.2, 0.1, 0.3, 0.4, 0.1}, 10.0, 0.606, 0.101,
                ParamVector::constant(3, 1.0)};
  gs.iterations = 50;
  gs.trials_per_point = 3;
  const GridResult r = grid_search(gs);
  TrialBattery tb{gs.loss, {gs.pair}, {0.2, gs.A, gs.alpha, 0.4, gs.gamma}, gs.theta0};
  tb.iterations = 50;
  tb.n_trials = 3;
  tb.curve_window = 0;
  // Pair 0 streams equal the trial index, as in the grid.
  CHECK(run_battery(tb).pairs[0].mean_mse == doctest::Approx(r.table[1].mse).epsilon(1e-14));
}
