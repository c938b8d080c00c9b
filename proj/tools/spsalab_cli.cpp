// spsalab: run trial batteries, theory predictions, gain grids and z-studies
// from a shared key = value config file.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "spsalab/commands.hpp"

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> parallel;
  std::optional<std::string> out;

  void attach(CLI::App* cmd, bool config_required) {
    auto* opt = cmd->add_option("config", config, "experiment config file");
    if (config_required) opt->required();
    cmd->add_option("--seed", seed, "override the base seed");
    cmd->add_option("--parallel", parallel, "worker threads")->check(CLI::Range(1u, 4096u));
    cmd->add_option("--out", out, "output directory");
  }

  spsalab::CommandOptions options() const {
    spsalab::CommandOptions o;
    o.seed = seed;
    o.parallel = parallel;
    o.out = out;
    return o;
  }

  std::optional<std::filesystem::path> path() const {
    if (config.empty()) return std::nullopt;
    return std::filesystem::path(config);
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gradient-free stochastic approximation experiments"};
  app.require_subcommand(1);

  Common run_args, theory_args, grid_args, z_args;
  auto* run = app.add_subcommand("run", "Monte Carlo battery: report.json, curve.csv");
  run_args.attach(run, true);

  auto* theory = app.add_subcommand("theory", "asymptotic predictions: theory.json");
  theory_args.attach(theory, false);
  bool moments = false;
  std::optional<std::size_t> moments_p;
  theory->add_flag("--moments", moments, "print the perturbation moment table");
  theory->add_option("--p", moments_p, "dimension for --moments");

  auto* grid = app.add_subcommand("grid", "gain grid search: grid.csv");
  grid_args.attach(grid, true);

  auto* zstudy = app.add_subcommand("zstudy", "P(z <= 0) simulation: zstudy.json");
  z_args.attach(zstudy, false);
  std::vector<std::size_t> z_p;
  std::optional<std::size_t> z_trials;
  std::optional<double> z_range;
  zstudy->add_option("--p", z_p, "dimensions")->delimiter(',');
  zstudy->add_option("--trials", z_trials, "trials per dimension")->check(CLI::PositiveNumber);
  zstudy->add_option("--a-range", z_range, "half-width of the uniform entries")
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : spsalab::kExitSchema;
  }

  if (*run) return spsalab::cmd_run(run_args.config, run_args.options(), std::cout, std::cerr);
  if (*theory) {
    if (!moments && theory_args.config.empty()) {
      std::cerr << "error: theory needs a config file unless --moments is given\n";
      return spsalab::kExitSchema;
    }
    auto o = theory_args.options();
    o.moments = moments;
    o.p = moments_p;
    return spsalab::cmd_theory(theory_args.path(), o, std::cout, std::cerr);
  }
  if (*grid) return spsalab::cmd_grid(grid_args.config, grid_args.options(), std::cout, std::cerr);
  auto o = z_args.options();
  o.zstudy_p = z_p;
  o.zstudy_trials = z_trials;
  o.zstudy_a_range = z_range;
  return spsalab::cmd_zstudy(z_args.path(), o, std::cout, std::cerr);
}
