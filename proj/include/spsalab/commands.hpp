#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "spsalab/config.hpp"
#include "spsalab/theory.hpp"

namespace spsalab {

/// Process exit codes shared by every command.
enum ExitCode : int {
  kExitOk = 0,
  kExitGeneric = 1,
  kExitMissingFile = 2,
  kExitSchema = 3,
  kExitInvalidPerturbation = 4,
  kExitInvalidGains = 5,
  kExitRegimeRejected = 6,
  kExitAllDiverged = 7,
};

int exit_code_for(ErrorKind kind);

/// Command-line overrides applied on top of the config file.
struct CommandOptions {
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> parallel;
  std::optional<std::string> out;
  /// theory: print the perturbation moment rows instead of running a config.
  bool moments = false;
  /// theory --moments without a config: dimension for the spherical row.
  std::optional<std::size_t> p;
  std::vector<std::size_t> zstudy_p;
  std::optional<std::size_t> zstudy_trials;
  std::optional<double> zstudy_a_range;
};

int cmd_run(const std::filesystem::path& config, const CommandOptions& opts, std::ostream& out,
            std::ostream& err);
int cmd_theory(const std::optional<std::filesystem::path>& config, const CommandOptions& opts,
               std::ostream& out, std::ostream& err);
int cmd_grid(const std::filesystem::path& config, const CommandOptions& opts, std::ostream& out,
             std::ostream& err);
int cmd_zstudy(const std::optional<std::filesystem::path>& config, const CommandOptions& opts,
               std::ostream& out, std::ostream& err);

// Document builders behind the commands. Output contains no timestamps or
// host details, so equal inputs give byte-identical text.

std::string report_json(const ExperimentConfig& cfg, const TrialBattery& tb,
                        const MseReport& report);
std::string curve_csv(const ExperimentConfig& cfg, const MseReport& report);
/// Throws when the loss has no analytic third derivatives or the regime is rejected.
std::string theory_json(const ExperimentConfig& cfg);
std::string grid_csv(const ExperimentConfig& cfg,
                     const std::vector<std::pair<MethodDist, GridResult>>& results);
std::string zstudy_json(const std::optional<std::string>& config_hash, std::uint64_t seed,
                        double a_range, const std::vector<ZStudy>& rows);
/// Four rows: Gaussian RD, Uniformly Spherical RD, Bernoulli SP, U-shape SP.
std::string moments_table(std::size_t p);

/// Seed used for dimension p inside a z-study run.
std::uint64_t zstudy_seed(std::uint64_t seed, std::size_t p);

}  // namespace spsalab
