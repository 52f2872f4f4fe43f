#pragma once

#include "dgm/problems.hpp"
#include "dgm/samplers.hpp"
#include "dgm/trainer.hpp"
#include "dgm/value_net.hpp"

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace dgm {

/// Settings of the post-training evaluation (policy comparisons, bound check).
struct EvalConfig {
  int seeds = 50;
  int steps = 100;
  std::vector<double> alphas{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  int bound_samples = 10000;
  int bound_resamples = 1000;
  int riccati_steps = 10000;
};

/// One experiment as read from an INI file. Sections: [experiment], [problem],
/// [network], [train], [initial], [evaluate].
struct ExperimentConfig {
  std::string problem = "lqr";  ///< lqr | sznajd | hk | hk_measure
  std::uint64_t seed = 0;
  std::string name;

  int agents = 2;
  double horizon = 1.0;
  Box box;
  AgentCosts costs;
  double beta = 0.0;
  double kappa = 0.2;
  double target = 0.0;
  std::vector<double> target_atoms;
  double lqr_sigma = 0.2;

  ArchKind arch_kind = ArchKind::residual;
  int width = 123;
  int blocks = 3;

  TrainConfig train;
  InitialDistribution initial;
  /// Terminal sampler law; defaults to the initial law.
  InitialDistribution terminal;
  EvalConfig eval;
  /// When set, every emitted training batch is written here as CSV.
  std::string dump_batches;

  /// Throws ConfigError on inconsistent settings.
  void validate() const;
  std::unique_ptr<ControlProblem> make_problem() const;
  NetArch arch() const;
  int state_dim() const { return problem == "lqr" ? 2 : agents; }
};

/// Parses INI text. Unknown sections or keys and malformed values raise
/// ConfigError naming the source and line.
ExperimentConfig parse_config(const std::string& text, const std::string& source = "<string>");
ExperimentConfig load_config(const std::filesystem::path& path);

}  // namespace dgm
