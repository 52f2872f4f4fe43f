#pragma once

#include "dgm/config.hpp"
#include "dgm/lqr_oracle.hpp"
#include "dgm/sde.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace dgm {

/// "network", "zero", "oracle" (LQR only) or "alpha=<value>".
struct PolicySpec {
  enum class Kind { network, zero, alpha, oracle };
  Kind kind = Kind::network;
  double alpha = 0.0;

  static PolicySpec parse(const std::string& text);
  std::string to_string() const;
};

/// Problem, network and optional Riccati tables of one configured experiment.
class Experiment {
 public:
  explicit Experiment(ExperimentConfig cfg);

  const ExperimentConfig& config() const noexcept { return cfg_; }
  const ControlProblem& problem() const noexcept { return *problem_; }
  const ValueNet& net() const noexcept { return net_; }
  /// Riccati tables, solved on first use; throws ConfigError for agent problems.
  const RiccatiSolution& riccati() const;

  /// Throws ConfigError when the checkpoint does not fit the configured network.
  void check_checkpoint(const Checkpoint& ck) const;
  std::unique_ptr<Policy> make_policy(const PolicySpec& spec, const Checkpoint* ck) const;

  /// Start states (one per row) and noise seeds of `count` Monte-Carlo scenarios.
  /// Identical for every policy so comparisons use common random numbers.
  void scenarios(int count, Matrix& starts, std::vector<std::uint64_t>& seeds) const;

  TrainResult train(const ProgressFn& progress = {}, std::vector<TrainLogRow>* partial = nullptr) const;

 private:
  ExperimentConfig cfg_;
  std::unique_ptr<ControlProblem> problem_;
  ValueNet net_;
  mutable std::optional<RiccatiSolution> riccati_;
};

struct ComparisonRow {
  std::string policy;
  double mean_cost = 0.0;
  double std_error = 0.0;
  int samples = 0;
};

struct Evaluation {
  std::vector<ComparisonRow> comparison;
  /// Named scalar results (for example rel_l2_t0 for LQR).
  std::vector<std::pair<std::string, double>> metrics;
  std::vector<BoundRow> bound;  ///< LQR only
};

/// Network policy (when a checkpoint is given), zero policy, every configured
/// alpha policy and, for LQR, the oracle policy over the configured seeds.
Evaluation evaluate(const Experiment& exp, const Checkpoint* ck);

/// Columns policy, mean_cost, std_error, samples.
void write_comparison_csv(const std::filesystem::path& path, const std::vector<ComparisonRow>& rows);
/// Columns metric, value.
void write_metrics_csv(const std::filesystem::path& path,
                       const std::vector<std::pair<std::string, double>>& metrics);

}  // namespace dgm
