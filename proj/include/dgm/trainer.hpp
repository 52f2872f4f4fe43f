#pragma once

#include "dgm/residual.hpp"
#include "dgm/samplers.hpp"
#include "dgm/value_net.hpp"

#include <chrono>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

namespace dgm {

struct LossWeights {
  double w1 = 1.0;
  double w2 = 1.0;
  /// Weight of the boundary term (outward optimal control at clipped coordinates).
  double w3 = 0.0;
  /// Multiply both terms by problem.objective_scale().
  bool n_scaling = true;
  /// Weight squared domain residuals by (T - t).
  bool time_weighting = false;
  /// Rows per tape when evaluating the loss.
  Eigen::Index chunk = 128;
};

struct LossTerms {
  double total = 0.0;
  double domain = 0.0;
  double terminal = 0.0;
  double boundary = 0.0;
};

/// domain = mean residual^2, terminal = mean (J(T, z) - G(z))^2 and boundary =
/// sum of squared boundary violations over the domain batch divided by its
/// size, all times n under n-scaling; total = w1 domain + w2 terminal + w3 boundary.
LossTerms dgm_loss(const ScalarField& field, const ParamStore& params,
                   const ControlProblem& problem, const Batch& domain, const Matrix& terminal,
                   const LossWeights& weights);

/// Same as dgm_loss and writes the parameter gradient of the total into grad.
LossTerms dgm_loss_gradient(const ScalarField& field, const ParamStore& params,
                            const ControlProblem& problem, const Batch& domain,
                            const Matrix& terminal, const LossWeights& weights, ParamStore& grad);

class Adam {
 public:
  Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(ParamStore& params, const ParamStore& grads, double lr);
  std::uint64_t steps() const noexcept { return t_; }

 private:
  double beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
  ParamStore m_, v_;
};

/// Multiplies the learning rate by `decay` at the end of every window of
/// `window` losses whose minimum fails to improve on the best earlier loss by
/// the relative tolerance. The first window compares against its first loss.
class PlateauScheduler {
 public:
  PlateauScheduler(double lr, double decay = 0.99, int window = 10, double tolerance = 1e-3);
  /// Records a loss; returns the learning rate to use next.
  double observe(double loss);
  double lr() const noexcept { return lr_; }

 private:
  double lr_, decay_;
  int window_;
  double tolerance_;
  std::vector<double> current_;
  double best_ = std::numeric_limits<double>::infinity();
};

enum class DomainSampler { uniform, clustered, relaxation };
std::string to_string(DomainSampler s);

struct TrainConfig {
  LossWeights weights;
  int batch_domain = 256;
  int batch_terminal = 256;
  int iterations = 600;
  double lr = 1e-3;
  double plateau_decay = 0.99;
  int plateau_window = 10;
  double plateau_tolerance = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  DomainSampler sampler = DomainSampler::relaxation;
  double relax_rate = 0.1;
  /// Euler step of the relaxation sampler and of on-policy rollouts: T / rollout_steps.
  int rollout_steps = 100;
  /// On-policy error is evaluated every this many iterations (0 disables it).
  int monitor_every = 10;
  int monitor_samples = 256;
  double divergence_threshold = 1e6;
  /// Scale of the initial output-layer weights.
  double head_init_scale = 1.0;
  /// Law of the non-target rows of the terminal batch; nu when unset.
  std::optional<InitialDistribution> terminal_law;
  /// When non-empty, every domain batch is appended to this CSV.
  std::filesystem::path dump_batches;

  void validate() const;
};

struct TrainLogRow {
  std::size_t iteration = 0;
  double domain_loss = 0.0;
  double terminal_loss = 0.0;
  double total_loss = 0.0;
  /// NaN on iterations without monitoring.
  double on_policy_error = std::numeric_limits<double>::quiet_NaN();
  double alpha = 0.0;
  double lr = 0.0;
  double wall_ms = 0.0;
};

/// Loss of the field on the law of its own closed-loop process: paths from nu
/// under the field's policy, one uniformly chosen time point per path for the
/// domain term and the terminal states for the terminal term.
double on_policy_error(const ScalarField& field, const ParamStore& params,
                       const ControlProblem& problem, const InitialDistribution& nu,
                       int samples, int steps, const LossWeights& weights, std::uint64_t seed);

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<TrainLogRow> log;
};

using ProgressFn = std::function<void(const TrainLogRow&)>;

/// Training loop with fresh batches every iteration. Throws DivergenceError
/// when the loss exceeds the threshold or is not finite; the log so far is
/// available through the partial_log argument.
TrainResult train(const TrainConfig& cfg, const ControlProblem& problem, const NetArch& arch,
                  const InitialDistribution& nu, const ProgressFn& progress = {},
                  std::vector<TrainLogRow>* partial_log = nullptr);

/// Continues from given parameters (iterations counted from start_iteration).
TrainResult train_from(const TrainConfig& cfg, const ControlProblem& problem,
                       const NetArch& arch, ParamStore params, const InitialDistribution& nu,
                       const ProgressFn& progress = {},
                       std::vector<TrainLogRow>* partial_log = nullptr);

/// Columns iteration, domain_loss, terminal_loss, total_loss, on_policy_error, alpha, lr, wall_ms.
void write_train_log(const std::filesystem::path& path, const std::vector<TrainLogRow>& log);

}  // namespace dgm
