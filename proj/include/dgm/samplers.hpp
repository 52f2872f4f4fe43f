#pragma once

#include "dgm/problems.hpp"
#include "dgm/rng.hpp"
#include "dgm/sde.hpp"

#include <filesystem>
#include <ostream>
#include <optional>
#include <string>

namespace dgm {

/// Clustered initial states: each sample gathers n anchors drawn uniformly in
/// the box, picking indices from a truncated normal so that small indices
/// repeat, then offsets every coordinate away from its anchor.
struct ClusterConfig {
  Box box;
  double sigma_tn = 3.5;
  /// Fixed offset radius; unset means a fresh U(0, 1] draw per sample.
  std::optional<double> epsilon;
  /// false: x = m + a min(b, eps) with a ~ U[0, 1] and b the distance to the
  /// nearer bound. true: x uniform on [m - eps, m + eps] intersected with the box.
  bool symmetric_offsets = false;

  void validate() const;
};

/// 0-based anchor index: |z| with z ~ N(0, sigma), redrawn until below n, floored.
int truncated_normal_index(double sigma, int n, Rng& rng);

/// count x dim matrix of clustered samples.
Matrix clustered_sample(const ClusterConfig& cfg, int count, int dim, Rng& rng);

/// count x dim matrix, i.i.d. uniform in the box.
Matrix uniform_states(const Box& box, int count, int dim, Rng& rng);

/// Initial-state law nu.
struct InitialDistribution {
  enum class Kind { uniform, clustered };
  Kind kind = Kind::uniform;
  ClusterConfig cluster;

  Matrix sample(int count, int dim, Rng& rng) const;
};

enum class Provenance { uniform, clustered, relaxed, on_policy, terminal };
std::string to_string(Provenance p);

struct Batch {
  Vector times;
  Matrix states;
  Provenance provenance = Provenance::uniform;

  Eigen::Index size() const noexcept { return states.rows(); }
  Matrix points() const;
};

/// (t, x) i.i.d. uniform on [0, T] x box^n.
Batch uniform_batch(const ControlProblem& problem, int count, Rng& rng);

/// count - 1 rows from nu plus one exact copy of the target state (last row).
Matrix terminal_batch(const ControlProblem& problem, int count, const InitialDistribution& nu,
                      Rng& rng);

/// Particle ensemble of the controlled drift relaxation sampler.
struct RelaxState {
  Matrix states;
  Vector times;
  double alpha = 1.0;
  double relax_rate = 0.1;
  double dt = 0.0;
  std::size_t sweeps = 0;
  /// Set once alpha has reached 0; alpha stays there afterwards.
  bool relaxed = false;
};

/// alpha = 1, times uniform on [0, T), states from nu.
RelaxState relax_init(const ControlProblem& problem, int count, const InitialDistribution& nu,
                      double relax_rate, double dt, Rng& rng);

/// Advances every particle one Euler step under (1 - alpha) u with u the
/// current policy, resamples particles that pass T, then updates alpha.
/// Returns the post-step ensemble.
Batch relax_advance(RelaxState& state, const ControlProblem& problem, const Policy& policy,
                    const InitialDistribution& nu, Rng& rng);

/// Alpha gradient used by relax_advance: 2 alpha + (1/(T N)) sum_i t_i dW_i/dalpha,
/// where dx_i/dalpha = -(mu(x, u) - mu(x, 0)) dt for unclipped coordinates.
double relax_alpha_gradient(const ControlProblem& problem, const RelaxState& state,
                            const Matrix& next_states, const Matrix& control_effect);

/// CSV with columns t, x1..xn, provenance.
void write_batch_csv(const std::filesystem::path& path, const Batch& batch);
/// Appends the rows of one batch, preceded by the header when `header` is set.
void append_batch_csv(std::ostream& out, const Batch& batch, bool header);

/// Kolmogorov-Smirnov statistic of a sample against U[lower, upper].
double ks_uniform(std::span<const double> sample, double lower, double upper);

}  // namespace dgm
