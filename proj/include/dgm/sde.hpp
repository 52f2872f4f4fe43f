#pragma once

#include "dgm/problems.hpp"
#include "dgm/rng.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace dgm {

/// Feedback control u(t, x), evaluated on a batch of states (one per row).
class Policy {
 public:
  virtual ~Policy() = default;
  virtual Matrix controls(double t, const Matrix& states) const = 0;
  /// Row i evaluated at its own time times(i).
  virtual Matrix controls_at(const Vector& times, const Matrix& states) const;
  virtual std::string describe() const = 0;
};

class ZeroPolicy final : public Policy {
 public:
  Matrix controls(double t, const Matrix& states) const override;
  std::string describe() const override { return "zero"; }
};

/// u = alpha (x_d - x). For measure targets each agent is paired with the
/// target atom of equal rank.
class AlphaPolicy final : public Policy {
 public:
  AlphaPolicy(const ControlProblem& problem, double alpha);
  Matrix controls(double t, const Matrix& states) const override;
  std::string describe() const override;
  double alpha() const noexcept { return alpha_; }

 private:
  const ControlProblem& problem_;
  double alpha_;
};

/// u = optimal_control(t, x, grad_x J_theta(t, x)).
class NetworkPolicy final : public Policy {
 public:
  NetworkPolicy(const ControlProblem& problem, const ScalarField& field, ParamStore params);
  Matrix controls(double t, const Matrix& states) const override;
  Matrix controls_at(const Vector& times, const Matrix& states) const override;
  std::string describe() const override { return "network"; }

 private:
  const ControlProblem& problem_;
  const ScalarField& field_;
  ParamStore params_;
};

/// x + mu(t, x, u) dt + s sqrt(dt) noise, clipped to the domain for agent models.
Vector euler_step(const ControlProblem& problem, double t, const Vector& x, const Vector& u,
                  double dt, const Vector& noise);
/// Row-batched Euler step.
Matrix euler_step_batch(const ControlProblem& problem, double t, const Matrix& states,
                        const Matrix& controls, double dt, const Matrix& noise);

struct Trajectory {
  Vector times;          ///< steps + 1
  Matrix states;         ///< (steps + 1) x n
  Matrix controls;       ///< steps x n
  Vector running_costs;  ///< steps, F(t_k, x_k, u_k)
  Vector cumulative;     ///< steps + 1; last entry includes the terminal cost
  double terminal_cost = 0.0;
  std::uint64_t seed = 0;

  double total_cost() const { return cumulative(cumulative.size() - 1); }
};

/// One trajectory on the uniform grid dt = T / steps; noise drawn from seed.
Trajectory rollout(const ControlProblem& problem, const Policy& policy, const Vector& x0,
                   int steps, std::uint64_t seed);

/// Rolls out one trajectory per row of x0s, trajectory i using seeds[i]. Each
/// trajectory matches rollout() for the same (x0, seed).
std::vector<Trajectory> rollout_batch(const ControlProblem& problem, const Policy& policy,
                                      const Matrix& x0s, int steps,
                                      std::span<const std::uint64_t> seeds);

/// Total costs only, for Monte-Carlo estimates.
Vector rollout_costs(const ControlProblem& problem, const Policy& policy, const Matrix& x0s,
                     int steps, std::span<const std::uint64_t> seeds);

/// Connected components of the graph joining agents within kappa of each other.
int count_clusters(std::span<const double> x, double kappa);
int count_clusters(const Vector& x, double kappa);

struct PolicyCost {
  std::string policy;
  double alpha = 0.0;
  double mean_cost = 0.0;
  double std_error = 0.0;
};

/// Mean cumulative cost of alpha-feedback policies over all (x0, seed) pairs.
std::vector<PolicyCost> alpha_policy_sweep(const ControlProblem& problem,
                                           std::span<const double> alphas, const Matrix& x0s,
                                           int steps, std::span<const std::uint64_t> seeds);

/// Expands (x0, seed) pairs in x0-major order into aligned rows and seeds.
void expand_pairs(const Matrix& x0s, std::span<const std::uint64_t> seeds, Matrix& rows,
                  std::vector<std::uint64_t>& row_seeds);

/// Long-format CSV: time, agent_id, state, control, running_cost, cum_cost.
/// At t = T the control and running cost columns are 0 and cum_cost is the total.
void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj);

}  // namespace dgm
