#pragma once

#include "dgm/problems.hpp"
#include "dgm/samplers.hpp"
#include "dgm/sde.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <vector>

namespace dgm {

/// Tables of the exact LQR value J(t, x) = x^T P(t) x + q(t) on a uniform grid.
struct RiccatiSolution {
  LqrConstants constants;
  double horizon = 1.0;
  std::vector<double> times;
  std::vector<Eigen::Matrix2d> p;
  std::vector<double> q;

  /// Linear interpolation between grid points; t is clamped to [0, T].
  Eigen::Matrix2d p_at(double t) const;
  double q_at(double t) const;
  /// Right-hand sides of the Riccati system at (P(t), t).
  Eigen::Matrix2d p_rate(double t) const;
  double q_rate(double t) const;
};

/// dP/dt = 2 P M D^-1 M^T P - H^T P - P H - C, P(T) = R;  dq/dt = -sigma^2 tr P, q(T) = 0.
/// Integrated backwards with classical RK4, P symmetrised after every step.
RiccatiSolution riccati_solve(const LqrConstants& constants, double horizon, int steps);

double oracle_value(const RiccatiSolution& sol, double t, const Eigen::Vector2d& x);
Eigen::Vector2d oracle_gradient(const RiccatiSolution& sol, double t, const Eigen::Vector2d& x);
/// u = -D^-1 M^T grad J = -2 D^-1 M^T P(t) x.
Eigen::Vector2d oracle_policy(const RiccatiSolution& sol, double t, const Eigen::Vector2d& x);

class OraclePolicy final : public Policy {
 public:
  explicit OraclePolicy(const RiccatiSolution& sol) : sol_(sol) {}
  Matrix controls(double t, const Matrix& states) const override;
  std::string describe() const override { return "oracle"; }

 private:
  const RiccatiSolution& sol_;
};

/// The oracle value exposed through the field interface; takes no parameters.
class OracleField final : public ScalarField {
 public:
  explicit OracleField(const RiccatiSolution& sol) : sol_(sol) {}
  int state_dim() const override { return 2; }
  ad::FieldJet record_jet(ad::Tape& tape, std::span<const ad::Var> params,
                          const Matrix& points) const override;
  ad::Var record_value(ad::Tape& tape, std::span<const ad::Var> params,
                       ad::Var points) const override;

 private:
  const RiccatiSolution& sol_;
};

struct BoundRow {
  double t = 0.0;
  double lhs_domain = 0.0;    ///< sqrt(T - t) ||residual||_{L2([t, T] x Omega)}
  double lhs_terminal = 0.0;  ///< ||J_theta(T, X_T) - G(X_T)||
  double rhs = 0.0;           ///< ||J_theta(t, X_t) - J(t, X_t)||
  double slack = 0.0;         ///< lhs_domain + lhs_terminal - rhs
  double mc_stderr = 0.0;     ///< bootstrap standard deviation of the slack
  double holds_fraction = 0.0;  ///< share of bootstrap resamples with positive slack
};

struct BoundCheckConfig {
  int samples = 10000;
  int steps = 100;
  int resamples = 1000;
  std::uint64_t seed = 0;
  Eigen::Index chunk = 2500;
};

/// Both sides of the L2 error bound estimated on on-policy Euler paths of the
/// field's own policy started from nu, at t in {0, T/4, T/2, 3T/4}.
std::vector<BoundRow> error_bound_check(const ScalarField& field, const ParamStore& params,
                                     const RiccatiSolution& sol, const LqrProblem& problem,
                                     const InitialDistribution& nu,
                                     const BoundCheckConfig& cfg);

/// Columns t, lhs_domain, lhs_terminal, rhs, slack, mc_stderr, holds_fraction.
void write_bound_csv(const std::filesystem::path& path, const std::vector<BoundRow>& rows);

}  // namespace dgm
