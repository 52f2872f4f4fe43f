#pragma once

#include "dgm/field.hpp"

#include <Eigen/Core>

#include <memory>
#include <string>
#include <vector>

namespace dgm {

/// Per-coordinate box [lower, upper] shared by all state coordinates.
struct Box {
  double lower = -1.0;
  double upper = 1.0;
};

/// Finite-horizon stochastic control problem with additive constant noise
///
///   dX = mu(t, X, u) dt + s dW,   cost = int F(t, X, u) dt + G(X_T)
///
/// whose Hamiltonian is minimised in closed form. For every problem here the
/// HJB residual after substituting the optimal control reads
///
///   r = dJ/dt + F0(x) + mu0(x) . grad J + (s^2 / 2) lap J - 1/2 grad J^T Q grad J
///
/// with F0 the control-free running cost, mu0 the control-free drift and Q
/// the control quadratic.
class ControlProblem {
 public:
  ControlProblem(int dim, double horizon, Box domain);
  virtual ~ControlProblem() = default;

  virtual std::string name() const = 0;

  int dim() const noexcept { return dim_; }
  double horizon() const noexcept { return horizon_; }
  const Box& domain() const noexcept { return domain_; }

  /// Agent models keep states inside the domain box after each Euler step.
  virtual bool clips_to_domain() const = 0;

  virtual Vector drift(double t, const Vector& x, const Vector& u) const = 0;
  virtual double running_cost(double t, const Vector& x, const Vector& u) const = 0;
  virtual double terminal_cost(const Vector& x) const = 0;
  /// Minimiser of the Hamiltonian given grad_x J.
  virtual Vector optimal_control(double t, const Vector& x, const Vector& grad_j) const = 0;

  /// Noise amplitude s in the Euler step x + mu dt + s sqrt(dt) xi.
  virtual double noise_scale() const = 0;
  /// s^2 / 2, the Laplacian coefficient of the generator.
  double generator_diffusion() const noexcept { return 0.5 * noise_scale() * noise_scale(); }
  virtual Matrix control_quadratic() const = 0;

  /// Squared distance to the target used by the relaxation sampler, 1/n normalised.
  virtual double target_discrepancy(const Vector& x) const = 0;
  virtual Vector target_discrepancy_grad(const Vector& x) const = 0;
  /// State inserted verbatim into terminal batches.
  virtual Vector target_state() const = 0;
  /// Multiplier applied to loss terms under n-scaling (n for agent models).
  virtual double objective_scale() const = 0;

  Vector uncontrolled_drift(double t, const Vector& x) const;
  double state_cost(double t, const Vector& x) const;

  /// Residual of the minimised HJB equation at (t, x).
  double hjb_residual(const DerivativeBundle& bundle, double t, const Vector& x) const;
  /// dJ/dt + mu(t,x,u) . grad J + (s^2/2) lap J + F(t,x,u) for an arbitrary control.
  double hamiltonian(const DerivativeBundle& bundle, double t, const Vector& x,
                     const Vector& u) const;

  // Row-batched helpers (one state per row).
  Matrix drift_batch(double t, const Matrix& states, const Matrix& controls) const;
  Matrix optimal_control_batch(double t, const Matrix& states, const Matrix& grads) const;
  Vector running_cost_batch(double t, const Matrix& states, const Matrix& controls) const;
  Vector terminal_cost_batch(const Matrix& states) const;
  /// Control-free running cost and drift per row, at per-row times.
  void residual_terms(const Vector& times, const Matrix& states, Vector& state_costs,
                      Matrix& drifts) const;

 protected:
  void check_dim(const char* op, const Vector& v) const;

 private:
  int dim_;
  double horizon_;
  Box domain_;
};

// ---------------------------------------------------------------------------

struct LqrConstants {
  Eigen::Matrix2d H;
  Eigen::Matrix2d M;
  Eigen::Matrix2d C;
  Eigen::Matrix2d R;
  Eigen::Matrix2d D;
  double sigma = 0.2;

  /// Matrices of the two-state benchmark.
  static LqrConstants defaults();
  void validate() const;
};

/// dX = (H X + M u) dt + sigma dW, cost x^T C x + 1/2 u^T D u, terminal x^T R x.
class LqrProblem final : public ControlProblem {
 public:
  LqrProblem(LqrConstants constants, double horizon, Box domain);

  std::string name() const override { return "lqr"; }
  const LqrConstants& constants() const noexcept { return c_; }

  bool clips_to_domain() const override { return false; }
  Vector drift(double t, const Vector& x, const Vector& u) const override;
  double running_cost(double t, const Vector& x, const Vector& u) const override;
  double terminal_cost(const Vector& x) const override;
  Vector optimal_control(double t, const Vector& x, const Vector& grad_j) const override;
  double noise_scale() const override { return c_.sigma; }
  Matrix control_quadratic() const override;
  double target_discrepancy(const Vector& x) const override;
  Vector target_discrepancy_grad(const Vector& x) const override;
  Vector target_state() const override { return Vector::Zero(2); }
  double objective_scale() const override { return 1.0; }

 private:
  LqrConstants c_;
  Eigen::Matrix2d d_inv_;
};

// ---------------------------------------------------------------------------

/// Point target (one value per agent) or empirical measure target (sorted atoms).
struct Target {
  Vector point;
  std::vector<double> atoms;

  bool is_measure() const noexcept { return !atoms.empty(); }
  static Target uniform_point(int n, double value);
  static Target measure(std::vector<double> atoms);
};

struct AgentCosts {
  double sigma = 0.01;
  double gamma = 0.04;
  double lambda = 1.0;
};

/// n scalar agents with drift interaction(x) + u, noise sqrt(2 sigma) dW and cost
/// (1/2n) sum_i (lambda (x_i - x_d,i)^2 + gamma u_i^2); measure targets replace the
/// state term by (lambda/2n) times the squared 1-D Wasserstein distance.
class AgentProblem : public ControlProblem {
 public:
  AgentProblem(int agents, double horizon, Box domain, AgentCosts costs, Target target);

  const AgentCosts& costs() const noexcept { return costs_; }
  const Target& target() const noexcept { return target_; }

  bool clips_to_domain() const override { return true; }
  Vector drift(double t, const Vector& x, const Vector& u) const override;
  double running_cost(double t, const Vector& x, const Vector& u) const override;
  double terminal_cost(const Vector& x) const override;
  Vector optimal_control(double t, const Vector& x, const Vector& grad_j) const override;
  double noise_scale() const override;
  Matrix control_quadratic() const override;
  double target_discrepancy(const Vector& x) const override;
  Vector target_discrepancy_grad(const Vector& x) const override;
  Vector target_state() const override;
  double objective_scale() const override { return static_cast<double>(dim()); }

  /// Control-free interaction drift.
  virtual Vector interaction(const Vector& x) const = 0;

 private:
  double state_term(const Vector& x) const;

  AgentCosts costs_;
  Target target_;
};

struct SznajdConstants {
  double beta = -3.0;
};

/// Interaction beta (1 - x_i^2) (mean(x) - x_i).
class SznajdProblem final : public AgentProblem {
 public:
  SznajdProblem(int agents, double horizon, Box domain, AgentCosts costs, Target target,
                SznajdConstants constants);

  std::string name() const override { return "sznajd"; }
  Vector interaction(const Vector& x) const override;
  const SznajdConstants& constants() const noexcept { return k_; }

 private:
  SznajdConstants k_;
};

struct HkConstants {
  double beta = 9.0;
  double kappa = 0.2;
};

/// Interaction (beta/n) sum_j 1{|x_i - x_j| <= kappa} (x_j - x_i).
class HkProblem final : public AgentProblem {
 public:
  HkProblem(int agents, double horizon, Box domain, AgentCosts costs, Target target,
            HkConstants constants);

  std::string name() const override { return target().is_measure() ? "hk_measure" : "hk"; }
  Vector interaction(const Vector& x) const override;
  const HkConstants& constants() const noexcept { return k_; }

 private:
  HkConstants k_;
};

/// (1/n) sum_i (sort(x)_i - sort(y)_i)^2: squared 2-Wasserstein distance between
/// the uniform empirical measures on the entries of x and y.
double wasserstein2_1d(std::span<const double> x, std::span<const double> y);
double wasserstein2_1d(const Vector& x, const Vector& y);
/// Gradient of wasserstein2_1d with respect to x (sorted coupling held fixed).
Vector wasserstein2_1d_grad(const Vector& x, const Vector& y);

}  // namespace dgm
