#include "dgm/problems.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dgm {

ControlProblem::ControlProblem(int dim, double horizon, Box domain)
    : dim_(dim), horizon_(horizon), domain_(domain) {
  if (dim < 1) throw Error("problem: dimension must be >= 1");
  if (!(horizon > 0.0)) throw Error("problem: horizon must be positive");
  if (!(domain.lower < domain.upper)) throw Error("problem: domain lower bound must be < upper");
}

void ControlProblem::check_dim(const char* op, const Vector& v) const {
  if (v.size() != dim_) {
    throw ShapeError(std::string(name()) + "." + op + ": expected length " +
                     std::to_string(dim_) + ", got " + std::to_string(v.size()));
  }
}

Vector ControlProblem::uncontrolled_drift(double t, const Vector& x) const {
  return drift(t, x, Vector::Zero(dim_));
}

double ControlProblem::state_cost(double t, const Vector& x) const {
  return running_cost(t, x, Vector::Zero(dim_));
}

double ControlProblem::hjb_residual(const DerivativeBundle& b, double t, const Vector& x) const {
  check_dim("hjb_residual", x);
  check_dim("hjb_residual", b.grad_x);
  const Vector& g = b.grad_x;
  return b.dt + state_cost(t, x) + uncontrolled_drift(t, x).dot(g) +
         generator_diffusion() * b.laplacian - 0.5 * g.dot(control_quadratic() * g);
}

double ControlProblem::hamiltonian(const DerivativeBundle& b, double t, const Vector& x,
                                   const Vector& u) const {
  check_dim("hamiltonian", b.grad_x);
  return b.dt + drift(t, x, u).dot(b.grad_x) + generator_diffusion() * b.laplacian +
         running_cost(t, x, u);
}

Matrix ControlProblem::drift_batch(double t, const Matrix& states, const Matrix& controls) const {
  if (states.cols() != dim_ || controls.rows() != states.rows() || controls.cols() != dim_) {
    throw ShapeError(name() + ".drift_batch: states " + shape_str(states) + ", controls " +
                     shape_str(controls));
  }
  Matrix out(states.rows(), dim_);
  for (Eigen::Index i = 0; i < states.rows(); ++i) {
    out.row(i) = drift(t, states.row(i).transpose(), controls.row(i).transpose()).transpose();
  }
  return out;
}

Matrix ControlProblem::optimal_control_batch(double t, const Matrix& states,
                                             const Matrix& grads) const {
  if (states.cols() != dim_ || grads.rows() != states.rows() || grads.cols() != dim_) {
    throw ShapeError(name() + ".optimal_control_batch: states " + shape_str(states) +
                     ", gradients " + shape_str(grads));
  }
  Matrix out(states.rows(), dim_);
  for (Eigen::Index i = 0; i < states.rows(); ++i) {
    out.row(i) =
        optimal_control(t, states.row(i).transpose(), grads.row(i).transpose()).transpose();
  }
  return out;
}

Vector ControlProblem::running_cost_batch(double t, const Matrix& states,
                                          const Matrix& controls) const {
  Vector out(states.rows());
  for (Eigen::Index i = 0; i < states.rows(); ++i) {
    out(i) = running_cost(t, states.row(i).transpose(), controls.row(i).transpose());
  }
  return out;
}

Vector ControlProblem::terminal_cost_batch(const Matrix& states) const {
  Vector out(states.rows());
  for (Eigen::Index i = 0; i < states.rows(); ++i) out(i) = terminal_cost(states.row(i).transpose());
  return out;
}

void ControlProblem::residual_terms(const Vector& times, const Matrix& states,
                                    Vector& state_costs, Matrix& drifts) const {
  if (states.cols() != dim_ || times.size() != states.rows()) {
    throw ShapeError(name() + ".residual_terms: states " + shape_str(states) + " with " +
                     std::to_string(times.size()) + " times");
  }
  state_costs.resize(states.rows());
  drifts.resize(states.rows(), dim_);
  for (Eigen::Index i = 0; i < states.rows(); ++i) {
    const Vector x = states.row(i).transpose();
    state_costs(i) = state_cost(times(i), x);
    drifts.row(i) = uncontrolled_drift(times(i), x).transpose();
  }
}

// ---------------------------------------------------------------------------
// LQR

LqrConstants LqrConstants::defaults() {
  LqrConstants c;
  c.H << 0.1, 0.0, 0.05, 0.1;
  c.M << 1.0, 0.0, 0.0, 1.0;
  c.C << 2.0, 0.0, 0.0, 2.0;
  c.R << 0.1, 0.0, 0.0, 0.1;
  c.D << 0.2, 0.0, 0.0, 0.2;
  c.sigma = 0.2;
  return c;
}

namespace {

bool symmetric_psd(const Eigen::Matrix2d& m, bool strict) {
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12) return false;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(m);
  const double lo = es.eigenvalues().minCoeff();
  return strict ? lo > 0.0 : lo >= -1e-12;
}

}  // namespace

void LqrConstants::validate() const {
  if (!symmetric_psd(D, true)) throw Error("lqr: D must be symmetric positive definite");
  if (!symmetric_psd(C, false)) throw Error("lqr: C must be symmetric positive semidefinite");
  if (!symmetric_psd(R, false)) throw Error("lqr: R must be symmetric positive semidefinite");
  if (!(sigma >= 0.0)) throw Error("lqr: sigma must be non-negative");
}

LqrProblem::LqrProblem(LqrConstants constants, double horizon, Box domain)
    : ControlProblem(2, horizon, domain), c_(constants) {
  c_.validate();
  d_inv_ = c_.D.inverse();
}

Vector LqrProblem::drift(double, const Vector& x, const Vector& u) const {
  check_dim("drift", x);
  check_dim("drift", u);
  return c_.H * x + c_.M * u;
}

double LqrProblem::running_cost(double, const Vector& x, const Vector& u) const {
  check_dim("running_cost", x);
  check_dim("running_cost", u);
  return x.dot(c_.C * x) + 0.5 * u.dot(c_.D * u);
}

double LqrProblem::terminal_cost(const Vector& x) const {
  check_dim("terminal_cost", x);
  return x.dot(c_.R * x);
}

Vector LqrProblem::optimal_control(double, const Vector&, const Vector& grad_j) const {
  check_dim("optimal_control", grad_j);
  return -d_inv_ * c_.M.transpose() * grad_j;
}

Matrix LqrProblem::control_quadratic() const {
  Eigen::Matrix2d q = c_.M * d_inv_ * c_.M.transpose();
  return q;
}

double LqrProblem::target_discrepancy(const Vector& x) const {
  check_dim("target_discrepancy", x);
  return x.squaredNorm() / 2.0;
}

Vector LqrProblem::target_discrepancy_grad(const Vector& x) const {
  check_dim("target_discrepancy_grad", x);
  return x;
}

// ---------------------------------------------------------------------------
// Agent models

Target Target::uniform_point(int n, double value) {
  Target t;
  t.point = Vector::Constant(n, value);
  return t;
}

Target Target::measure(std::vector<double> atoms) {
  if (atoms.empty()) throw Error("target: measure needs at least one atom");
  Target t;
  std::sort(atoms.begin(), atoms.end());
  t.atoms = std::move(atoms);
  return t;
}

AgentProblem::AgentProblem(int agents, double horizon, Box domain, AgentCosts costs,
                           Target target)
    : ControlProblem(agents, horizon, domain), costs_(costs), target_(std::move(target)) {
  if (!(costs_.gamma > 0.0)) throw Error("agent problem: gamma must be positive");
  if (!(costs_.sigma >= 0.0)) throw Error("agent problem: sigma must be non-negative");
  if (!(costs_.lambda >= 0.0)) throw Error("agent problem: lambda must be non-negative");
  const auto in_domain = [&](double v) { return v >= domain.lower && v <= domain.upper; };
  if (target_.is_measure()) {
    if (static_cast<int>(target_.atoms.size()) != agents) {
      throw Error("agent problem: measure target needs one atom per agent (" +
                  std::to_string(agents) + "), got " + std::to_string(target_.atoms.size()));
    }
    if (!std::all_of(target_.atoms.begin(), target_.atoms.end(), in_domain)) {
      throw Error("agent problem: target atoms must lie in the domain");
    }
  } else {
    if (target_.point.size() != agents) {
      throw Error("agent problem: point target needs one entry per agent");
    }
    if (!std::all_of(target_.point.begin(), target_.point.end(), in_domain)) {
      throw Error("agent problem: target must lie in the domain");
    }
  }
}

double AgentProblem::state_term(const Vector& x) const {
  if (target_.is_measure()) {
    // Sum (not mean) of sorted squared gaps: coincides with |x - x_d|^2 for a
    // single repeated atom.
    return static_cast<double>(dim()) * wasserstein2_1d(x, Eigen::Map<const Vector>(
                                                               target_.atoms.data(), dim()));
  }
  return (x - target_.point).squaredNorm();
}

Vector AgentProblem::drift(double, const Vector& x, const Vector& u) const {
  check_dim("drift", x);
  check_dim("drift", u);
  return interaction(x) + u;
}

double AgentProblem::running_cost(double, const Vector& x, const Vector& u) const {
  check_dim("running_cost", x);
  check_dim("running_cost", u);
  const double n = static_cast<double>(dim());
  return (costs_.lambda * state_term(x) + costs_.gamma * u.squaredNorm()) / (2.0 * n);
}

double AgentProblem::terminal_cost(const Vector& x) const {
  check_dim("terminal_cost", x);
  return costs_.lambda * state_term(x) / (2.0 * static_cast<double>(dim()));
}

Vector AgentProblem::optimal_control(double, const Vector&, const Vector& grad_j) const {
  check_dim("optimal_control", grad_j);
  return -(static_cast<double>(dim()) / costs_.gamma) * grad_j;
}

double AgentProblem::noise_scale() const { return std::sqrt(2.0 * costs_.sigma); }

Matrix AgentProblem::control_quadratic() const {
  return (static_cast<double>(dim()) / costs_.gamma) * Matrix::Identity(dim(), dim());
}

double AgentProblem::target_discrepancy(const Vector& x) const {
  check_dim("target_discrepancy", x);
  if (target_.is_measure()) {
    return wasserstein2_1d(x, Eigen::Map<const Vector>(target_.atoms.data(), dim()));
  }
  return (x - target_.point).squaredNorm() / static_cast<double>(dim());
}

Vector AgentProblem::target_discrepancy_grad(const Vector& x) const {
  check_dim("target_discrepancy_grad", x);
  if (target_.is_measure()) {
    return wasserstein2_1d_grad(x, Eigen::Map<const Vector>(target_.atoms.data(), dim()));
  }
  return (2.0 / static_cast<double>(dim())) * (x - target_.point);
}

Vector AgentProblem::target_state() const {
  if (target_.is_measure()) return Eigen::Map<const Vector>(target_.atoms.data(), dim());
  return target_.point;
}

SznajdProblem::SznajdProblem(int agents, double horizon, Box domain, AgentCosts costs,
                             Target target, SznajdConstants constants)
    : AgentProblem(agents, horizon, domain, costs, std::move(target)), k_(constants) {}

Vector SznajdProblem::interaction(const Vector& x) const {
  check_dim("interaction", x);
  const double mean = x.mean();
  return (k_.beta * (1.0 - x.array().square()) * (mean - x.array())).matrix();
}

HkProblem::HkProblem(int agents, double horizon, Box domain, AgentCosts costs, Target target,
                     HkConstants constants)
    : AgentProblem(agents, horizon, domain, costs, std::move(target)), k_(constants) {
  if (!(k_.kappa > 0.0)) throw Error("hk: kappa must be positive");
}

Vector HkProblem::interaction(const Vector& x) const {
  check_dim("interaction", x);
  const Eigen::Index n = x.size();
  Vector out = Vector::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double gap = x(j) - x(i);
      if (std::abs(gap) <= k_.kappa) acc += gap;
    }
    out(i) = k_.beta / static_cast<double>(n) * acc;
  }
  return out;
}

// ---------------------------------------------------------------------------

double wasserstein2_1d(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw ShapeError("wasserstein2_1d: lengths " + std::to_string(x.size()) + " and " +
                     std::to_string(y.size()) + " differ");
  }
  if (x.empty()) throw ShapeError("wasserstein2_1d: empty measures");
  std::vector<double> xs(x.begin(), x.end());
  std::vector<double> ys(y.begin(), y.end());
  std::sort(xs.begin(), xs.end());
  std::sort(ys.begin(), ys.end());
  double acc = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) acc += (xs[i] - ys[i]) * (xs[i] - ys[i]);
  return acc / static_cast<double>(xs.size());
}

double wasserstein2_1d(const Vector& x, const Vector& y) {
  return wasserstein2_1d(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())),
                         std::span<const double>(y.data(), static_cast<std::size_t>(y.size())));
}

Vector wasserstein2_1d_grad(const Vector& x, const Vector& y) {
  if (x.size() != y.size()) throw ShapeError("wasserstein2_1d_grad: length mismatch");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(x.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return x(a) < x(b); });
  std::vector<double> ys(y.begin(), y.end());
  std::sort(ys.begin(), ys.end());
  Vector g(x.size());
  const double n = static_cast<double>(x.size());
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    g(order[rank]) = 2.0 / n * (x(order[rank]) - ys[rank]);
  }
  return g;
}

}  // namespace dgm
