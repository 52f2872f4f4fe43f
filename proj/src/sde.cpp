#include "dgm/sde.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace dgm {

Matrix Policy::controls_at(const Vector& times, const Matrix& states) const {
  if (times.size() != states.rows()) {
    throw ShapeError("policy: " + std::to_string(times.size()) + " times for " +
                     std::to_string(states.rows()) + " states");
  }
  Matrix u(states.rows(), states.cols());
  for (Eigen::Index i = 0; i < states.rows(); ++i) {
    u.row(i) = controls(times(i), states.row(i)).row(0);
  }
  return u;
}

Matrix ZeroPolicy::controls(double, const Matrix& states) const {
  return Matrix::Zero(states.rows(), states.cols());
}

AlphaPolicy::AlphaPolicy(const ControlProblem& problem, double alpha)
    : problem_(problem), alpha_(alpha) {}

std::string AlphaPolicy::describe() const {
  std::string s = std::to_string(alpha_);
  s.erase(s.find_last_not_of('0') + 1);
  if (!s.empty() && s.back() == '.') s.pop_back();
  return "alpha=" + s;
}

Matrix AlphaPolicy::controls(double, const Matrix& states) const {
  const Vector target = problem_.target_state();
  const auto* agents = dynamic_cast<const AgentProblem*>(&problem_);
  const bool ranked = agents != nullptr && agents->target().is_measure();
  Matrix u(states.rows(), states.cols());
  std::vector<Eigen::Index> order(static_cast<std::size_t>(states.cols()));
  for (Eigen::Index r = 0; r < states.rows(); ++r) {
    if (!ranked) {
      u.row(r) = alpha_ * (target.transpose() - states.row(r));
      continue;
    }
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](auto a, auto b) { return states(r, a) < states(r, b); });
    for (std::size_t k = 0; k < order.size(); ++k) {
      u(r, order[k]) = alpha_ * (target(static_cast<Eigen::Index>(k)) - states(r, order[k]));
    }
  }
  return u;
}

NetworkPolicy::NetworkPolicy(const ControlProblem& problem, const ScalarField& field,
                             ParamStore params)
    : problem_(problem), field_(field), params_(std::move(params)) {
  if (field.state_dim() != problem.dim()) {
    throw ShapeError("network policy: field dimension " + std::to_string(field.state_dim()) +
                     " does not match problem dimension " + std::to_string(problem.dim()));
  }
}

Matrix NetworkPolicy::controls(double t, const Matrix& states) const {
  const Matrix grads = state_gradients(field_, params_, with_time(t, states));
  return problem_.optimal_control_batch(t, states, grads);
}

Matrix NetworkPolicy::controls_at(const Vector& times, const Matrix& states) const {
  const Matrix grads = state_gradients(field_, params_, with_time(times, states));
  Matrix u(states.rows(), states.cols());
  for (Eigen::Index i = 0; i < states.rows(); ++i) {
    u.row(i) = problem_.optimal_control(times(i), states.row(i).transpose(),
                                        grads.row(i).transpose())
                   .transpose();
  }
  return u;
}

Vector euler_step(const ControlProblem& problem, double t, const Vector& x, const Vector& u,
                  double dt, const Vector& noise) {
  if (!(dt > 0.0)) throw Error("euler_step: dt must be positive");
  if (noise.size() != problem.dim()) throw ShapeError("euler_step: noise length mismatch");
  Vector next = x + problem.drift(t, x, u) * dt + problem.noise_scale() * std::sqrt(dt) * noise;
  if (problem.clips_to_domain()) {
    next = next.cwiseMax(problem.domain().lower).cwiseMin(problem.domain().upper);
  }
  return next;
}

Matrix euler_step_batch(const ControlProblem& problem, double t, const Matrix& states,
                        const Matrix& controls, double dt, const Matrix& noise) {
  if (!(dt > 0.0)) throw Error("euler_step: dt must be positive");
  if (noise.rows() != states.rows() || noise.cols() != states.cols()) {
    throw ShapeError("euler_step_batch: noise " + shape_str(noise) + " for states " +
                     shape_str(states));
  }
  Matrix next = states + problem.drift_batch(t, states, controls) * dt +
                (problem.noise_scale() * std::sqrt(dt)) * noise;
  if (problem.clips_to_domain()) {
    next = next.cwiseMax(problem.domain().lower).cwiseMin(problem.domain().upper);
  }
  return next;
}

namespace {

struct BatchResult {
  std::vector<Trajectory> paths;
  Vector costs;
};

BatchResult simulate(const ControlProblem& problem, const Policy& policy, const Matrix& x0s,
                     int steps, std::span<const std::uint64_t> seeds, bool keep_paths) {
  if (steps < 1) throw Error("rollout: steps must be >= 1");
  if (x0s.cols() != problem.dim()) {
    throw ShapeError("rollout: initial states " + shape_str(x0s) + " for dimension " +
                     std::to_string(problem.dim()));
  }
  if (static_cast<Eigen::Index>(seeds.size()) != x0s.rows()) {
    throw ShapeError("rollout: " + std::to_string(seeds.size()) + " seeds for " +
                     std::to_string(x0s.rows()) + " initial states");
  }
  const Eigen::Index count = x0s.rows();
  const int n = problem.dim();
  const double dt = problem.horizon() / steps;

  std::vector<Rng> rngs;
  std::vector<std::normal_distribution<double>> normals(static_cast<std::size_t>(count));
  rngs.reserve(static_cast<std::size_t>(count));
  for (auto s : seeds) rngs.push_back(make_rng(s, 0xE01));

  BatchResult out;
  out.costs = Vector::Zero(count);
  if (keep_paths) {
    out.paths.resize(static_cast<std::size_t>(count));
    for (Eigen::Index i = 0; i < count; ++i) {
      auto& p = out.paths[static_cast<std::size_t>(i)];
      p.times = Vector::LinSpaced(steps + 1, 0.0, problem.horizon());
      p.states.resize(steps + 1, n);
      p.controls.resize(steps, n);
      p.running_costs.resize(steps);
      p.cumulative.resize(steps + 1);
      p.cumulative(0) = 0.0;
      p.seed = seeds[static_cast<std::size_t>(i)];
    }
  }

  Matrix x = x0s;
  Matrix noise(count, n);
  for (int k = 0; k < steps; ++k) {
    const double t = k * dt;
    Matrix u = policy.controls(t, x);
    if (!u.allFinite()) {
      throw NonFiniteError("rollout: policy '" + policy.describe() +
                               "' returned a non-finite control at step " + std::to_string(k),
                           k);
    }
    const Vector f = problem.running_cost_batch(t, x, u);
    for (Eigen::Index i = 0; i < count; ++i) {
      auto& rng = rngs[static_cast<std::size_t>(i)];
      auto& nd = normals[static_cast<std::size_t>(i)];
      for (int j = 0; j < n; ++j) noise(i, j) = nd(rng);
    }
    if (keep_paths) {
      for (Eigen::Index i = 0; i < count; ++i) {
        auto& p = out.paths[static_cast<std::size_t>(i)];
        p.states.row(k) = x.row(i);
        p.controls.row(k) = u.row(i);
        p.running_costs(k) = f(i);
        p.cumulative(k + 1) = p.cumulative(k) + f(i) * dt;
      }
    }
    out.costs += f * dt;
    x = euler_step_batch(problem, t, x, u, dt, noise);
  }
  const Vector g = problem.terminal_cost_batch(x);
  out.costs += g;
  if (keep_paths) {
    for (Eigen::Index i = 0; i < count; ++i) {
      auto& p = out.paths[static_cast<std::size_t>(i)];
      p.states.row(steps) = x.row(i);
      p.terminal_cost = g(i);
      p.cumulative(steps) += g(i);
    }
  }
  return out;
}

}  // namespace

Trajectory rollout(const ControlProblem& problem, const Policy& policy, const Vector& x0,
                   int steps, std::uint64_t seed) {
  const std::uint64_t seeds[] = {seed};
  return std::move(simulate(problem, policy, x0.transpose(), steps, seeds, true).paths.front());
}

std::vector<Trajectory> rollout_batch(const ControlProblem& problem, const Policy& policy,
                                      const Matrix& x0s, int steps,
                                      std::span<const std::uint64_t> seeds) {
  return simulate(problem, policy, x0s, steps, seeds, true).paths;
}

Vector rollout_costs(const ControlProblem& problem, const Policy& policy, const Matrix& x0s,
                     int steps, std::span<const std::uint64_t> seeds) {
  return simulate(problem, policy, x0s, steps, seeds, false).costs;
}

int count_clusters(std::span<const double> x, double kappa) {
  if (!(kappa > 0.0)) throw Error("count_clusters: kappa must be positive");
  if (x.empty()) return 0;
  std::vector<double> s(x.begin(), x.end());
  std::sort(s.begin(), s.end());
  int clusters = 1;
  for (std::size_t i = 1; i < s.size(); ++i) {
    if (s[i] - s[i - 1] > kappa) ++clusters;
  }
  return clusters;
}

int count_clusters(const Vector& x, double kappa) {
  return count_clusters(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())),
                        kappa);
}

void expand_pairs(const Matrix& x0s, std::span<const std::uint64_t> seeds, Matrix& rows,
                  std::vector<std::uint64_t>& row_seeds) {
  rows.resize(x0s.rows() * static_cast<Eigen::Index>(seeds.size()), x0s.cols());
  row_seeds.clear();
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < x0s.rows(); ++i) {
    for (auto s : seeds) {
      rows.row(r++) = x0s.row(i);
      row_seeds.push_back(s);
    }
  }
}

std::vector<PolicyCost> alpha_policy_sweep(const ControlProblem& problem,
                                           std::span<const double> alphas, const Matrix& x0s,
                                           int steps, std::span<const std::uint64_t> seeds) {
  if (alphas.empty()) throw Error("alpha_policy_sweep: no alphas given");
  if (x0s.rows() == 0 || seeds.empty()) throw Error("alpha_policy_sweep: no rollouts requested");
  Matrix rows;
  std::vector<std::uint64_t> row_seeds;
  expand_pairs(x0s, seeds, rows, row_seeds);
  std::vector<PolicyCost> table;
  for (double a : alphas) {
    AlphaPolicy policy(problem, a);
    const Vector c = rollout_costs(problem, policy, rows, steps, row_seeds);
    const double m = c.mean();
    const double var =
        c.size() > 1 ? (c.array() - m).square().sum() / static_cast<double>(c.size() - 1) : 0.0;
    table.push_back({policy.describe(), a, m, std::sqrt(var / static_cast<double>(c.size()))});
  }
  return table;
}

void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& traj) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.precision(17);
  out << "time,agent_id,state,control,running_cost,cum_cost\n";
  const Eigen::Index steps = traj.controls.rows();
  for (Eigen::Index k = 0; k <= steps; ++k) {
    for (Eigen::Index i = 0; i < traj.states.cols(); ++i) {
      const bool last = k == steps;
      out << traj.times(k) << ',' << i << ',' << traj.states(k, i) << ','
          << (last ? 0.0 : traj.controls(k, i)) << ',' << (last ? 0.0 : traj.running_costs(k))
          << ',' << traj.cumulative(k) << '\n';
    }
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace dgm
