#include "dgm/lqr_oracle.hpp"

#include "dgm/residual.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace dgm {

namespace {

struct RiccatiRhs {
  Eigen::Matrix2d h;
  Eigen::Matrix2d c;
  Eigen::Matrix2d s;  // M D^-1 M^T
  double sigma2;

  explicit RiccatiRhs(const LqrConstants& k)
      : h(k.H), c(k.C), s(k.M * k.D.inverse() * k.M.transpose()), sigma2(k.sigma * k.sigma) {}

  Eigen::Matrix2d p(const Eigen::Matrix2d& P) const {
    return 2.0 * P * s * P - h.transpose() * P - P * h - c;
  }
  double q(const Eigen::Matrix2d& P) const { return -sigma2 * P.trace(); }
};

struct Bracket {
  std::size_t k;
  double w;
};

Bracket locate(const RiccatiSolution& sol, double t) {
  const std::size_t steps = sol.times.size() - 1;
  const double h = sol.horizon / static_cast<double>(steps);
  const double tc = std::clamp(t, 0.0, sol.horizon);
  std::size_t k = std::min(static_cast<std::size_t>(tc / h), steps - 1);
  return {k, (tc - sol.times[k]) / h};
}

}  // namespace

Eigen::Matrix2d RiccatiSolution::p_at(double t) const {
  const auto [k, w] = locate(*this, t);
  return (1.0 - w) * p[k] + w * p[k + 1];
}

double RiccatiSolution::q_at(double t) const {
  const auto [k, w] = locate(*this, t);
  return (1.0 - w) * q[k] + w * q[k + 1];
}

Eigen::Matrix2d RiccatiSolution::p_rate(double t) const {
  return RiccatiRhs(constants).p(p_at(t));
}

double RiccatiSolution::q_rate(double t) const { return RiccatiRhs(constants).q(p_at(t)); }

RiccatiSolution riccati_solve(const LqrConstants& constants, double horizon, int steps) {
  constants.validate();
  if (steps < 100) throw Error("riccati_solve: steps must be >= 100");
  if (!(horizon > 0.0)) throw Error("riccati_solve: horizon must be positive");
  const RiccatiRhs f(constants);
  const double h = horizon / steps;

  RiccatiSolution sol;
  sol.constants = constants;
  sol.horizon = horizon;
  sol.times.resize(static_cast<std::size_t>(steps) + 1);
  sol.p.resize(sol.times.size());
  sol.q.resize(sol.times.size());
  for (int k = 0; k <= steps; ++k) sol.times[static_cast<std::size_t>(k)] = k * h;
  sol.times.back() = horizon;

  Eigen::Matrix2d P = constants.R;
  double q = 0.0;
  sol.p.back() = P;
  sol.q.back() = q;
  for (int k = steps; k > 0; --k) {
    // Step from t_k to t_{k-1}, i.e. with step -h.
    const Eigen::Matrix2d k1 = f.p(P);
    const Eigen::Matrix2d p2 = P - 0.5 * h * k1;
    const Eigen::Matrix2d k2 = f.p(p2);
    const Eigen::Matrix2d p3 = P - 0.5 * h * k2;
    const Eigen::Matrix2d k3 = f.p(p3);
    const Eigen::Matrix2d p4 = P - h * k3;
    const Eigen::Matrix2d k4 = f.p(p4);
    q -= h / 6.0 * (f.q(P) + 2.0 * f.q(p2) + 2.0 * f.q(p3) + f.q(p4));
    P -= h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    P = 0.5 * (P + P.transpose()).eval();
    sol.p[static_cast<std::size_t>(k - 1)] = P;
    sol.q[static_cast<std::size_t>(k - 1)] = q;
  }
  return sol;
}

double oracle_value(const RiccatiSolution& sol, double t, const Eigen::Vector2d& x) {
  return x.dot(sol.p_at(t) * x) + sol.q_at(t);
}

Eigen::Vector2d oracle_gradient(const RiccatiSolution& sol, double t, const Eigen::Vector2d& x) {
  return 2.0 * sol.p_at(t) * x;
}

Eigen::Vector2d oracle_policy(const RiccatiSolution& sol, double t, const Eigen::Vector2d& x) {
  const auto& k = sol.constants;
  return -(k.D.inverse() * k.M.transpose() * oracle_gradient(sol, t, x));
}

Matrix OraclePolicy::controls(double t, const Matrix& states) const {
  if (states.cols() != 2) throw ShapeError("oracle policy: states must have 2 columns");
  Matrix u(states.rows(), 2);
  for (Eigen::Index i = 0; i < states.rows(); ++i) {
    u.row(i) = oracle_policy(sol_, t, states.row(i).transpose()).transpose();
  }
  return u;
}

ad::FieldJet OracleField::record_jet(ad::Tape& tape, std::span<const ad::Var>,
                                     const Matrix& points) const {
  if (points.cols() != 3) throw ShapeError("oracle field: points must have 3 columns");
  const Eigen::Index b = points.rows();
  Matrix value(b, 1), dt(b, 1), grad(b, 2), lap(b, 1);
  for (Eigen::Index i = 0; i < b; ++i) {
    const double t = points(i, 0);
    const Eigen::Vector2d x(points(i, 1), points(i, 2));
    const Eigen::Matrix2d P = sol_.p_at(t);
    value(i, 0) = x.dot(P * x) + sol_.q_at(t);
    dt(i, 0) = x.dot(sol_.p_rate(t) * x) + sol_.q_rate(t);
    grad.row(i) = (2.0 * P * x).transpose();
    lap(i, 0) = 2.0 * P.trace();
  }
  return {tape.constant(std::move(value)), tape.constant(std::move(dt)),
          tape.constant(std::move(grad)), tape.constant(std::move(lap))};
}

ad::Var OracleField::record_value(ad::Tape& tape, std::span<const ad::Var>,
                                  ad::Var points) const {
  if (points.cols() != 3) throw ShapeError("oracle field: points must have 3 columns");
  const Matrix& pts = points.value();
  const Eigen::Index b = pts.rows();
  Matrix value(b, 1);
  Matrix partials(b, 3);
  for (Eigen::Index i = 0; i < b; ++i) {
    const double t = pts(i, 0);
    const Eigen::Vector2d x(pts(i, 1), pts(i, 2));
    const Eigen::Matrix2d P = sol_.p_at(t);
    value(i, 0) = x.dot(P * x) + sol_.q_at(t);
    partials(i, 0) = x.dot(sol_.p_rate(t) * x) + sol_.q_rate(t);
    partials.block(i, 1, 1, 2) = (2.0 * P * x).transpose();
  }
  return tape.record("oracle_value", std::move(value), {points},
                     [points, partials](ad::Tape& t, const Matrix& g) {
                       Matrix d = partials;
                       for (Eigen::Index i = 0; i < d.rows(); ++i) d.row(i) *= g(i, 0);
                       t.accumulate(points, d);
                     });
}

std::vector<BoundRow> error_bound_check(const ScalarField& field, const ParamStore& params,
                                     const RiccatiSolution& sol, const LqrProblem& problem,
                                     const InitialDistribution& nu,
                                     const BoundCheckConfig& cfg) {
  if (cfg.samples < 2 || cfg.steps < 4 || cfg.steps % 4 != 0 || cfg.resamples < 1) {
    throw Error("error_bound_check: need samples >= 2, resamples >= 1, steps a multiple of 4");
  }
  const int n = problem.dim();
  const int steps = cfg.steps;
  const double horizon = problem.horizon();
  const double dt = horizon / steps;
  const Eigen::Index count = cfg.samples;

  Rng rng = make_rng(cfg.seed, 0x7B1);
  Matrix x = nu.sample(cfg.samples, n, rng);
  const NetworkPolicy policy(problem, field, params);
  std::normal_distribution<double> normal;

  // Per-path partial sums of the squared residual over [t_k, T), k = 0..steps.
  Matrix residual_tail = Matrix::Zero(count, steps + 1);
  // Squared value errors at the checked times.
  const int checked = 4;
  Matrix value_err(count, checked);
  Matrix noise(count, n);
  for (int k = 0; k < steps; ++k) {
    const double t = k * dt;
    if (k % (steps / checked) == 0) {
      const Matrix jt = field_values(field, params, with_time(t, x));
      for (Eigen::Index i = 0; i < count; ++i) {
        const double e = jt(i, 0) - oracle_value(sol, t, x.row(i).transpose());
        value_err(i, k / (steps / checked)) = e * e;
      }
    }
    const Vector r = residual_values(field, params, problem, Vector::Constant(count, t), x,
                                     cfg.chunk);
    residual_tail.col(k) = r.array().square() * dt;
    const Matrix u = policy.controls(t, x);
    for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = normal(rng);
    x = euler_step_batch(problem, t, x, u, dt, noise);
  }
  for (int k = steps - 1; k >= 0; --k) residual_tail.col(k) += residual_tail.col(k + 1);
  const Vector terminal = terminal_errors(field, params, problem, x).array().square();

  auto slack_of = [&](const std::vector<Eigen::Index>* idx, int c, double& a, double& b,
                      double& e) {
    const int k = c * (steps / checked);
    double sa = 0.0, sb = 0.0, se = 0.0;
    for (Eigen::Index j = 0; j < count; ++j) {
      const Eigen::Index i = idx ? (*idx)[static_cast<std::size_t>(j)] : j;
      sa += residual_tail(i, k);
      sb += terminal(i);
      se += value_err(i, c);
    }
    const double t = k * dt;
    a = std::sqrt(horizon - t) * std::sqrt(sa / count);
    b = std::sqrt(sb / count);
    e = std::sqrt(se / count);
    return a + b - e;
  };

  std::vector<BoundRow> rows;
  Rng boot = make_rng(cfg.seed, 0xB007);
  std::uniform_int_distribution<Eigen::Index> pick(0, count - 1);
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(count));
  for (int c = 0; c < checked; ++c) {
    BoundRow row;
    row.t = c * (steps / checked) * dt;
    row.slack = slack_of(nullptr, c, row.lhs_domain, row.lhs_terminal, row.rhs);
    double sum = 0.0, sum2 = 0.0;
    int positive = 0;
    for (int r = 0; r < cfg.resamples; ++r) {
      for (auto& v : idx) v = pick(boot);
      double a, b, e;
      const double s = slack_of(&idx, c, a, b, e);
      sum += s;
      sum2 += s * s;
      if (s > 0.0) ++positive;
    }
    const double mean = sum / cfg.resamples;
    row.mc_stderr = std::sqrt(std::max(0.0, sum2 / cfg.resamples - mean * mean));
    row.holds_fraction = static_cast<double>(positive) / cfg.resamples;
    rows.push_back(row);
  }
  return rows;
}

void write_bound_csv(const std::filesystem::path& path, const std::vector<BoundRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.precision(17);
  out << "t,lhs_domain,lhs_terminal,rhs,slack,mc_stderr,holds_fraction\n";
  for (const auto& r : rows) {
    out << r.t << ',' << r.lhs_domain << ',' << r.lhs_terminal << ',' << r.rhs << ',' << r.slack
        << ',' << r.mc_stderr << ',' << r.holds_fraction << '\n';
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace dgm
