#include "dgm/samplers.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace dgm {

void ClusterConfig::validate() const {
  if (!(box.lower < box.upper)) throw Error("cluster sampler: lower bound must be below upper");
  if (!(sigma_tn > 0.0)) throw Error("cluster sampler: sigma_tn must be positive");
  if (epsilon && !(*epsilon > 0.0)) throw Error("cluster sampler: epsilon must be positive");
}

int truncated_normal_index(double sigma, int n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, sigma);
  for (;;) {
    const double z = std::abs(normal(rng));
    if (z < n) return static_cast<int>(z);
  }
}

namespace {

// U(0, 1]
double open_closed_unit(Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  return 1.0 - unit(rng);
}

}  // namespace

Matrix clustered_sample(const ClusterConfig& cfg, int count, int dim, Rng& rng) {
  cfg.validate();
  if (count < 0 || dim < 1) throw ShapeError("clustered_sample: bad batch shape");
  const double lo = cfg.box.lower;
  const double hi = cfg.box.upper;
  std::uniform_real_distribution<double> anchor(lo, hi);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Matrix out(count, dim);
  Vector anchors(dim);
  for (int i = 0; i < count; ++i) {
    for (int j = 0; j < dim; ++j) anchors(j) = anchor(rng);
    const double eps = cfg.epsilon ? *cfg.epsilon : open_closed_unit(rng);
    for (int j = 0; j < dim; ++j) {
      const double m = anchors(truncated_normal_index(cfg.sigma_tn, dim, rng));
      const double a = unit(rng);
      double x;
      if (cfg.symmetric_offsets) {
        const double left = std::max(lo, m - eps);
        const double right = std::min(hi, m + eps);
        x = left + a * (right - left);
      } else {
        const double b = std::min(m - lo, hi - m);
        x = m + a * std::min(b, eps);
      }
      out(i, j) = std::clamp(x, lo, hi);
    }
  }
  return out;
}

Matrix uniform_states(const Box& box, int count, int dim, Rng& rng) {
  std::uniform_real_distribution<double> u(box.lower, box.upper);
  Matrix out(count, dim);
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = u(rng);
  return out;
}

Matrix InitialDistribution::sample(int count, int dim, Rng& rng) const {
  return kind == Kind::clustered ? clustered_sample(cluster, count, dim, rng)
                                 : uniform_states(cluster.box, count, dim, rng);
}

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::uniform: return "uniform";
    case Provenance::clustered: return "clustered";
    case Provenance::relaxed: return "relaxed";
    case Provenance::on_policy: return "on_policy";
    case Provenance::terminal: return "terminal";
  }
  return "unknown";
}

Matrix Batch::points() const { return with_time(times, states); }

Batch uniform_batch(const ControlProblem& problem, int count, Rng& rng) {
  if (count < 1) throw Error("uniform_batch: count must be >= 1");
  std::uniform_real_distribution<double> ut(0.0, problem.horizon());
  Batch b;
  b.times.resize(count);
  for (int i = 0; i < count; ++i) b.times(i) = ut(rng);
  b.states = uniform_states(problem.domain(), count, problem.dim(), rng);
  b.provenance = Provenance::uniform;
  return b;
}

Matrix terminal_batch(const ControlProblem& problem, int count, const InitialDistribution& nu,
                      Rng& rng) {
  if (count < 2) throw Error("terminal_batch: count must be >= 2");
  Matrix out(count, problem.dim());
  out.topRows(count - 1) = nu.sample(count - 1, problem.dim(), rng);
  out.row(count - 1) = problem.target_state().transpose();
  return out;
}

RelaxState relax_init(const ControlProblem& problem, int count, const InitialDistribution& nu,
                      double relax_rate, double dt, Rng& rng) {
  if (count < 1) throw Error("relax_init: count must be >= 1");
  if (!(relax_rate > 0.0)) throw Error("relax_init: relax_rate must be positive");
  if (!(dt > 0.0) || dt >= problem.horizon()) throw Error("relax_init: dt must lie in (0, T)");
  RelaxState s;
  s.states = nu.sample(count, problem.dim(), rng);
  std::uniform_real_distribution<double> ut(0.0, problem.horizon());
  s.times.resize(count);
  for (int i = 0; i < count; ++i) s.times(i) = ut(rng);
  s.alpha = 1.0;
  s.relax_rate = relax_rate;
  s.dt = dt;
  return s;
}

double relax_alpha_gradient(const ControlProblem& problem, const RelaxState& state,
                            const Matrix& next_states, const Matrix& control_effect) {
  const Eigen::Index count = next_states.rows();
  double penalty = 0.0;
  for (Eigen::Index i = 0; i < count; ++i) {
    const Vector x = next_states.row(i).transpose();
    const Vector dx = -control_effect.row(i).transpose() * state.dt;
    penalty += state.times(i) * problem.target_discrepancy_grad(x).dot(dx);
  }
  return 2.0 * state.alpha + penalty / (problem.horizon() * static_cast<double>(count));
}

Batch relax_advance(RelaxState& state, const ControlProblem& problem, const Policy& policy,
                    const InitialDistribution& nu, Rng& rng) {
  const Eigen::Index count = state.states.rows();
  const int n = problem.dim();
  const double horizon = problem.horizon();
  const double dt = state.dt;

  Matrix u = policy.controls_at(state.times, state.states);
  for (Eigen::Index i = 0; i < count; ++i) {
    if (!u.row(i).allFinite()) {
      throw NonFiniteError("relax_advance: non-finite control for particle " + std::to_string(i),
                           static_cast<long>(i));
    }
  }
  const double damping = 1.0 - state.alpha;

  std::normal_distribution<double> normal;
  Matrix next(count, n);
  Vector next_times(count);
  // Effect of the control on the drift, zero where the step does not depend on alpha.
  Matrix effect = Matrix::Zero(count, n);
  Vector noise(n);
  const Vector zero = Vector::Zero(n);
  for (Eigen::Index i = 0; i < count; ++i) {
    const double t = state.times(i);
    for (int j = 0; j < n; ++j) noise(j) = normal(rng);
    if (t + dt < horizon) {
      const Vector x = state.states.row(i).transpose();
      const Vector ui = u.row(i).transpose();
      const Vector stepped = euler_step(problem, t, x, damping * ui, dt, noise);
      next.row(i) = stepped.transpose();
      next_times(i) = t + dt;
      Vector e = problem.drift(t, x, ui) - problem.drift(t, x, zero);
      if (problem.clips_to_domain()) {
        for (int j = 0; j < n; ++j) {
          if (stepped(j) <= problem.domain().lower || stepped(j) >= problem.domain().upper) {
            e(j) = 0.0;
          }
        }
      }
      effect.row(i) = e.transpose();
    } else {
      next.row(i) = nu.sample(1, n, rng).row(0);
      next_times(i) = std::fmod(t + dt, horizon);
    }
  }

  state.states = std::move(next);
  state.times = std::move(next_times);
  if (!state.relaxed) {
    const double g = relax_alpha_gradient(problem, state, state.states, effect);
    state.alpha = std::clamp(state.alpha - state.relax_rate * g, 0.0, 1.0);
    if (state.alpha == 0.0) state.relaxed = true;
  }
  ++state.sweeps;

  Batch b;
  b.times = state.times;
  b.states = state.states;
  b.provenance = Provenance::relaxed;
  return b;
}

void append_batch_csv(std::ostream& out, const Batch& batch, bool header) {
  out.precision(17);
  if (header) {
    out << "t";
    for (Eigen::Index j = 0; j < batch.states.cols(); ++j) out << ",x" << (j + 1);
    out << ",provenance\n";
  }
  const std::string tag = to_string(batch.provenance);
  for (Eigen::Index i = 0; i < batch.states.rows(); ++i) {
    out << batch.times(i);
    for (Eigen::Index j = 0; j < batch.states.cols(); ++j) out << ',' << batch.states(i, j);
    out << ',' << tag << '\n';
  }
}

void write_batch_csv(const std::filesystem::path& path, const Batch& batch) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  append_batch_csv(out, batch, true);
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

double ks_uniform(std::span<const double> sample, double lower, double upper) {
  if (sample.empty()) throw Error("ks_uniform: empty sample");
  std::vector<double> s(sample.begin(), sample.end());
  std::sort(s.begin(), s.end());
  const double n = static_cast<double>(s.size());
  double d = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double f = std::clamp((s[i] - lower) / (upper - lower), 0.0, 1.0);
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

}  // namespace dgm
