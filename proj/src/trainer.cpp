#include "dgm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace dgm {

namespace {

void add_into(ParamStore& acc, const ParamStore& g) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
}

// Sum over chunks of factor * sum(weight_i * e_i^2); gradients accumulate into grad when non-null.
template <class Record>
double chunked_sum_squares(const ParamStore& params, Eigen::Index rows, Eigen::Index chunk,
                           double factor, const Vector* row_weights, const Record& record,
                           ParamStore* grad) {
  double total = 0.0;
  for (Eigen::Index start = 0; start < rows; start += chunk) {
    const Eigen::Index count = std::min(chunk, rows - start);
    ad::Tape tape;
    const bool trainable = grad != nullptr && factor != 0.0;
    auto bound = ad::bind(tape, params, trainable);
    ad::Var sq = ad::square(record(tape, std::span<const ad::Var>(bound), start, count));
    if (row_weights) {
      sq = ad::mul(sq, tape.constant(row_weights->segment(start, count)));
    }
    ad::Var s = ad::sum(sq);
    total += s.value()(0, 0);
    if (trainable) {
      tape.backward(ad::scale(s, factor));
      add_into(*grad, ad::gradients(tape, bound, params));
    }
  }
  return total;
}

LossTerms loss_impl(const ScalarField& field, const ParamStore& params,
                    const ControlProblem& problem, const Batch& domain, const Matrix& terminal,
                    const LossWeights& w, ParamStore* grad) {
  if (domain.size() == 0 || terminal.rows() == 0) throw Error("dgm_loss: empty batch");
  if (domain.times.size() != domain.states.rows()) throw ShapeError("dgm_loss: batch times/states");
  if (w.chunk < 1) throw Error("dgm_loss: chunk must be >= 1");
  const double scale = w.n_scaling ? problem.objective_scale() : 1.0;
  if (grad) *grad = params.zeros_like();

  Vector time_weights;
  if (w.time_weighting) {
    time_weights = (problem.horizon() - domain.times.array()).max(0.0).matrix();
  }
  const double nd = static_cast<double>(domain.size());
  const double nt = static_cast<double>(terminal.rows());

  const double domain_sum = chunked_sum_squares(
      params, domain.size(), w.chunk, w.w1 * scale / nd, w.time_weighting ? &time_weights : nullptr,
      [&](ad::Tape& tape, std::span<const ad::Var> bound, Eigen::Index start, Eigen::Index count) {
        return record_residuals(tape, field, bound, problem, domain.times.segment(start, count),
                                domain.states.middleRows(start, count));
      },
      grad);
  const double terminal_sum = chunked_sum_squares(
      params, terminal.rows(), std::max<Eigen::Index>(w.chunk, 512), w.w2 * scale / nt, nullptr,
      [&](ad::Tape& tape, std::span<const ad::Var> bound, Eigen::Index start, Eigen::Index count) {
        return record_terminal_errors(tape, field, bound, problem,
                                      terminal.middleRows(start, count));
      },
      grad);

  double boundary_sum = 0.0;
  if (w.w3 > 0.0) {
    const std::vector<Eigen::Index> rows = boundary_rows(problem, domain.states);
    if (!rows.empty()) {
      const Eigen::Index nb = static_cast<Eigen::Index>(rows.size());
      Vector bt(nb);
      Matrix bx(nb, domain.states.cols());
      for (Eigen::Index k = 0; k < nb; ++k) {
        bt(k) = domain.times(rows[static_cast<std::size_t>(k)]);
        bx.row(k) = domain.states.row(rows[static_cast<std::size_t>(k)]);
      }
      boundary_sum = chunked_sum_squares(
          params, nb, w.chunk, w.w3 * scale / nd, nullptr,
          [&](ad::Tape& tape, std::span<const ad::Var> bound, Eigen::Index start, Eigen::Index count) {
            return record_boundary_violations(tape, field, bound, problem, bt.segment(start, count),
                                              bx.middleRows(start, count));
          },
          grad);
    }
  }

  LossTerms out;
  out.domain = scale * domain_sum / nd;
  out.terminal = scale * terminal_sum / nt;
  out.boundary = scale * boundary_sum / nd;
  out.total = w.w1 * out.domain + w.w2 * out.terminal + w.w3 * out.boundary;
  return out;
}

}  // namespace

LossTerms dgm_loss(const ScalarField& field, const ParamStore& params,
                   const ControlProblem& problem, const Batch& domain, const Matrix& terminal,
                   const LossWeights& weights) {
  return loss_impl(field, params, problem, domain, terminal, weights, nullptr);
}

LossTerms dgm_loss_gradient(const ScalarField& field, const ParamStore& params,
                            const ControlProblem& problem, const Batch& domain,
                            const Matrix& terminal, const LossWeights& weights, ParamStore& grad) {
  return loss_impl(field, params, problem, domain, terminal, weights, &grad);
}

// ---------------------------------------------------------------------------

Adam::Adam(double beta1, double beta2, double eps) : beta1_(beta1), beta2_(beta2), eps_(eps) {
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(eps > 0.0)) {
    throw ConfigError("adam: need 0 <= beta < 1 and eps > 0");
  }
}

void Adam::step(ParamStore& params, const ParamStore& grads, double lr) {
  if (!params.same_layout(grads)) throw ShapeError("adam: gradient layout does not match params");
  if (m_.empty()) {
    m_ = params.zeros_like();
    v_ = params.zeros_like();
  } else if (!m_.same_layout(params)) {
    throw ShapeError("adam: parameter layout changed between steps");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto m = m_[i].array();
    auto v = v_[i].array();
    const auto g = grads[i].array();
    m = beta1_ * m + (1.0 - beta1_) * g;
    v = beta2_ * v + (1.0 - beta2_) * g.square();
    params[i].array() -= lr * (m / c1) / ((v / c2).sqrt() + eps_);
  }
}

PlateauScheduler::PlateauScheduler(double lr, double decay, int window, double tolerance)
    : lr_(lr), decay_(decay), window_(window), tolerance_(tolerance) {
  if (!(lr > 0.0) || !(decay > 0.0 && decay <= 1.0) || window < 1 || !(tolerance >= 0.0)) {
    throw ConfigError("plateau scheduler: invalid settings");
  }
}

double PlateauScheduler::observe(double loss) {
  current_.push_back(loss);
  if (static_cast<int>(current_.size()) < window_) return lr_;
  const double reference = std::isfinite(best_) ? best_ : current_.front();
  const double low = *std::min_element(current_.begin(), current_.end());
  if (!(low < (1.0 - tolerance_) * reference)) lr_ *= decay_;
  best_ = std::min(best_, low);
  current_.clear();
  return lr_;
}

std::string to_string(DomainSampler s) {
  switch (s) {
    case DomainSampler::uniform: return "uniform";
    case DomainSampler::clustered: return "clustered";
    case DomainSampler::relaxation: return "relaxation";
  }
  return "unknown";
}

void TrainConfig::validate() const {
  if (!(weights.w1 >= 0.0) || !(weights.w2 >= 0.0) || weights.w1 + weights.w2 == 0.0) {
    throw ConfigError("train: w1 and w2 must be non-negative and not both zero");
  }
  if (!(weights.w3 >= 0.0)) throw ConfigError("train: w3 must be non-negative");
  if (batch_domain < 1) throw ConfigError("train: batch_domain must be >= 1");
  if (batch_terminal < 2) throw ConfigError("train: batch_terminal must be >= 2");
  if (iterations < 0) throw ConfigError("train: iterations must be >= 0");
  if (!(lr > 0.0)) throw ConfigError("train: lr must be positive");
  if (!(relax_rate > 0.0)) throw ConfigError("train: relax_rate must be positive");
  if (rollout_steps < 1) throw ConfigError("train: rollout_steps must be >= 1");
  if (monitor_every < 0 || monitor_samples < 1) throw ConfigError("train: bad monitoring settings");
  if (!(divergence_threshold > 0.0)) throw ConfigError("train: divergence threshold must be positive");
  if (!std::isfinite(head_init_scale)) throw ConfigError("train: head_init_scale must be finite");
  if (weights.chunk < 1) throw ConfigError("train: chunk must be >= 1");
}

// ---------------------------------------------------------------------------

double on_policy_error(const ScalarField& field, const ParamStore& params,
                       const ControlProblem& problem, const InitialDistribution& nu,
                       int samples, int steps, const LossWeights& weights, std::uint64_t seed) {
  if (samples < 1 || steps < 1) throw Error("on_policy_error: samples and steps must be >= 1");
  const int n = problem.dim();
  const double dt = problem.horizon() / steps;
  Rng rng = make_rng(seed, 0x0B0);
  Matrix x = nu.sample(samples, n, rng);
  std::uniform_int_distribution<int> pick(0, steps - 1);
  std::vector<int> when(static_cast<std::size_t>(samples));
  for (auto& k : when) k = pick(rng);

  const NetworkPolicy policy(problem, field, params);
  std::normal_distribution<double> normal;
  Batch domain;
  domain.times.resize(samples);
  domain.states.resize(samples, n);
  domain.provenance = Provenance::on_policy;
  Matrix noise(samples, n);
  for (int k = 0; k < steps; ++k) {
    const double t = k * dt;
    for (int i = 0; i < samples; ++i) {
      if (when[static_cast<std::size_t>(i)] == k) {
        domain.times(i) = t;
        domain.states.row(i) = x.row(i);
      }
    }
    const Matrix u = policy.controls(t, x);
    for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = normal(rng);
    x = euler_step_batch(problem, t, x, u, dt, noise);
  }
  return dgm_loss(field, params, problem, domain, x, weights).total;
}

TrainResult train(const TrainConfig& cfg, const ControlProblem& problem, const NetArch& arch,
                  const InitialDistribution& nu, const ProgressFn& progress,
                  std::vector<TrainLogRow>* partial_log) {
  return train_from(cfg, problem, arch, init_params(arch, cfg.seed, cfg.head_init_scale), nu, progress, partial_log);
}

TrainResult train_from(const TrainConfig& cfg, const ControlProblem& problem,
                       const NetArch& arch, ParamStore params, const InitialDistribution& nu,
                       const ProgressFn& progress, std::vector<TrainLogRow>* partial_log) {
  cfg.validate();
  arch.validate();
  if (arch.input_dim != problem.dim() + 1) {
    throw ShapeError("train: network input_dim " + std::to_string(arch.input_dim) +
                     " does not fit problem dimension " + std::to_string(problem.dim()));
  }
  const ValueNet net(arch);
  net.check_params(params);

  Rng rng = make_rng(cfg.seed, 0x7A1);
  Adam adam(cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  PlateauScheduler schedule(cfg.lr, cfg.plateau_decay, cfg.plateau_window, cfg.plateau_tolerance);
  const double dt = problem.horizon() / cfg.rollout_steps;

  RelaxState relax;
  if (cfg.sampler == DomainSampler::relaxation) {
    relax = relax_init(problem, cfg.batch_domain, nu, cfg.relax_rate, dt, rng);
  }

  TrainResult result;
  std::vector<TrainLogRow>& log = partial_log ? *partial_log : result.log;
  log.clear();
  log.reserve(static_cast<std::size_t>(cfg.iterations));
  ParamStore grad;
  std::ofstream dump;
  if (!cfg.dump_batches.empty()) {
    dump.open(cfg.dump_batches);
    if (!dump) throw IoError("cannot open '" + cfg.dump_batches.string() + "' for writing");
  }
  const auto start = std::chrono::steady_clock::now();

  for (int it = 0; it < cfg.iterations; ++it) {
    Batch domain;
    double alpha = 0.0;
    switch (cfg.sampler) {
      case DomainSampler::uniform:
        domain = uniform_batch(problem, cfg.batch_domain, rng);
        break;
      case DomainSampler::clustered: {
        domain = uniform_batch(problem, cfg.batch_domain, rng);
        domain.states = nu.sample(cfg.batch_domain, problem.dim(), rng);
        domain.provenance = Provenance::clustered;
        break;
      }
      case DomainSampler::relaxation: {
        const NetworkPolicy policy(problem, net, params);
        domain = relax_advance(relax, problem, policy, nu, rng);
        alpha = relax.alpha;
        break;
      }
    }
    if (dump) append_batch_csv(dump, domain, it == 0);
    const Matrix terminal =
        terminal_batch(problem, cfg.batch_terminal, cfg.terminal_law.value_or(nu), rng);
    const LossTerms loss = dgm_loss_gradient(net, params, problem, domain, terminal, cfg.weights,
                                             grad);
    if (!std::isfinite(loss.total) || loss.total > cfg.divergence_threshold) {
      throw DivergenceError("train: loss " + std::to_string(loss.total) + " at iteration " +
                                std::to_string(it) + " exceeds the divergence threshold",
                            static_cast<std::size_t>(it));
    }

    TrainLogRow row;
    row.iteration = static_cast<std::size_t>(it);
    row.domain_loss = loss.domain;
    row.terminal_loss = loss.terminal;
    row.total_loss = loss.total;
    row.alpha = alpha;
    row.lr = schedule.lr();
    if (cfg.monitor_every > 0 && (it % cfg.monitor_every == 0 || it + 1 == cfg.iterations)) {
      row.on_policy_error =
          on_policy_error(net, params, problem, nu, cfg.monitor_samples, cfg.rollout_steps,
                          cfg.weights, mix_seed(cfg.seed) ^ static_cast<std::uint64_t>(it));
    }

    adam.step(params, grad, schedule.lr());
    schedule.observe(loss.total);

    row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                            start)
                      .count();
    log.push_back(row);
    if (progress) progress(row);
  }

  result.checkpoint.arch = arch;
  result.checkpoint.params = std::move(params);
  result.checkpoint.meta.iteration = static_cast<std::uint64_t>(cfg.iterations);
  result.checkpoint.meta.seed = cfg.seed;
  result.checkpoint.meta.problem = problem.name();
  if (partial_log) result.log = *partial_log;
  return result;
}

void write_train_log(const std::filesystem::path& path, const std::vector<TrainLogRow>& log) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.precision(10);
  out << "iteration,domain_loss,terminal_loss,total_loss,on_policy_error,alpha,lr,wall_ms\n";
  for (const auto& r : log) {
    out << r.iteration << ',' << r.domain_loss << ',' << r.terminal_loss << ',' << r.total_loss
        << ',';
    if (std::isfinite(r.on_policy_error)) out << r.on_policy_error;
    out << ',' << r.alpha << ',' << r.lr << ',' << r.wall_ms << '\n';
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace dgm
