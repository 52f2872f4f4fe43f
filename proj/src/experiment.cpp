#include "dgm/experiment.hpp"

#include "dgm/errors.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace dgm {

namespace {

ComparisonRow summarise(const std::string& name, const Vector& costs) {
  ComparisonRow row;
  row.policy = name;
  row.samples = static_cast<int>(costs.size());
  row.mean_cost = costs.mean();
  if (costs.size() > 1) {
    const double var = (costs.array() - row.mean_cost).square().sum() / static_cast<double>(costs.size() - 1);
    row.std_error = std::sqrt(var / static_cast<double>(costs.size()));
  }
  return row;
}

std::string format_alpha(double a) {
  std::ostringstream s;
  s << a;
  return s.str();
}

}  // namespace

PolicySpec PolicySpec::parse(const std::string& text) {
  PolicySpec spec;
  if (text == "network") return spec;
  if (text == "zero") {
    spec.kind = Kind::zero;
    return spec;
  }
  if (text == "oracle") {
    spec.kind = Kind::oracle;
    return spec;
  }
  if (text.rfind("alpha=", 0) == 0) {
    const std::string v = text.substr(6);
    double a = 0.0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), a);
    if (ec == std::errc() && p == v.data() + v.size() && std::isfinite(a)) {
      spec.kind = Kind::alpha;
      spec.alpha = a;
      return spec;
    }
  }
  throw ConfigError("policy must be network, zero, oracle or alpha=<number>, got '" + text + "'");
}

std::string PolicySpec::to_string() const {
  switch (kind) {
    case Kind::network: return "network";
    case Kind::zero: return "zero";
    case Kind::oracle: return "oracle";
    case Kind::alpha: return "alpha=" + format_alpha(alpha);
  }
  return "unknown";
}

Experiment::Experiment(ExperimentConfig cfg)
    : cfg_(std::move(cfg)), problem_(cfg_.make_problem()), net_(cfg_.arch()) {}

const RiccatiSolution& Experiment::riccati() const {
  const auto* lqr = dynamic_cast<const LqrProblem*>(problem_.get());
  if (lqr == nullptr) throw ConfigError("the Riccati oracle exists only for the lqr problem");
  if (!riccati_) riccati_ = riccati_solve(lqr->constants(), cfg_.horizon, cfg_.eval.riccati_steps);
  return *riccati_;
}

void Experiment::check_checkpoint(const Checkpoint& ck) const {
  if (!(ck.arch == net_.arch())) {
    throw ConfigError("checkpoint network (input " + std::to_string(ck.arch.input_dim) + ", width " +
                      std::to_string(ck.arch.width) + ", blocks " + std::to_string(ck.arch.blocks) +
                      ") does not match the configured network (input " +
                      std::to_string(net_.arch().input_dim) + ", width " +
                      std::to_string(net_.arch().width) + ", blocks " +
                      std::to_string(net_.arch().blocks) + ")");
  }
  if (!ck.meta.problem.empty() && ck.meta.problem != problem_->name()) {
    throw ConfigError("checkpoint was trained on '" + ck.meta.problem + "', config is '" +
                      problem_->name() + "'");
  }
  try {
    net_.check_params(ck.params);
  } catch (const ShapeError& e) {
    throw ConfigError(e.what());
  }
}

std::unique_ptr<Policy> Experiment::make_policy(const PolicySpec& spec, const Checkpoint* ck) const {
  switch (spec.kind) {
    case PolicySpec::Kind::zero: return std::make_unique<ZeroPolicy>();
    case PolicySpec::Kind::alpha: return std::make_unique<AlphaPolicy>(*problem_, spec.alpha);
    case PolicySpec::Kind::oracle: return std::make_unique<OraclePolicy>(riccati());
    case PolicySpec::Kind::network:
      if (ck == nullptr) throw ConfigError("the network policy needs a checkpoint");
      check_checkpoint(*ck);
      return std::make_unique<NetworkPolicy>(*problem_, net_, ck->params);
  }
  throw ConfigError("unknown policy");
}

void Experiment::scenarios(int count, Matrix& starts, std::vector<std::uint64_t>& seeds) const {
  Rng rng = make_rng(cfg_.seed, 0x5CE);
  starts = cfg_.initial.sample(count, problem_->dim(), rng);
  seeds.resize(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) seeds[static_cast<std::size_t>(i)] = mix_seed(cfg_.seed * 7919 + static_cast<std::uint64_t>(i));
}

TrainResult Experiment::train(const ProgressFn& progress, std::vector<TrainLogRow>* partial) const {
  TrainConfig tc = cfg_.train;
  tc.terminal_law = cfg_.terminal;
  tc.dump_batches = cfg_.dump_batches;
  return dgm::train(tc, *problem_, net_.arch(), cfg_.initial, progress, partial);
}

Evaluation evaluate(const Experiment& exp, const Checkpoint* ck) {
  const ExperimentConfig& cfg = exp.config();
  Matrix starts;
  std::vector<std::uint64_t> seeds;
  exp.scenarios(cfg.eval.seeds, starts, seeds);
  Evaluation ev;
  auto run = [&](const PolicySpec& spec) {
    const auto policy = exp.make_policy(spec, ck);
    const Vector costs = rollout_costs(exp.problem(), *policy, starts, cfg.eval.steps, seeds);
    ev.comparison.push_back(summarise(spec.to_string(), costs));
  };
  if (ck != nullptr) run(PolicySpec{});
  run(PolicySpec{PolicySpec::Kind::zero, 0.0});
  for (double a : cfg.eval.alphas) run(PolicySpec{PolicySpec::Kind::alpha, a});

  const bool lqr = cfg.problem == "lqr";
  if (lqr) run(PolicySpec{PolicySpec::Kind::oracle, 0.0});

  double best_alpha_cost = INFINITY;
  double best_alpha = 0.0;
  for (std::size_t i = 0; i < cfg.eval.alphas.size(); ++i) {
    const auto& row = ev.comparison[i + (ck ? 2 : 1)];
    if (row.mean_cost < best_alpha_cost) {
      best_alpha_cost = row.mean_cost;
      best_alpha = cfg.eval.alphas[i];
    }
  }
  if (!cfg.eval.alphas.empty()) {
    ev.metrics.emplace_back("best_alpha", best_alpha);
    ev.metrics.emplace_back("best_alpha_cost", best_alpha_cost);
  }
  if (ck != nullptr) {
    ev.metrics.emplace_back("network_cost", ev.comparison.front().mean_cost);
    ev.metrics.emplace_back("on_policy_error",
                            on_policy_error(exp.net(), ck->params, exp.problem(), cfg.initial,
                                            1024, cfg.train.rollout_steps, cfg.train.weights,
                                            mix_seed(cfg.seed + 1)));
  }
  if (lqr && ck != nullptr) {
    const RiccatiSolution& sol = exp.riccati();
    Rng rng = make_rng(cfg.seed, 0xE7A1);
    const Matrix x0 = cfg.initial.sample(4000, 2, rng);
    const Matrix j = field_values(exp.net(), ck->params, with_time(0.0, x0));
    double num = 0.0, den = 0.0;
    for (Eigen::Index i = 0; i < x0.rows(); ++i) {
      const double o = oracle_value(sol, 0.0, x0.row(i).transpose());
      num += (j(i, 0) - o) * (j(i, 0) - o);
      den += o * o;
    }
    ev.metrics.emplace_back("rel_l2_t0", std::sqrt(num / den));
    ev.metrics.emplace_back("cost_ratio_vs_oracle",
                            ev.comparison.front().mean_cost / ev.comparison.back().mean_cost);
    BoundCheckConfig bc;
    bc.samples = cfg.eval.bound_samples;
    bc.resamples = cfg.eval.bound_resamples;
    bc.steps = cfg.eval.steps;
    bc.seed = cfg.seed;
    ev.bound = error_bound_check(exp.net(), ck->params, sol,
                                 dynamic_cast<const LqrProblem&>(exp.problem()), cfg.initial, bc);
  }
  return ev;
}

void write_comparison_csv(const std::filesystem::path& path, const std::vector<ComparisonRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.precision(10);
  out << "policy,mean_cost,std_error,samples\n";
  for (const auto& r : rows) out << r.policy << ',' << r.mean_cost << ',' << r.std_error << ',' << r.samples << '\n';
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

void write_metrics_csv(const std::filesystem::path& path,
                       const std::vector<std::pair<std::string, double>>& metrics) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.precision(10);
  out << "metric,value\n";
  for (const auto& [name, value] : metrics) out << name << ',' << value << '\n';
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace dgm
