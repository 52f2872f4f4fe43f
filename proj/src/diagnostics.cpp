#include "dgm/diagnostics.hpp"

#include "dgm/errors.hpp"
#include "dgm/experiment.hpp"
#include "dgm/field.hpp"
#include "dgm/lqr_oracle.hpp"
#include "dgm/residual.hpp"
#include "dgm/samplers.hpp"
#include "dgm/sde.hpp"
#include "dgm/trainer.hpp"
#include "dgm/value_net.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace dgm {

namespace {

double rel_err(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// f at x + k h e_i for k = -2..2.
template <class F>
std::array<double, 5> stencil(F&& f, Vector x, Eigen::Index i, double h) {
  const double x0 = x(i);
  std::array<double, 5> v{};
  for (int k = -2; k <= 2; ++k) {
    x(i) = x0 + k * h;
    v[static_cast<std::size_t>(k + 2)] = f(x);
  }
  return v;
}

// Fourth-order central differences.
template <class F>
double central(F&& f, const Vector& x, Eigen::Index i, double h) {
  const auto v = stencil(f, x, i, h);
  return (v[0] - 8.0 * v[1] + 8.0 * v[3] - v[4]) / (12.0 * h);
}

template <class F>
double second(F&& f, const Vector& x, Eigen::Index i, double h) {
  const auto v = stencil(f, x, i, h);
  return (-v[0] + 16.0 * v[1] - 30.0 * v[2] + 16.0 * v[3] - v[4]) / (12.0 * h * h);
}

Matrix uniform_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

// Glorot weights plus random biases, so that every bias path is exercised.
ParamStore noisy_params(const NetArch& arch, std::uint64_t seed) {
  ParamStore p = init_params(arch, seed);
  std::mt19937_64 rng(seed + 17);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (std::size_t i = 1; i < p.size(); i += 2) {
    for (Eigen::Index k = 0; k < p[i].size(); ++k) p[i].data()[k] = u(rng);
  }
  return p;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

bool parses_as_number(const std::string& s) {
  if (s == "nan" || s == "-nan" || s == "inf" || s == "-inf") return true;
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  return ec == std::errc() && p == s.data() + s.size();
}

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
  return s;
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(3);
  s << v;
  return s.str();
}

SznajdProblem small_sznajd(int n) {
  return SznajdProblem(n, 1.0, Box{}, AgentCosts{}, Target::uniform_point(n, 0.2), SznajdConstants{});
}

}  // namespace

InputDerivativeError input_derivative_fd_error(int cases, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  InputDerivativeError err;
  for (int c = 0; c < cases; ++c) {
    const int n = 1 + c % 5;
    const NetArch arch{ArchKind::residual, n + 1, 8, 3};
    const ParamStore p = noisy_params(arch, seed * 1000 + static_cast<std::uint64_t>(c));
    const ValueNet net(arch);
    const Vector z = uniform_matrix(1, n + 1, rng, -1.0, 1.0).row(0).transpose();
    auto f = [&](const Vector& v) {
      return net.forward(p, v(0), std::span<const double>(v.data() + 1, static_cast<std::size_t>(n)));
    };
    const DerivativeBundle b =
        input_derivatives(net, p, z(0), std::span<const double>(z.data() + 1, static_cast<std::size_t>(n)));
    err.first_order = std::max(err.first_order, rel_err(b.dt, central(f, z, 0, 1e-3), 1e-3));
    double trace = 0.0;
    for (int i = 0; i < n; ++i) {
      err.first_order =
          std::max(err.first_order, rel_err(b.grad_x(i), central(f, z, i + 1, 1e-3), 1e-3));
      trace += second(f, z, i + 1, 1e-3);
    }
    err.laplacian = std::max(err.laplacian, rel_err(b.laplacian, trace, 1e-3));
  }
  return err;
}

double loss_gradient_fd_error(int coords, std::uint64_t seed) {
  const SznajdProblem problem(1, 1.0, Box{}, AgentCosts{0.05, 0.5, 1.0},
                              Target::uniform_point(1, 0.2), SznajdConstants{-3.0});
  const NetArch arch{ArchKind::residual, 2, 8, 3};
  const ParamStore params = noisy_params(arch, seed);
  const ValueNet net(arch);
  std::mt19937_64 rng(seed);
  Batch domain;
  domain.times = uniform_matrix(16, 1, rng, 0.0, 1.0).col(0);
  domain.states = uniform_matrix(16, 1, rng, -1.0, 1.0);
  const Matrix terminal = uniform_matrix(8, 1, rng, -1.0, 1.0);
  LossWeights w;
  w.w2 = 2.0;

  ParamStore grad = params;
  dgm_loss_gradient(net, params, problem, domain, terminal, w, grad);
  const std::vector<double> raw = params.flatten();
  const Vector flat = Eigen::Map<const Vector>(raw.data(), static_cast<Eigen::Index>(raw.size()));
  const std::vector<double> g = grad.flatten();
  auto loss = [&](const Vector& theta) {
    ParamStore p = params;
    p.assign_flat(std::span<const double>(theta.data(), static_cast<std::size_t>(theta.size())));
    return dgm_loss(net, p, problem, domain, terminal, w).total;
  };
  std::uniform_int_distribution<Eigen::Index> pick(0, flat.size() - 1);
  double worst = 0.0;
  for (int k = 0; k < coords; ++k) {
    const Eigen::Index i = pick(rng);
    worst = std::max(worst, rel_err(g[static_cast<std::size_t>(i)], central(loss, flat, i, 1e-4), 1e-3));
  }
  return worst;
}

double riccati_residual_max(int points, int riccati_steps, std::uint64_t seed) {
  const LqrProblem problem(LqrConstants::defaults(), 1.0, Box{-2.0, 2.0});
  const RiccatiSolution sol = riccati_solve(problem.constants(), 1.0, riccati_steps);
  const OracleField field(sol);
  std::mt19937_64 rng(seed);
  const Vector times = uniform_matrix(points, 1, rng, 0.0, 1.0).col(0);
  const Matrix states = uniform_matrix(points, 2, rng, -2.0, 2.0);
  return residual_values(field, ParamStore{}, problem, times, states).cwiseAbs().maxCoeff();
}

CsvSchema trajectory_schema() {
  return {"trajectory", {"time", "agent_id", "state", "control", "running_cost", "cum_cost"}, {}, {}};
}

CsvSchema train_log_schema() {
  return {"train_log",
          {"iteration", "domain_loss", "terminal_loss", "total_loss", "on_policy_error", "alpha", "lr",
           "wall_ms"},
          {},
          {"on_policy_error"}};
}

CsvSchema bound_schema() {
  return {"bound", {"t", "lhs_domain", "lhs_terminal", "rhs", "slack", "mc_stderr", "holds_fraction"}, {}, {}};
}

CsvSchema comparison_schema() {
  return {"comparison", {"policy", "mean_cost", "std_error", "samples"}, {"policy"}, {}};
}

CsvSchema metrics_schema() { return {"metrics", {"metric", "value"}, {"metric"}, {}}; }

CsvSchema batch_schema(int dim) {
  CsvSchema s{"batch", {"t"}, {"provenance"}, {}};
  for (int j = 1; j <= dim; ++j) s.columns.push_back("x" + std::to_string(j));
  s.columns.push_back("provenance");
  return s;
}

std::string validate_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) return schema.name + ": cannot open " + path.string();
  std::string line;
  if (!std::getline(in, line)) return schema.name + ": empty file";
  const auto header = split_csv_line(line);
  if (header != schema.columns) {
    return schema.name + ": header '" + join(header) + "' differs from '" + join(schema.columns) + "'";
  }
  auto listed = [](const std::vector<std::string>& v, const std::string& c) {
    return std::find(v.begin(), v.end(), c) != v.end();
  };
  std::vector<bool> numeric(header.size()), optional(header.size());
  for (std::size_t j = 0; j < header.size(); ++j) {
    numeric[j] = !listed(schema.text_columns, header[j]);
    optional[j] = listed(schema.optional_columns, header[j]);
  }
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      return schema.name + ": row " + std::to_string(rows) + " has " + std::to_string(fields.size()) +
             " fields, expected " + std::to_string(header.size());
    }
    for (std::size_t j = 0; j < fields.size(); ++j) {
      if (fields[j].empty() && optional[j]) continue;
      if (numeric[j] ? !parses_as_number(fields[j]) : fields[j].empty()) {
        return schema.name + ": row " + std::to_string(rows) + " column '" + header[j] +
               "' has invalid value '" + fields[j] + "'";
      }
    }
  }
  if (rows == 0) return schema.name + ": no data rows";
  return {};
}

std::vector<CheckResult> run_checks(const CheckOptions& options, const CheckReportFn& report) {
  std::vector<CheckResult> results;
  std::filesystem::path scratch = options.scratch;
  bool own_scratch = false;
  if (scratch.empty()) {
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    scratch = std::filesystem::temp_directory_path() / ("dgm_check_" + std::to_string(stamp));
    own_scratch = true;
  }
  std::filesystem::create_directories(scratch);

  // Each body returns an empty string on success or a failure detail.
  auto run = [&](const std::string& name, const std::function<std::string()>& body) {
    CheckResult r{name, false, {}};
    try {
      r.detail = body();
      r.passed = r.detail.empty();
    } catch (const std::exception& e) {
      r.detail = e.what();
    }
    if (r.passed && r.detail.empty()) r.detail = "ok";
    if (report) report(r);
    results.push_back(r);
  };

  if (!options.config.empty()) {
    run("config", [&] {
      const ExperimentConfig cfg = load_config(options.config);
      Experiment exp(cfg);
      return std::string();
    });
  }
  if (!options.checkpoint.empty()) {
    run("checkpoint_file", [&] {
      const Checkpoint ck = load_checkpoint(options.checkpoint);
      ValueNet(ck.arch).check_params(ck.params);
      for (double v : ck.params.flatten()) {
        if (!std::isfinite(v)) return std::string("non-finite parameter");
      }
      if (!options.config.empty()) Experiment(load_config(options.config)).check_checkpoint(ck);
      return std::string();
    });
  }

  run("autodiff_input_derivatives", [] {
    const InputDerivativeError e = input_derivative_fd_error(100, 21);
    if (e.first_order < 1e-5 && e.laplacian < 1e-5) return std::string();
    return "first-order " + fmt(e.first_order) + ", laplacian " + fmt(e.laplacian) + " (limit 1e-5)";
  });

  run("loss_gradient", [] {
    double worst = 0.0;
    for (std::uint64_t s = 1; s <= 3; ++s) worst = std::max(worst, loss_gradient_fd_error(30, s));
    return worst < 1e-4 ? std::string() : "relative error " + fmt(worst) + " (limit 1e-4)";
  });

  run("riccati_residual", [] {
    const double r = riccati_residual_max(1000, 10000, 3);
    return r < 1e-6 ? std::string() : "max |residual| " + fmt(r) + " (limit 1e-6)";
  });

  run("checkpoint_roundtrip", [&] {
    Checkpoint ck;
    ck.arch = NetArch{ArchKind::residual, 3, 16, 2};
    ck.params = noisy_params(ck.arch, 5);
    ck.meta = TrainingMeta{7, 5, "lqr"};
    const auto path = scratch / "roundtrip.ckpt";
    save_checkpoint(path, ck);
    const Checkpoint back = load_checkpoint(path);
    if (!(back.arch == ck.arch)) return std::string("architecture changed");
    if (back.params.flatten() != ck.params.flatten()) return std::string("parameters changed");
    if (back.meta.iteration != 7 || back.meta.seed != 5 || back.meta.problem != "lqr") {
      return std::string("metadata changed");
    }
    return std::string();
  });

  run("checkpoint_corruption_detected", [&] {
    const auto path = scratch / "roundtrip.ckpt";
    std::vector<char> bytes;
    {
      std::ifstream in(path, std::ios::binary);
      bytes.assign(std::istreambuf_iterator<char>(in), {});
    }
    if (bytes.size() < 64) return std::string("round-trip checkpoint missing");
    bytes[bytes.size() / 2] ^= 0x5A;
    const auto bad = scratch / "corrupt.ckpt";
    std::ofstream(bad, std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    try {
      load_checkpoint(bad);
    } catch (const Error&) {
      return std::string();
    }
    return std::string("flipped byte was not detected");
  });

  run("sampler_bounds", [] {
    Rng rng = make_rng(11);
    ClusterConfig cc;
    const Matrix x = clustered_sample(cc, 2000, 20, rng);
    if (x.minCoeff() < cc.box.lower || x.maxCoeff() > cc.box.upper) {
      return std::string("clustered sample leaves the box");
    }
    const auto problem = small_sznajd(4);
    const Batch b = uniform_batch(problem, 2000, rng);
    if (b.times.minCoeff() < 0.0 || b.times.maxCoeff() > problem.horizon()) {
      return std::string("uniform batch time outside [0, T]");
    }
    InitialDistribution nu;
    const Matrix term = terminal_batch(problem, 32, nu, rng);
    if ((term.row(term.rows() - 1).transpose() - problem.target_state()).norm() != 0.0) {
      return std::string("terminal batch does not end with the target");
    }
    const double ks = ks_uniform(std::span<const double>(b.times.data(), static_cast<std::size_t>(b.times.size())),
                                 0.0, problem.horizon());
    return ks < 0.05 ? std::string() : "time KS " + fmt(ks);
  });

  run("relaxation_alpha", [] {
    const auto problem = small_sznajd(4);
    InitialDistribution nu;
    Rng rng = make_rng(12);
    RelaxState st = relax_init(problem, 512, nu, 0.1, problem.horizon() / 100.0, rng);
    const AlphaPolicy towards(problem, 2.0);
    double prev = st.alpha;
    for (int k = 0; k < 200; ++k) {
      const Batch b = relax_advance(st, problem, towards, nu, rng);
      if (!(st.alpha >= 0.0 && st.alpha <= 1.0)) return "alpha " + fmt(st.alpha) + " left [0, 1]";
      if (st.relaxed && st.alpha != 0.0) return std::string("alpha left 0 after relaxing");
      if (b.times.minCoeff() < 0.0 || b.times.maxCoeff() >= problem.horizon()) {
        return std::string("particle time outside [0, T)");
      }
      if (b.states.minCoeff() < -1.0 || b.states.maxCoeff() > 1.0) {
        return std::string("particle outside the domain");
      }
      prev = st.alpha;
    }
    return prev == 0.0 ? std::string() : "alpha did not reach 0 (final " + fmt(prev) + ")";
  });

  run("sde_invariants", [] {
    const HkProblem problem(20, 1.0, Box{}, AgentCosts{0.01, 0.05, 1.0}, Target::uniform_point(20, 0.0),
                            HkConstants{});
    Rng rng = make_rng(13);
    const Matrix x0 = uniform_states(problem.domain(), 8, 20, rng);
    const std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8};
    const AlphaPolicy pol(problem, 3.0);
    for (const Trajectory& tr : rollout_batch(problem, pol, x0, 100, seeds)) {
      for (Eigen::Index k = 1; k < tr.cumulative.size(); ++k) {
        if (tr.cumulative(k) < tr.cumulative(k - 1)) return std::string("cumulative cost decreased");
      }
      if (tr.states.minCoeff() < -1.0 || tr.states.maxCoeff() > 1.0) {
        return std::string("state left the clipped domain");
      }
      const Trajectory again = rollout(problem, pol, tr.states.row(0).transpose(), 100, tr.seed);
      if (again.total_cost() != tr.total_cost()) return std::string("rollout not reproducible");
    }
    return std::string();
  });

  run("csv_schemas", [&] {
    const LqrProblem lqr(LqrConstants::defaults(), 1.0, Box{});
    const NetArch arch{ArchKind::residual, 3, 8, 1};
    InitialDistribution nu;
    TrainConfig tc;
    tc.iterations = 3;
    tc.batch_domain = 16;
    tc.batch_terminal = 8;
    tc.monitor_every = 2;
    tc.monitor_samples = 16;
    tc.rollout_steps = 10;
    const TrainResult tr = train(tc, lqr, arch, nu);
    const ValueNet net(arch);
    std::string err;
    auto check = [&](const std::filesystem::path& p, const CsvSchema& s) {
      if (err.empty()) err = validate_csv(p, s);
    };
    write_train_log(scratch / "log.csv", tr.log);
    check(scratch / "log.csv", train_log_schema());
    const NetworkPolicy pol(lqr, net, tr.checkpoint.params);
    write_trajectory_csv(scratch / "traj.csv", rollout(lqr, pol, Vector::Constant(2, 0.5), 10, 1));
    check(scratch / "traj.csv", trajectory_schema());
    Rng rng = make_rng(14);
    write_batch_csv(scratch / "batch.csv", uniform_batch(lqr, 8, rng));
    check(scratch / "batch.csv", batch_schema(2));
    const RiccatiSolution sol = riccati_solve(lqr.constants(), 1.0, 1000);
    BoundCheckConfig bc;
    bc.samples = 200;
    bc.resamples = 50;
    bc.steps = 20;
    write_bound_csv(scratch / "bound.csv", error_bound_check(net, tr.checkpoint.params, sol, lqr, nu, bc));
    check(scratch / "bound.csv", bound_schema());
    write_comparison_csv(scratch / "cmp.csv", {{"alpha=1", 0.5, 0.01, 10}});
    check(scratch / "cmp.csv", comparison_schema());
    write_metrics_csv(scratch / "metrics.csv", {{"rel_l2_t0", 0.1}});
    check(scratch / "metrics.csv", metrics_schema());
    return err;
  });

  if (own_scratch) {
    std::error_code ec;
    std::filesystem::remove_all(scratch, ec);
  }
  return results;
}

}  // namespace dgm
