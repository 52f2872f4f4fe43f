#include "dgm/config.hpp"

#include <doctest.h>

#include <filesystem>

using namespace dgm;

namespace {

ExperimentConfig bundled(const std::string& name) {
  return load_config(std::filesystem::path(DGM_CONFIG_DIR) / (name + ".cfg"));
}

int error_line(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.line();
  }
  return -1;
}

}  // namespace

TEST_CASE("bundled LQR config") {
  const ExperimentConfig c = bundled("lqr");
  CHECK(c.name == "lqr");
  CHECK(c.horizon == 1.0);
  CHECK(c.lqr_sigma == 0.2);
  CHECK(c.train.iterations == 600);
  CHECK(c.train.lr == 1e-3);
  CHECK(c.train.plateau_decay == 0.99);
  CHECK(c.train.plateau_window == 10);
  CHECK(c.train.relax_rate == 0.1);
  CHECK(c.train.sampler == DomainSampler::relaxation);
  CHECK(c.arch() == NetArch{ArchKind::residual, 3, 123, 3});
  CHECK(c.make_problem()->name() == "lqr");
}

TEST_CASE("bundled Sznajd config") {
  const ExperimentConfig c = bundled("sznajd");
  CHECK(c.agents == 20);
  CHECK(c.horizon == 5.0);
  CHECK(c.beta == -3.0);
  CHECK(c.costs.sigma == 0.01);
  CHECK(c.costs.gamma == 0.04);
  CHECK(c.costs.lambda == 1.0);
  CHECK(c.target == 0.2);
  CHECK(c.initial.kind == InitialDistribution::Kind::clustered);
  CHECK(c.initial.cluster.sigma_tn == 3.5);
  CHECK_FALSE(c.initial.cluster.epsilon.has_value());
  CHECK(c.terminal.kind == InitialDistribution::Kind::clustered);
  CHECK(c.eval.alphas.size() == 10);
  const auto p = c.make_problem();
  CHECK(p->name() == "sznajd");
  CHECK(p->dim() == 20);
  CHECK(p->target_state()(5) == 0.2);
}

TEST_CASE("bundled Hegselmann-Krause configs") {
  const ExperimentConfig hk = bundled("hk");
  CHECK(hk.beta == 9.0);
  CHECK(hk.kappa == 0.2);
  CHECK(hk.costs.gamma == 0.05);
  CHECK(hk.target == 0.0);
  CHECK(hk.train.iterations == 1600);
  CHECK(hk.train.lr == 8e-4);
  CHECK(hk.train.weights.w2 == 5.0 * hk.train.weights.w1);
  CHECK(param_count(hk.arch()) == 370231);

  const ExperimentConfig m = bundled("hk_measure");
  CHECK(m.beta == 7.0);
  CHECK(m.costs.gamma == 0.04);
  REQUIRE(m.target_atoms.size() == 20);
  CHECK(m.target_atoms.front() == 0.39);
  CHECK(m.target_atoms.back() == -0.1);
  CHECK(m.make_problem()->name() == "hk_measure");
}

TEST_CASE("unknown keys and sections are rejected with their line") {
  CHECK(error_line("[experiment]\nproblem = lqr\n\n[train]\nlearning_rate = 1\n") == 5);
  CHECK(error_line("[experiment]\nproblem = lqr\n[nonsense]\nx = 1\n") == 3);
  CHECK(error_line("[train]\niterations = many\n") == 2);
  CHECK(error_line("[train]\nsampler = sobol\n") == 2);
  CHECK(error_line("[experiment\nproblem = lqr\n") == 1);
}

TEST_CASE("inconsistent settings are rejected") {
  CHECK_THROWS_AS(parse_config("[experiment]\nproblem = pendulum\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[experiment]\nproblem = hk_measure\n[problem]\nagents = 3\ntarget_atoms = 0.1, 0.2\n"),
                  ConfigError);
  CHECK_THROWS_AS(parse_config("[problem]\nlower = 1\nupper = -1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[network]\nwidth = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[train]\nlr = -1\n"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/config.ini"), IoError);
}

TEST_CASE("terminal law defaults to the initial law") {
  const ExperimentConfig a = parse_config(
      "[experiment]\nproblem = sznajd\n[problem]\nagents = 3\n[initial]\nkind = clustered\nepsilon = 0.3\n");
  CHECK(a.terminal.kind == InitialDistribution::Kind::clustered);
  CHECK(a.terminal.cluster.epsilon == 0.3);
  const ExperimentConfig b = parse_config(
      "[terminal]\nkind = uniform\n[experiment]\nproblem = sznajd\n[problem]\nagents = 3\n[initial]\nkind = clustered\n");
  CHECK(b.terminal.kind == InitialDistribution::Kind::uniform);
  CHECK(b.initial.kind == InitialDistribution::Kind::clustered);
  CHECK(b.seed == 0);
}
