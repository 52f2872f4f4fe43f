#include "helpers.hpp"

#include "dgm/sde.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <numeric>

using namespace dgm;
using testing::random_matrix;

namespace {

// Union-find over the graph |x_i - x_j| <= kappa.
int union_find_clusters(const std::vector<double>& x, double kappa) {
  std::vector<int> parent(x.size());
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int i) { return parent[i] == i ? i : parent[i] = find(parent[i]); };
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      if (std::abs(x[i] - x[j]) <= kappa) parent[find(static_cast<int>(i))] = find(static_cast<int>(j));
    }
  }
  int roots = 0;
  for (std::size_t i = 0; i < x.size(); ++i) roots += find(static_cast<int>(i)) == static_cast<int>(i);
  return roots;
}

}  // namespace

TEST_CASE("noise-free scalar LQR cost under constant feedback matches the ODE") {
  // One agent without interaction: sigma = 0 makes the path deterministic.
  const SznajdProblem p(1, 1.0, Box{-10.0, 10.0}, AgentCosts{0.0, 0.5, 2.0},
                        Target::uniform_point(1, 0.0), SznajdConstants{0.0});
  const double alpha = 1.5;
  const double x0 = 0.8;
  const AlphaPolicy policy(p, alpha);
  const int steps = 20000;
  const Trajectory tr = rollout(p, policy, Vector::Constant(1, x0), steps, 1);
  // x(t) = x0 e^{-alpha t}, u = -alpha x; F = (lambda x^2 + gamma u^2) / 2, G = lambda x^2 / 2.
  const double lam = 2.0, gam = 0.5, T = 1.0;
  const double k = (lam + gam * alpha * alpha) / 2.0;
  const double exact = k * x0 * x0 * (1.0 - std::exp(-2.0 * alpha * T)) / (2.0 * alpha) +
                       lam / 2.0 * x0 * x0 * std::exp(-2.0 * alpha * T);
  CHECK(tr.total_cost() == doctest::Approx(exact).epsilon(2e-4));
  CHECK(tr.states(steps, 0) == doctest::Approx(x0 * std::exp(-alpha * T)).epsilon(1e-3));
}

TEST_CASE("rollouts are deterministic and batch rows match single rollouts") {
  const SznajdProblem p(4, 5.0, Box{}, AgentCosts{0.01, 0.04, 1.0}, Target::uniform_point(4, 0.2),
                        SznajdConstants{-3.0});
  const AlphaPolicy policy(p, 7.0);
  std::mt19937_64 rng(1);
  const Matrix x0 = random_matrix(3, 4, rng, -1.0, 1.0);
  const std::vector<std::uint64_t> seeds{5, 6, 7};
  const auto batch = rollout_batch(p, policy, x0, 50, seeds);
  const Vector costs = rollout_costs(p, policy, x0, 50, seeds);
  for (int i = 0; i < 3; ++i) {
    const Trajectory single = rollout(p, policy, x0.row(i).transpose(), 50, seeds[i]);
    CHECK(single.states == batch[i].states);
    CHECK(single.total_cost() == batch[i].total_cost());
    CHECK(costs(i) == doctest::Approx(single.total_cost()).epsilon(1e-12));
  }
  CHECK(rollout(p, policy, x0.row(0).transpose(), 50, 5).states ==
        rollout(p, policy, x0.row(0).transpose(), 50, 5).states);
}

TEST_CASE("agent states stay inside the domain") {
  const SznajdProblem p(6, 5.0, Box{}, AgentCosts{0.5, 0.04, 1.0}, Target::uniform_point(6, 0.2),
                        SznajdConstants{-3.0});
  const AlphaPolicy policy(p, 50.0);
  const Trajectory tr = rollout(p, policy, Vector::Constant(6, 0.99), 100, 3);
  CHECK(tr.states.maxCoeff() <= 1.0);
  CHECK(tr.states.minCoeff() >= -1.0);
}

TEST_CASE("euler step shapes and arguments are checked") {
  const LqrProblem p(LqrConstants::defaults(), 1.0, Box{});
  CHECK_THROWS_AS(euler_step(p, 0.0, Vector::Zero(2), Vector::Zero(2), 0.0, Vector::Zero(2)), Error);
  CHECK_THROWS_AS(euler_step(p, 0.0, Vector::Zero(2), Vector::Zero(2), 0.1, Vector::Zero(3)),
                  ShapeError);
  const Vector x = Eigen::Vector2d(1.0, 1.0);
  const Vector next = euler_step(p, 0.0, x, Vector::Zero(2), 0.01, Eigen::Vector2d(1.0, -1.0));
  CHECK(next.isApprox(x + p.drift(0.0, x, Vector::Zero(2)) * 0.01 +
                      0.2 * 0.1 * Eigen::Vector2d(1.0, -1.0)));
}

TEST_CASE("alpha policy pairs ranks with target atoms for measure targets") {
  const HkProblem p(3, 5.0, Box{}, AgentCosts{}, Target::measure({0.3, -0.2, 0.1}), HkConstants{});
  const AlphaPolicy policy(p, 2.0);
  Matrix x(1, 3);
  x << 0.5, -0.5, 0.0;
  const Matrix u = policy.controls(0.0, x);
  CHECK(u(0, 0) == doctest::Approx(2.0 * (0.3 - 0.5)));
  CHECK(u(0, 1) == doctest::Approx(2.0 * (-0.2 + 0.5)));
  CHECK(u(0, 2) == doctest::Approx(2.0 * (0.1 - 0.0)));
  CHECK(policy.describe() == "alpha=2");
  CHECK(AlphaPolicy(p, 0.5).describe() == "alpha=0.5");
}

TEST_CASE("cluster count agrees with a union-find oracle") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> x(20);
    for (auto& v : x) v = u(rng);
    CHECK(count_clusters(x, 0.2) == union_find_clusters(x, 0.2));
  }
  CHECK(count_clusters(std::vector<double>{0.0, 0.2, 0.4}, 0.2) == 1);
  CHECK(count_clusters(std::vector<double>{}, 0.2) == 0);
}

TEST_CASE("alpha sweep reports one row per alpha") {
  const SznajdProblem p(4, 1.0, Box{}, AgentCosts{0.01, 0.04, 1.0}, Target::uniform_point(4, 0.2),
                        SznajdConstants{-3.0});
  std::mt19937_64 rng(3);
  const Matrix x0 = random_matrix(2, 4, rng, -1.0, 1.0);
  const std::vector<double> alphas{1.0, 2.0, 3.0};
  const std::vector<std::uint64_t> seeds{1, 2};
  const auto table = alpha_policy_sweep(p, alphas, x0, 20, seeds);
  REQUIRE(table.size() == 3);
  CHECK(table[1].policy == "alpha=2");
  CHECK(table[0].mean_cost > 0.0);
  CHECK(table[0].std_error >= 0.0);
}

TEST_CASE("trajectory CSV layout") {
  const SznajdProblem p(2, 1.0, Box{}, AgentCosts{0.01, 0.04, 1.0}, Target::uniform_point(2, 0.2),
                        SznajdConstants{-3.0});
  const Trajectory tr = rollout(p, AlphaPolicy(p, 3.0), Vector::Constant(2, 0.5), 4, 9);
  const auto path = std::filesystem::temp_directory_path() / "dgm_unit_traj.csv";
  write_trajectory_csv(path, tr);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "time,agent_id,state,control,running_cost,cum_cost");
  int rows = 0;
  std::string last;
  while (std::getline(in, line)) {
    ++rows;
    last = line;
  }
  CHECK(rows == 5 * 2);
  CHECK(last.rfind("1,1,", 0) == 0);
  std::filesystem::remove(path);
}
