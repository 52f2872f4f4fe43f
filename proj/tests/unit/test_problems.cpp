#include "helpers.hpp"

#include "dgm/problems.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>

using namespace dgm;
using testing::random_matrix;

namespace {

SznajdProblem sznajd(int n) {
  return SznajdProblem(n, 5.0, Box{}, AgentCosts{0.01, 0.04, 1.0}, Target::uniform_point(n, 0.2),
                       SznajdConstants{-3.0});
}

DerivativeBundle random_bundle(int n, std::mt19937_64& rng) {
  DerivativeBundle b;
  b.value = random_matrix(1, 1, rng)(0, 0);
  b.dt = random_matrix(1, 1, rng)(0, 0);
  b.grad_x = random_matrix(n, 1, rng).col(0);
  b.laplacian = random_matrix(1, 1, rng)(0, 0);
  return b;
}

// Minimum over all permutations of the mean squared gaps.
double brute_force_w2(const Vector& x, const Vector& y) {
  std::vector<int> perm(static_cast<std::size_t>(x.size()));
  std::iota(perm.begin(), perm.end(), 0);
  double best = 1e300;
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < perm.size(); ++i) {
      const double d = x(static_cast<Eigen::Index>(i)) - y(perm[i]);
      s += d * d;
    }
    best = std::min(best, s / static_cast<double>(x.size()));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace

TEST_CASE("LQR costs, drift and optimal control") {
  const LqrProblem p(LqrConstants::defaults(), 1.0, Box{});
  const Vector x = Eigen::Vector2d(1.0, -2.0);
  const Vector u = Eigen::Vector2d(0.5, 0.25);
  // x^T C x with C = 2I, 1/2 u^T D u with D = 0.2I.
  CHECK(p.running_cost(0.0, x, u) == doctest::Approx(2.0 * 5.0 + 0.5 * 0.2 * 0.3125));
  CHECK(p.terminal_cost(Eigen::Vector2d(1.0, 1.0)) == doctest::Approx(0.2));
  CHECK(p.drift(0.0, x, u).isApprox(Eigen::Vector2d(0.1 + 0.5, 0.05 - 0.2 + 0.25)));
  CHECK(p.optimal_control(0.0, x, Eigen::Vector2d(1.0, 2.0)).isApprox(Eigen::Vector2d(-5.0, -10.0)));
  CHECK(p.generator_diffusion() == doctest::Approx(0.02));
  CHECK_THROWS_AS(p.drift(0.0, Vector::Zero(3), u), ShapeError);
}

TEST_CASE("invalid LQR constants are rejected") {
  LqrConstants c = LqrConstants::defaults();
  c.D(0, 0) = -1.0;
  CHECK_THROWS_AS(LqrProblem(c, 1.0, Box{}), Error);
  c = LqrConstants::defaults();
  c.C(0, 1) = 1.0;
  CHECK_THROWS_AS(LqrProblem(c, 1.0, Box{}), Error);
}

TEST_CASE("minimised residual equals the Hamiltonian at the optimal control") {
  std::mt19937_64 rng(3);
  const LqrProblem lqr(LqrConstants::defaults(), 1.0, Box{});
  const SznajdProblem sz = sznajd(4);
  const HkProblem hk(4, 5.0, Box{}, AgentCosts{0.01, 0.05, 1.0},
                     Target::measure({-0.1, 0.0, 0.2, 0.3}), HkConstants{});
  for (const ControlProblem* p : std::vector<const ControlProblem*>{&lqr, &sz, &hk}) {
    for (int trial = 0; trial < 50; ++trial) {
      const int n = p->dim();
      const Vector x = random_matrix(n, 1, rng, -1.0, 1.0).col(0);
      const DerivativeBundle b = random_bundle(n, rng);
      const Vector u = p->optimal_control(0.3, x, b.grad_x);
      const double r = p->hjb_residual(b, 0.3, x);
      CHECK(r == doctest::Approx(p->hamiltonian(b, 0.3, x, u)).epsilon(1e-12));
      // u* minimises the Hamiltonian.
      const Vector du = random_matrix(n, 1, rng, -0.1, 0.1).col(0);
      CHECK(p->hamiltonian(b, 0.3, x, u + du) >= r - 1e-12);
    }
  }
}

TEST_CASE("agent running and terminal costs") {
  const SznajdProblem p = sznajd(2);
  const Vector x = Eigen::Vector2d(0.2, 0.6);
  const Vector u = Eigen::Vector2d(1.0, -1.0);
  // (1/2n) (lambda |x - x_d|^2 + gamma |u|^2) = (0.16 + 0.08) / 4
  CHECK(p.running_cost(0.0, x, u) == doctest::Approx(0.06));
  CHECK(p.terminal_cost(x) == doctest::Approx(0.04));
  CHECK(p.optimal_control(0.0, x, Eigen::Vector2d(0.04, -0.02)).isApprox(Eigen::Vector2d(-2.0, 1.0)));
  CHECK(p.noise_scale() == doctest::Approx(std::sqrt(0.02)));
  CHECK(p.generator_diffusion() == doctest::Approx(0.01));
  CHECK(p.target_discrepancy(x) == doctest::Approx(0.08));
}

TEST_CASE("Sznajd interaction") {
  const SznajdProblem p = sznajd(3);
  const Vector x = Eigen::Vector3d(-0.5, 0.0, 0.8);
  const double mean = 0.1;
  const Vector expected = Eigen::Vector3d(-3.0 * 0.75 * (mean + 0.5), -3.0 * (mean - 0.0),
                                          -3.0 * 0.36 * (mean - 0.8));
  CHECK(p.interaction(x).isApprox(expected));
  // Agents at the boundary do not move without control.
  CHECK(p.interaction(Eigen::Vector3d(-1.0, 1.0, 1.0))(0) == doctest::Approx(0.0));
}

TEST_CASE("HK interaction counts neighbours at exactly kappa") {
  const HkProblem p(3, 5.0, Box{}, AgentCosts{0.01, 0.05, 1.0}, Target::uniform_point(3, 0.0),
                    HkConstants{9.0, 0.25});
  const Vector x = Eigen::Vector3d(0.0, 0.25, 0.75);
  const Vector f = p.interaction(x);
  CHECK(f(0) == doctest::Approx(9.0 / 3.0 * 0.25));
  CHECK(f(1) == doctest::Approx(9.0 / 3.0 * -0.25));
  CHECK(f(2) == doctest::Approx(0.0));
  // Interaction conserves the sum over agents.
  std::mt19937_64 rng(4);
  const HkProblem q(8, 5.0, Box{}, AgentCosts{}, Target::uniform_point(8, 0.0), HkConstants{});
  for (int i = 0; i < 20; ++i) {
    CHECK(std::abs(q.interaction(random_matrix(8, 1, rng, -1.0, 1.0).col(0)).sum()) < 1e-12);
  }
}

TEST_CASE("wasserstein2_1d against brute force over couplings") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 2 + trial % 5;
    const Vector x = random_matrix(n, 1, rng, -1.0, 1.0).col(0);
    const Vector y = random_matrix(n, 1, rng, -1.0, 1.0).col(0);
    CHECK(wasserstein2_1d(x, y) == doctest::Approx(brute_force_w2(x, y)).epsilon(1e-12));
    CHECK(wasserstein2_1d(x, y) == doctest::Approx(wasserstein2_1d(y, x)));
    CHECK(wasserstein2_1d(x, x.reverse().eval()) == doctest::Approx(0.0));
    const Vector g = wasserstein2_1d_grad(x, y);
    for (int i = 0; i < n; ++i) {
      auto f = [&](const Vector& v) { return wasserstein2_1d(v, y); };
      CHECK(g(i) == doctest::Approx(testing::central_diff(f, x, i, 1e-7)).epsilon(1e-5));
    }
  }
  CHECK_THROWS_AS(wasserstein2_1d(Vector::Zero(2), Vector::Zero(3)), ShapeError);
}

TEST_CASE("measure target with a single repeated atom matches the point target") {
  const int n = 5;
  const HkProblem point(n, 5.0, Box{}, AgentCosts{0.01, 0.05, 1.0}, Target::uniform_point(n, 0.1),
                        HkConstants{});
  const HkProblem measure(n, 5.0, Box{}, AgentCosts{0.01, 0.05, 1.0},
                          Target::measure(std::vector<double>(n, 0.1)), HkConstants{});
  CHECK(point.name() == "hk");
  CHECK(measure.name() == "hk_measure");
  std::mt19937_64 rng(2);
  for (int i = 0; i < 10; ++i) {
    const Vector x = random_matrix(n, 1, rng, -1.0, 1.0).col(0);
    const Vector u = random_matrix(n, 1, rng).col(0);
    CHECK(point.running_cost(0.0, x, u) == doctest::Approx(measure.running_cost(0.0, x, u)));
    CHECK(point.terminal_cost(x) == doctest::Approx(measure.terminal_cost(x)));
    CHECK(point.target_discrepancy(x) == doctest::Approx(measure.target_discrepancy(x)));
  }
}

TEST_CASE("agent problem validation") {
  CHECK_THROWS_AS(SznajdProblem(3, 5.0, Box{}, AgentCosts{0.01, 0.0, 1.0},
                                Target::uniform_point(3, 0.2), {}),
                  Error);
  CHECK_THROWS_AS(SznajdProblem(3, 5.0, Box{}, AgentCosts{}, Target::uniform_point(2, 0.2), {}),
                  Error);
  CHECK_THROWS_AS(HkProblem(2, 5.0, Box{}, AgentCosts{}, Target::measure({0.1, 2.0}), {}), Error);
  CHECK_THROWS_AS(Target::measure({}), Error);
}

TEST_CASE("batched helpers agree with the per-row calls") {
  std::mt19937_64 rng(6);
  const SznajdProblem p = sznajd(4);
  const Matrix x = random_matrix(5, 4, rng, -1.0, 1.0);
  const Matrix u = random_matrix(5, 4, rng);
  const Matrix d = p.drift_batch(0.0, x, u);
  const Vector c = p.running_cost_batch(0.0, x, u);
  const Vector g = p.terminal_cost_batch(x);
  for (Eigen::Index i = 0; i < 5; ++i) {
    CHECK(d.row(i).transpose().isApprox(p.drift(0.0, x.row(i).transpose(), u.row(i).transpose())));
    CHECK(c(i) == doctest::Approx(p.running_cost(0.0, x.row(i).transpose(), u.row(i).transpose())));
    CHECK(g(i) == doctest::Approx(p.terminal_cost(x.row(i).transpose())));
  }
}
