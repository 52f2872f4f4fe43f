#include "helpers.hpp"

#include "dgm/samplers.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

using namespace dgm;

namespace {

SznajdProblem sznajd(int n = 20) {
  return SznajdProblem(n, 5.0, Box{}, AgentCosts{0.01, 0.04, 1.0}, Target::uniform_point(n, 0.2),
                       SznajdConstants{-3.0});
}

std::vector<double> column(const Matrix& m, Eigen::Index j) {
  std::vector<double> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) out[static_cast<std::size_t>(i)] = m(i, j);
  return out;
}

// Policy pushing every agent by a fixed amount.
class ConstantPolicy final : public Policy {
 public:
  explicit ConstantPolicy(double v) : v_(v) {}
  Matrix controls(double, const Matrix& s) const override {
    return Matrix::Constant(s.rows(), s.cols(), v_);
  }
  std::string describe() const override { return "constant"; }

 private:
  double v_;
};

}  // namespace

TEST_CASE("ks statistic of a known sample") {
  const std::vector<double> s{0.1, 0.2, 0.3, 0.4};
  // Largest gap between the empirical CDF and F(x) = x occurs just before 0.1 ... 0.4: 1 - 0.4.
  CHECK(ks_uniform(s, 0.0, 1.0) == doctest::Approx(0.6));
}

TEST_CASE("clustered samples stay inside the box") {
  Rng rng = make_rng(1);
  for (bool sym : {false, true}) {
    ClusterConfig cfg;
    cfg.symmetric_offsets = sym;
    const Matrix x = clustered_sample(cfg, 10000, 20, rng);
    CHECK(x.minCoeff() >= -1.0);
    CHECK(x.maxCoeff() <= 1.0);
  }
  ClusterConfig bad;
  bad.sigma_tn = 0.0;
  CHECK_THROWS_AS(clustered_sample(bad, 1, 2, rng), Error);
}

TEST_CASE("small sigma_tn produces duplicated anchors") {
  Rng rng = make_rng(2);
  int with_duplicates = 0;
  for (int i = 0; i < 1000; ++i) {
    std::set<int> idx;
    for (int j = 0; j < 20; ++j) idx.insert(truncated_normal_index(3.5, 20, rng));
    with_duplicates += idx.size() < 20;
  }
  CHECK(with_duplicates > 0);
  // Index map covers {0..n-1} and favours small indices.
  std::vector<int> hist(20, 0);
  for (int i = 0; i < 20000; ++i) ++hist[static_cast<std::size_t>(truncated_normal_index(3.5, 20, rng))];
  CHECK(hist[0] > hist[10]);
  CHECK(hist[10] > 0);
}

TEST_CASE("uniform batch is uniform in time and space") {
  const SznajdProblem p = sznajd(3);
  Rng rng = make_rng(3);
  const Batch b = uniform_batch(p, 10000, rng);
  std::vector<double> t(b.times.data(), b.times.data() + b.times.size());
  CHECK(ks_uniform(t, 0.0, 5.0) < 0.05);
  for (Eigen::Index j = 0; j < 3; ++j) CHECK(ks_uniform(column(b.states, j), -1.0, 1.0) < 0.05);
  Rng a = make_rng(4), c = make_rng(4);
  CHECK(uniform_batch(p, 5, a).states == uniform_batch(p, 5, c).states);
}

TEST_CASE("terminal batch holds the target as its last row") {
  const SznajdProblem p = sznajd(20);
  InitialDistribution nu;
  nu.kind = InitialDistribution::Kind::clustered;
  Rng rng = make_rng(5);
  const Matrix m = terminal_batch(p, 2, nu, rng);
  CHECK(m.rows() == 2);
  CHECK(m.row(1).transpose() == p.target_state());
  CHECK(m.row(0).minCoeff() >= -1.0);
  CHECK_THROWS_AS(terminal_batch(p, 1, nu, rng), Error);
  const HkProblem measure(3, 5.0, Box{}, AgentCosts{}, Target::measure({0.3, -0.1, 0.0}), {});
  const Matrix mm = terminal_batch(measure, 4, nu, rng);
  CHECK(mm.row(3).transpose() == Eigen::Vector3d(-0.1, 0.0, 0.3));
}

TEST_CASE("relaxation starts fully relaxed with uniform times") {
  const SznajdProblem p = sznajd(5);
  InitialDistribution nu;
  Rng rng = make_rng(6);
  const RelaxState s = relax_init(p, 10000, nu, 0.1, 0.05, rng);
  CHECK(s.alpha == 1.0);
  CHECK(s.times.minCoeff() >= 0.0);
  CHECK(s.times.maxCoeff() < 5.0);
  std::vector<double> t(s.times.data(), s.times.data() + s.times.size());
  CHECK(ks_uniform(t, 0.0, 5.0) < 0.05);
}

TEST_CASE("zero control decays alpha geometrically") {
  const SznajdProblem p = sznajd(5);
  InitialDistribution nu;
  Rng rng = make_rng(7);
  RelaxState s = relax_init(p, 64, nu, 0.1, 0.05, rng);
  const ZeroPolicy zero;
  double previous = s.alpha;
  for (int k = 0; k < 20; ++k) {
    relax_advance(s, p, zero, nu, rng);
    CHECK(s.alpha == doctest::Approx(previous * 0.8).epsilon(1e-12));
    CHECK(s.alpha < previous);
    previous = s.alpha;
  }
}

TEST_CASE("alpha gradient vanishes for particles at a point target") {
  const SznajdProblem p = sznajd(3);
  RelaxState s;
  s.states = Matrix::Constant(4, 3, 0.2);
  s.times = Vector::Constant(4, 1.0);
  s.alpha = 0.3;
  s.dt = 0.05;
  const Matrix effect = Matrix::Constant(4, 3, 1.0);
  CHECK(relax_alpha_gradient(p, s, s.states, effect) == doctest::Approx(0.6));
}

TEST_CASE("alpha gradient matches a finite difference of the one-step penalty") {
  // Control-free LQR step with a fixed noise draw: d/dalpha of the penalty equals the formula.
  const LqrProblem p(LqrConstants::defaults(), 1.0, Box{});
  std::mt19937_64 rng(4);
  const Matrix x = testing::random_matrix(6, 2, rng, -1.0, 1.0);
  const Matrix u = testing::random_matrix(6, 2, rng, -1.0, 1.0);
  const Matrix noise = testing::random_matrix(6, 2, rng, -1.0, 1.0);
  RelaxState s;
  s.times = Vector::LinSpaced(6, 0.1, 0.6);
  s.dt = 0.01;
  s.alpha = 0.4;
  auto penalty = [&](double a) {
    const Matrix next = euler_step_batch(p, 0.0, x, (1.0 - a) * u, s.dt, noise);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < 6; ++i) acc += s.times(i) * p.target_discrepancy(next.row(i).transpose());
    return acc / 6.0;
  };
  const Matrix next = euler_step_batch(p, 0.0, x, (1.0 - s.alpha) * u, s.dt, noise);
  const Matrix effect = p.drift_batch(0.0, x, u) - p.drift_batch(0.0, x, Matrix::Zero(6, 2));
  const double h = 1e-5;
  const double fd = (penalty(s.alpha + h) - penalty(s.alpha - h)) / (2.0 * h);
  CHECK(relax_alpha_gradient(p, s, next, effect) - 2.0 * s.alpha == doctest::Approx(fd).epsilon(1e-6));
}

TEST_CASE("relaxation keeps alpha in range, reaches zero and stays there") {
  const LqrProblem p(LqrConstants::defaults(), 1.0, Box{});
  InitialDistribution nu;
  Rng rng = make_rng(8);
  RelaxState s = relax_init(p, 256, nu, 0.1, 0.01, rng);
  // Feedback towards the origin, as a trained LQR policy does.
  class Towards final : public Policy {
   public:
    Matrix controls(double, const Matrix& x) const override { return -2.0 * x; }
    std::string describe() const override { return "towards"; }
  } policy;
  int reached = -1;
  for (int k = 0; k < 300; ++k) {
    relax_advance(s, p, policy, nu, rng);
    CHECK(s.alpha >= 0.0);
    CHECK(s.alpha <= 1.0);
    if (s.alpha == 0.0 && reached < 0) reached = k;
  }
  CHECK(reached > 0);
  CHECK(s.alpha == 0.0);
  CHECK(s.relaxed);
}

TEST_CASE("time marginal stays uniform over many sweeps") {
  const SznajdProblem p = sznajd(2);
  InitialDistribution nu;
  Rng rng = make_rng(9);
  RelaxState s = relax_init(p, 10000, nu, 0.1, 0.05, rng);
  const ConstantPolicy policy(0.1);
  for (int k = 0; k < 100; ++k) relax_advance(s, p, policy, nu, rng);
  std::vector<double> t(s.times.data(), s.times.data() + s.times.size());
  CHECK(ks_uniform(t, 0.0, 5.0) < 0.05);
  CHECK(s.times.maxCoeff() < 5.0);
  CHECK(s.states.maxCoeff() <= 1.0);
}

TEST_CASE("batch CSV dump") {
  const SznajdProblem p = sznajd(2);
  Rng rng = make_rng(10);
  const Batch b = uniform_batch(p, 3, rng);
  const auto path = std::filesystem::temp_directory_path() / "dgm_unit_batch.csv";
  write_batch_csv(path, b);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "t,x1,x2,provenance");
  std::string row;
  std::getline(in, row);
  CHECK(row.substr(row.rfind(',') + 1) == "uniform");
  std::filesystem::remove(path);
}
