#pragma once

#include "dgm/problems.hpp"
#include "dgm/rng.hpp"
#include "dgm/value_net.hpp"

#include <cmath>
#include <functional>
#include <random>

namespace testing {

using dgm::Matrix;
using dgm::Vector;

inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Central difference of f at x along coordinate i.
inline double central_diff(const std::function<double(const Vector&)>& f, Vector x,
                           Eigen::Index i, double h = 1e-4) {
  const double x0 = x(i);
  x(i) = x0 + h;
  const double fp = f(x);
  x(i) = x0 - h;
  const double fm = f(x);
  return (fp - fm) / (2.0 * h);
}

inline double second_diff(const std::function<double(const Vector&)>& f, Vector x,
                          Eigen::Index i, double h = 1e-4) {
  const double f0 = f(x);
  const double x0 = x(i);
  x(i) = x0 + h;
  const double fp = f(x);
  x(i) = x0 - h;
  const double fm = f(x);
  return (fp - 2.0 * f0 + fm) / (h * h);
}

inline Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng,
                            double lo = -2.0, double hi = 2.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

/// Straight-line forward pass written independently of the library's layer code.
inline double reference_forward(const dgm::NetArch& arch, const dgm::ParamStore& p,
                                const Vector& input) {
  auto silu = [](double z) { return z / (1.0 + std::exp(-z)); };
  auto affine = [&](const std::vector<double>& h, std::size_t layer) {
    const Matrix& w = p[2 * layer];
    const Matrix& b = p[2 * layer + 1];
    std::vector<double> out(static_cast<std::size_t>(w.rows()));
    for (Eigen::Index o = 0; o < w.rows(); ++o) {
      double s = b(0, o);
      for (Eigen::Index i = 0; i < w.cols(); ++i) s += w(o, i) * h[static_cast<std::size_t>(i)];
      out[static_cast<std::size_t>(o)] = s;
    }
    return out;
  };
  std::vector<double> h(input.data(), input.data() + input.size());
  h = affine(h, 0);
  for (auto& v : h) v = silu(v);
  std::size_t layer = 1;
  for (int b = 0; b < arch.blocks; ++b) {
    if (arch.kind == dgm::ArchKind::residual) {
      auto inner = affine(h, layer);
      for (auto& v : inner) v = silu(v);
      auto outer = affine(inner, layer + 1);
      for (std::size_t i = 0; i < h.size(); ++i) h[i] += outer[i];
      layer += 2;
    } else {
      h = affine(h, layer);
      for (auto& v : h) v = silu(v);
      layer += 1;
    }
  }
  return affine(h, layer)[0];
}

/// Net with a fixed seed whose biases are also randomised.
inline dgm::ParamStore random_params(const dgm::NetArch& arch, std::uint64_t seed) {
  dgm::ParamStore p = dgm::init_params(arch, seed);
  std::mt19937_64 rng(seed + 17);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (std::size_t i = 1; i < p.size(); i += 2) {
    for (Eigen::Index k = 0; k < p[i].size(); ++k) p[i].data()[k] = u(rng);
  }
  return p;
}

}  // namespace testing
