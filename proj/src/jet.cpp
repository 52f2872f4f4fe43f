#include "dgm/jet.hpp"

namespace dgm::ad {

Jet seed_jet(Tape& tape, const Matrix& points) {
  const Eigen::Index batch = points.rows();
  const Eigen::Index d = points.cols();
  Matrix tangent = Matrix::Zero(batch * d, d);
  for (Eigen::Index b = 0; b < batch; ++b) {
    tangent.middleRows(b * d, d).setIdentity();
  }
  return Jet{tape.constant(points), tape.constant(std::move(tangent)),
             tape.constant(Matrix::Zero(batch, d)), d};
}

Jet affine(const Jet& in, Var weight, Var bias) {
  return Jet{add_row(matmul_nt(in.value, weight), bias), matmul_nt(in.tangent, weight),
             matmul_nt(in.laplacian, weight), in.directions};
}

Jet silu(const Jet& in) {
  Var d1 = ad::silu(in.value, 1);
  Var d2 = ad::silu(in.value, 2);
  Var curvature = group_sum_squares(in.tangent, in.directions, 1);
  Var lap = ad::add(mul(d1, in.laplacian), mul(d2, curvature));
  return Jet{ad::silu(in.value, 0), group_mul(in.tangent, d1), lap, in.directions};
}

Jet add(const Jet& a, const Jet& b) {
  if (a.directions != b.directions) throw ShapeError("jet add: direction count mismatch");
  return Jet{ad::add(a.value, b.value), ad::add(a.tangent, b.tangent),
             ad::add(a.laplacian, b.laplacian), a.directions};
}

FieldJet project(const Jet& in, Var weight, Var bias) {
  if (weight.rows() != 1) throw ShapeError("project: head weight must have one row");
  const Eigen::Index batch = in.value.rows();
  const Eigen::Index d = in.directions;
  Var value = add_row(matmul_nt(in.value, weight), bias);
  Var grads = reshape(matmul_nt(in.tangent, weight), batch, d);
  return FieldJet{value, slice_cols(grads, 0, 1), slice_cols(grads, 1, d - 1),
                  matmul_nt(in.laplacian, weight)};
}

}  // namespace dgm::ad
