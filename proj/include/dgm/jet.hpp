#pragma once

// Exact second-order input jets propagated through affine and SiLU layers.
//
// For a batch of B points with d input directions (time first, then the n
// state coordinates) a Jet carries, per hidden unit h:
//   value      h                                   B x w
//   tangent    dh/dz_k for each direction k        (B*d) x w, d rows per sample
//   laplacian  sum over state directions k >= 1 of d^2 h / dz_k^2      B x w
// Every field is an ordinary tape Var, so anything computed from a jet can
// be differentiated with respect to the weights.

#include "dgm/autodiff.hpp"

namespace dgm::ad {

struct Jet {
  Var value;
  Var tangent;
  Var laplacian;
  Eigen::Index directions = 0;
};

/// Input jet for points (B x d): identity tangents, zero Laplacian.
Jet seed_jet(Tape& tape, const Matrix& points);

/// z = h W^T + b with W stored (out x in) and b (1 x out).
Jet affine(const Jet& in, Var weight, Var bias);

Jet silu(const Jet& in);

Jet add(const Jet& a, const Jet& b);

/// Scalar head J = h w^T + c with w (1 x width), c (1 x 1).
struct FieldJet {
  Var value;      ///< B x 1
  Var dt;         ///< B x 1
  Var grad_x;     ///< B x n
  Var laplacian;  ///< B x 1
};

FieldJet project(const Jet& in, Var weight, Var bias);

}  // namespace dgm::ad
