#pragma once

#include "dgm/jet.hpp"

#include <span>
#include <vector>

namespace dgm {

/// Value and input derivatives of J at one point (t, x).
struct DerivativeBundle {
  double value = 0.0;
  double dt = 0.0;
  Vector grad_x;
  double laplacian = 0.0;
};

/// A scalar field J(t, x) that can record itself on a tape.
///
/// Points are batches with one row (t, x_1, ..., x_n) per sample.
class ScalarField {
 public:
  virtual ~ScalarField() = default;

  virtual int state_dim() const = 0;

  /// Records J together with dJ/dt, grad_x J and the x-Laplacian.
  virtual ad::FieldJet record_jet(ad::Tape& tape, std::span<const ad::Var> params,
                                  const Matrix& points) const = 0;

  /// Records J only. points may itself require a gradient.
  virtual ad::Var record_value(ad::Tape& tape, std::span<const ad::Var> params,
                               ad::Var points) const = 0;
};

/// Derivatives at a single point, exact up to rounding.
DerivativeBundle input_derivatives(const ScalarField& field, const ParamStore& params, double t,
                                   std::span<const double> x);

/// Batched form: one bundle per row of points.
std::vector<DerivativeBundle> input_derivatives(const ScalarField& field,
                                                const ParamStore& params,
                                                const Matrix& points);

/// J at each row of points (B x 1).
Matrix field_values(const ScalarField& field, const ParamStore& params, const Matrix& points);

/// grad_x J at each row of points by one reverse sweep (B x n).
Matrix state_gradients(const ScalarField& field, const ParamStore& params,
                       const Matrix& points);

/// Stacks a time column in front of a state batch.
Matrix with_time(const Vector& times, const Matrix& states);
Matrix with_time(double t, const Matrix& states);

}  // namespace dgm
