#include "dgm/field.hpp"

#include <string>

namespace dgm {

namespace {

void check_points(const ScalarField& field, const Matrix& points) {
  if (points.cols() != field.state_dim() + 1) {
    throw ShapeError("field: points must have " + std::to_string(field.state_dim() + 1) +
                     " columns (t, x), got " + shape_str(points));
  }
}

}  // namespace

std::vector<DerivativeBundle> input_derivatives(const ScalarField& field,
                                                const ParamStore& params,
                                                const Matrix& points) {
  check_points(field, points);
  ad::Tape tape;
  auto bound = ad::bind(tape, params, false);
  ad::FieldJet jet = field.record_jet(tape, bound, points);
  std::vector<DerivativeBundle> out(static_cast<std::size_t>(points.rows()));
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    auto& b = out[static_cast<std::size_t>(i)];
    b.value = jet.value.value()(i, 0);
    b.dt = jet.dt.value()(i, 0);
    b.grad_x = jet.grad_x.value().row(i).transpose();
    b.laplacian = jet.laplacian.value()(i, 0);
  }
  return out;
}

DerivativeBundle input_derivatives(const ScalarField& field, const ParamStore& params, double t,
                                   std::span<const double> x) {
  if (static_cast<int>(x.size()) != field.state_dim()) {
    throw ShapeError("input_derivatives: state has " + std::to_string(x.size()) +
                     " entries, field expects " + std::to_string(field.state_dim()));
  }
  Matrix point(1, x.size() + 1);
  point(0, 0) = t;
  for (std::size_t i = 0; i < x.size(); ++i) point(0, static_cast<Eigen::Index>(i) + 1) = x[i];
  return input_derivatives(field, params, point).front();
}

Matrix field_values(const ScalarField& field, const ParamStore& params, const Matrix& points) {
  check_points(field, points);
  ad::Tape tape;
  auto bound = ad::bind(tape, params, false);
  return field.record_value(tape, bound, tape.constant(points)).value();
}

Matrix state_gradients(const ScalarField& field, const ParamStore& params,
                       const Matrix& points) {
  check_points(field, points);
  ad::Tape tape;
  auto bound = ad::bind(tape, params, false);
  ad::Var input = tape.variable(points);
  ad::Var total = ad::sum(field.record_value(tape, bound, input));
  tape.backward(total);
  return tape.grad(input).rightCols(points.cols() - 1);
}

Matrix with_time(const Vector& times, const Matrix& states) {
  if (times.size() != states.rows()) {
    throw ShapeError("with_time: " + std::to_string(times.size()) + " times for " +
                     std::to_string(states.rows()) + " states");
  }
  Matrix out(states.rows(), states.cols() + 1);
  out.col(0) = times;
  out.rightCols(states.cols()) = states;
  return out;
}

Matrix with_time(double t, const Matrix& states) {
  return with_time(Vector::Constant(states.rows(), t), states);
}

}  // namespace dgm
