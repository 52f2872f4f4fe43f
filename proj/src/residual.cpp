#include "dgm/residual.hpp"

#include <algorithm>

namespace dgm {

ad::Var record_residuals(ad::Tape& tape, const ScalarField& field,
                         std::span<const ad::Var> params, const ControlProblem& problem,
                         const Vector& times, const Matrix& states) {
  Vector state_costs;
  Matrix drifts;
  problem.residual_terms(times, states, state_costs, drifts);
  const ad::FieldJet jet = field.record_jet(tape, params, with_time(times, states));

  const ad::Var g = jet.grad_x;
  ad::Var transport = ad::row_sum(ad::mul(tape.constant(drifts), g));
  ad::Var quadratic = ad::row_sum(ad::mul(ad::matmul(g, tape.constant(problem.control_quadratic())), g));
  ad::Var r = ad::add(jet.dt, transport);
  r = ad::add(r, ad::scale(jet.laplacian, problem.generator_diffusion()));
  r = ad::sub(r, ad::scale(quadratic, 0.5));
  return ad::add_constant(r, state_costs);
}

ad::Var record_boundary_violations(ad::Tape& tape, const ScalarField& field,
                                   std::span<const ad::Var> params, const ControlProblem& problem,
                                   const Vector& times, const Matrix& states) {
  const ad::FieldJet jet = field.record_jet(tape, params, with_time(times, states));
  const Matrix& g = jet.grad_x.value();
  // max(0, -n g)^2 has the derivative of (m g)^2 with the mask m frozen at the active set.
  Matrix mask = Matrix::Zero(states.rows(), states.cols());
  if (problem.clips_to_domain()) {
    const Box& box = problem.domain();
    for (Eigen::Index i = 0; i < states.rows(); ++i) {
      for (Eigen::Index j = 0; j < states.cols(); ++j) {
        if (states(i, j) >= box.upper && g(i, j) < 0.0) mask(i, j) = -1.0;
        if (states(i, j) <= box.lower && g(i, j) > 0.0) mask(i, j) = 1.0;
      }
    }
  }
  return ad::mul(jet.grad_x, tape.constant(mask));
}

std::vector<Eigen::Index> boundary_rows(const ControlProblem& problem, const Matrix& states) {
  std::vector<Eigen::Index> rows;
  if (!problem.clips_to_domain()) return rows;
  const Box& box = problem.domain();
  for (Eigen::Index i = 0; i < states.rows(); ++i) {
    const auto r = states.row(i);
    if (r.maxCoeff() >= box.upper || r.minCoeff() <= box.lower) rows.push_back(i);
  }
  return rows;
}

ad::Var record_terminal_errors(ad::Tape& tape, const ScalarField& field,
                               std::span<const ad::Var> params, const ControlProblem& problem,
                               const Matrix& states) {
  const Matrix points = with_time(problem.horizon(), states);
  ad::Var j = field.record_value(tape, params, tape.constant(points));
  return ad::add_constant(j, -problem.terminal_cost_batch(states));
}

Vector residual_values(const ScalarField& field, const ParamStore& params,
                       const ControlProblem& problem, const Vector& times, const Matrix& states,
                       Eigen::Index chunk) {
  if (times.size() != states.rows()) throw ShapeError("residual_values: times/states mismatch");
  Vector out(states.rows());
  for (Eigen::Index start = 0; start < states.rows(); start += chunk) {
    const Eigen::Index rows = std::min(chunk, states.rows() - start);
    ad::Tape tape;
    auto bound = ad::bind(tape, params, false);
    out.segment(start, rows) = record_residuals(tape, field, bound, problem,
                                                times.segment(start, rows),
                                                states.middleRows(start, rows))
                                   .value()
                                   .col(0);
  }
  return out;
}

Vector terminal_errors(const ScalarField& field, const ParamStore& params,
                       const ControlProblem& problem, const Matrix& states, Eigen::Index chunk) {
  Vector out(states.rows());
  for (Eigen::Index start = 0; start < states.rows(); start += chunk) {
    const Eigen::Index rows = std::min(chunk, states.rows() - start);
    ad::Tape tape;
    auto bound = ad::bind(tape, params, false);
    out.segment(start, rows) =
        record_terminal_errors(tape, field, bound, problem, states.middleRows(start, rows))
            .value()
            .col(0);
  }
  return out;
}

}  // namespace dgm
