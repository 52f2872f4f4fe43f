#pragma once

#include "dgm/problems.hpp"

#include <vector>

namespace dgm {

/// HJB residual of the field at each row (t_i, x_i), recorded on the tape (B x 1).
ad::Var record_residuals(ad::Tape& tape, const ScalarField& field,
                         std::span<const ad::Var> params, const ControlProblem& problem,
                         const Vector& times, const Matrix& states);

/// J(T, z) - G(z) for each terminal state, recorded on the tape (B x 1).
ad::Var record_terminal_errors(ad::Tape& tape, const ScalarField& field,
                               std::span<const ad::Var> params, const ControlProblem& problem,
                               const Matrix& states);

/// Outward push of the optimal control at clipped coordinates (B x n): entry
/// (i, j) is max(0, -n_j dJ/dx_j) when x_ij lies on the box face with outward
/// normal n_j, and 0 elsewhere. Zero for problems that do not clip.
ad::Var record_boundary_violations(ad::Tape& tape, const ScalarField& field,
                                   std::span<const ad::Var> params, const ControlProblem& problem,
                                   const Vector& times, const Matrix& states);

/// Rows of states with at least one coordinate on a face of the box.
std::vector<Eigen::Index> boundary_rows(const ControlProblem& problem, const Matrix& states);

/// Residual values only, evaluated in chunks of at most `chunk` rows.
Vector residual_values(const ScalarField& field, const ParamStore& params,
                       const ControlProblem& problem, const Vector& times, const Matrix& states,
                       Eigen::Index chunk = 1024);

/// Terminal errors J(T, z) - G(z) without a tape.
Vector terminal_errors(const ScalarField& field, const ParamStore& params,
                       const ControlProblem& problem, const Matrix& states,
                       Eigen::Index chunk = 4096);

}  // namespace dgm
