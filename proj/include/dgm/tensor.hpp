#pragma once

#include <Eigen/Core>

#include <string>

namespace dgm {

/// Dense row-major matrix of doubles. Batches are stored one sample per row;
/// scalars are 1x1 and column vectors are n x 1.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

inline std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace dgm
