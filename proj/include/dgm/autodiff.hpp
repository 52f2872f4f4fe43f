#pragma once

// Reverse-mode differentiation over dense matrices.
//
// Graphs are recorded eagerly on a Tape: every operation computes its value
// immediately and stores a rule for propagating adjoints to its parents.
// Derivative computations (see jet.hpp) are themselves recorded as ordinary
// operations, so a loss containing input derivatives can be differentiated
// with respect to parameters by a single reverse sweep.

#include "dgm/errors.hpp"
#include "dgm/params.hpp"
#include "dgm/tensor.hpp"

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

namespace dgm::ad {

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  bool requires_grad() const;
  bool valid() const noexcept { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  /// Receives the adjoint of the node's output and accumulates into its parents.
  using Backward = std::function<void(Tape&, const Matrix&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var scalar(double value);
  /// Leaf whose gradient is kept after backward().
  Var variable(Matrix value);

  /// Records an operation. The backward rule is dropped when no parent
  /// requires a gradient. A null rule marks a primitive without a derivative.
  Var record(const char* op, Matrix value, std::initializer_list<Var> parents,
             Backward backward);

  /// Runs the reverse sweep from a 1x1 root. May be called once per tape.
  void backward(Var root);

  /// Gradient of a variable after backward(); zeros if it did not influence the root.
  const Matrix& grad(Var v) const;

  template <class Expr>
  void accumulate(Var v, const Expr& g) {
    Node& n = nodes_[v.id_];
    if (!n.requires_grad) return;
    if (n.has_grad) {
      n.grad += g;
    } else {
      n.grad = g;
      n.has_grad = true;
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }
  const char* op_name(Var v) const { return nodes_[v.id_].op; }

 private:
  friend class Var;

  struct Node {
    Matrix value;
    Matrix grad;
    const char* op = "";
    bool requires_grad = false;
    bool has_grad = false;
    bool leaf = false;
    bool has_rule = false;
    Backward backward;
  };

  std::deque<Node> nodes_;
  bool swept_ = false;
};

inline const Matrix& Var::value() const { return tape_->nodes_[id_].value; }
inline bool Var::requires_grad() const { return tape_->nodes_[id_].requires_grad; }

// Elementwise arithmetic on equal shapes.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var square(Var a);
Var scale(Var a, double s);
/// a + c for a constant matrix c of the same shape.
Var add_constant(Var a, const Matrix& c);

/// a * b
Var matmul(Var a, Var b);
/// a * b^T; the affine-layer product with weights stored out x in.
Var matmul_nt(Var a, Var b);
/// a + 1 * row, broadcasting a 1 x cols row over every row of a.
Var add_row(Var a, Var row);

/// k-th derivative of silu(z) = z * sigmoid(z), elementwise, k in [0, 4].
/// Orders 0..3 are differentiable; the reverse rule of order 4 is not provided.
Var silu(Var a, int order = 0);

/// Sum of all entries (1x1).
Var sum(Var a);
/// Mean of all entries (1x1).
Var mean(Var a);
/// Per-row sum (rows x 1).
Var row_sum(Var a);

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
/// Row-major reinterpretation to rows x cols.
Var reshape(Var a, Eigen::Index rows, Eigen::Index cols);

/// tall has g rows per row of small; row r of the result is tall[r] * small[r / g].
Var group_mul(Var tall, Var small);
/// For each group of g consecutive rows, sums the squares of rows first..g-1.
Var group_sum_squares(Var tall, Eigen::Index group, Eigen::Index first);

/// Sorts each row ascending. Has no derivative rule.
Var sort_rows(Var a);

/// Elementwise silu derivative of the given order on a plain double.
double silu_derivative(double z, int order);

/// Records trainable leaves for every tensor of the store (or constants).
std::vector<Var> bind(Tape& tape, const ParamStore& params, bool trainable);

/// Collects the gradients of bound leaves into a store shaped like params.
ParamStore gradients(const Tape& tape, std::span<const Var> bound,
                     const ParamStore& params);

/// Records loss(tape, bound params), runs the reverse sweep and returns the
/// parameter gradient. The loss value is written to *value when non-null.
ParamStore param_gradient(
    const ParamStore& params,
    const std::function<Var(Tape&, std::span<const Var>)>& loss,
    double* value = nullptr);

}  // namespace dgm::ad
