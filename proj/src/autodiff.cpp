#include "dgm/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace dgm::ad {

namespace {

[[noreturn]] void shape_fail(const char* op, const Matrix& a, const Matrix& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                   shape_str(b));
}

void require_same_tape(const char* op, Var a, Var b) {
  if (&a.tape() != &b.tape()) throw Error(std::string(op) + ": operands on different tapes");
}

void require_same_shape(const char* op, Var a, Var b) {
  require_same_tape(op, a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_fail(op, a.value(), b.value());
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

double silu_derivative(double z, int order) {
  const double s = sigmoid(z);
  const double p = s * (1.0 - s);
  const double q = 1.0 - 2.0 * s;
  switch (order) {
    case 0:
      return z * s;
    case 1:
      return s + z * p;
    case 2:
      return p * (2.0 + z * q);
    case 3:
      return 3.0 * p * q + z * (p * q * q - 2.0 * p * p);
    case 4:
      return 4.0 * (p * q * q - 2.0 * p * p) + z * (p * q * q * q - 8.0 * p * p * q);
    default:
      throw UnsupportedPrimitive("silu: derivative order " + std::to_string(order) +
                                 " is not available");
  }
}

// ---------------------------------------------------------------------------
// Tape

Var Tape::constant(Matrix value) {
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  n.op = "constant";
  n.leaf = true;
  return Var(this, nodes_.size() - 1);
}

Var Tape::scalar(double value) { return constant(Matrix::Constant(1, 1, value)); }

Var Tape::variable(Matrix value) {
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  n.op = "variable";
  n.leaf = true;
  n.requires_grad = true;
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(const char* op, Matrix value, std::initializer_list<Var> parents,
                 Backward backward) {
  bool needs = false;
  for (const Var& p : parents) {
    if (p.tape_ != this) throw Error(std::string(op) + ": operand recorded on another tape");
    needs = needs || nodes_[p.id_].requires_grad;
  }
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  n.op = op;
  n.requires_grad = needs;
  if (needs) {
    n.has_rule = static_cast<bool>(backward);
    n.backward = std::move(backward);
  }
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(Var root) {
  if (root.tape_ != this) throw Error("backward: root belongs to another tape");
  if (swept_) throw Error("backward: tape has already been swept");
  if (root.rows() != 1 || root.cols() != 1) {
    throw ShapeError("backward: root must be 1x1, got " + shape_str(root.value()));
  }
  swept_ = true;
  Node& r = nodes_[root.id_];
  if (r.requires_grad) {
    r.grad = Matrix::Ones(1, 1);
    r.has_grad = true;
  }
  for (std::size_t i = root.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad || n.leaf) continue;
    if (!n.has_rule) {
      throw UnsupportedPrimitive(std::string("backward: no derivative rule for primitive '") +
                                 n.op + "'");
    }
    // Move the adjoint out so the rule may accumulate into other nodes freely.
    Matrix g = std::move(n.grad);
    n.grad = Matrix();
    n.has_grad = false;
    n.backward(*this, g);
    n.backward = nullptr;
  }
  for (Node& n : nodes_) {
    if (n.leaf && n.requires_grad && !n.has_grad) {
      n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
      n.has_grad = true;
    }
  }
}

const Matrix& Tape::grad(Var v) const {
  const Node& n = nodes_.at(v.id_);
  if (!swept_) throw Error("grad: backward() has not been run");
  if (!n.leaf || !n.requires_grad) {
    throw Error(std::string("grad: node '") + n.op + "' is not a trainable leaf");
  }
  return n.grad;
}

// ---------------------------------------------------------------------------
// Elementwise

Var add(Var a, Var b) {
  require_same_shape("add", a, b);
  return a.tape().record("add", a.value() + b.value(), {a, b},
                         [a, b](Tape& t, const Matrix& g) {
                           t.accumulate(a, g);
                           t.accumulate(b, g);
                         });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a, b);
  return a.tape().record("sub", a.value() - b.value(), {a, b},
                         [a, b](Tape& t, const Matrix& g) {
                           t.accumulate(a, g);
                           t.accumulate(b, -g);
                         });
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a, b);
  Matrix v = a.value().cwiseProduct(b.value());
  return a.tape().record("mul", std::move(v), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (a.requires_grad()) t.accumulate(a, g.cwiseProduct(b.value()));
    if (b.requires_grad()) t.accumulate(b, g.cwiseProduct(a.value()));
  });
}

Var square(Var a) {
  return a.tape().record("square", a.value().array().square().matrix(), {a},
                         [a](Tape& t, const Matrix& g) {
                           t.accumulate(a, 2.0 * g.cwiseProduct(a.value()));
                         });
}

Var scale(Var a, double s) {
  return a.tape().record("scale", s * a.value(), {a},
                         [a, s](Tape& t, const Matrix& g) { t.accumulate(a, s * g); });
}

Var add_constant(Var a, const Matrix& c) {
  if (a.rows() != c.rows() || a.cols() != c.cols()) shape_fail("add_constant", a.value(), c);
  return a.tape().record("add_constant", a.value() + c, {a},
                         [a](Tape& t, const Matrix& g) { t.accumulate(a, g); });
}

// ---------------------------------------------------------------------------
// Products

Var matmul(Var a, Var b) {
  require_same_tape("matmul", a, b);
  if (a.cols() != b.rows()) shape_fail("matmul", a.value(), b.value());
  Matrix v = a.value() * b.value();
  return a.tape().record("matmul", std::move(v), {a, b}, [a, b](Tape& t, const Matrix& g) {
    if (a.requires_grad()) t.accumulate(a, g * b.value().transpose());
    if (b.requires_grad()) t.accumulate(b, a.value().transpose() * g);
  });
}

Var matmul_nt(Var a, Var b) {
  require_same_tape("matmul_nt", a, b);
  if (a.cols() != b.cols()) shape_fail("matmul_nt", a.value(), b.value());
  Matrix v = a.value() * b.value().transpose();
  return a.tape().record("matmul_nt", std::move(v), {a, b},
                         [a, b](Tape& t, const Matrix& g) {
                           if (a.requires_grad()) t.accumulate(a, g * b.value());
                           if (b.requires_grad()) t.accumulate(b, g.transpose() * a.value());
                         });
}

Var add_row(Var a, Var row) {
  require_same_tape("add_row", a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) shape_fail("add_row", a.value(), row.value());
  Matrix v = a.value().rowwise() + row.value().row(0);
  return a.tape().record("add_row", std::move(v), {a, row},
                         [a, row](Tape& t, const Matrix& g) {
                           t.accumulate(a, g);
                           if (row.requires_grad()) t.accumulate(row, g.colwise().sum());
                         });
}

// ---------------------------------------------------------------------------
// Activation

Var silu(Var a, int order) {
  if (order < 0 || order > 4) {
    throw UnsupportedPrimitive("silu: derivative order " + std::to_string(order) +
                               " is not available");
  }
  Matrix v = a.value().unaryExpr([order](double z) { return silu_derivative(z, order); });
  static constexpr const char* names[] = {"silu", "silu'", "silu''", "silu'''", "silu''''"};
  if (order == 4) return a.tape().record(names[order], std::move(v), {a}, nullptr);
  return a.tape().record(names[order], std::move(v), {a},
                         [a, order](Tape& t, const Matrix& g) {
                           Matrix d = a.value().unaryExpr(
                               [order](double z) { return silu_derivative(z, order + 1); });
                           t.accumulate(a, g.cwiseProduct(d));
                         });
}

// ---------------------------------------------------------------------------
// Reductions and views

Var sum(Var a) {
  Matrix v = Matrix::Constant(1, 1, a.value().sum());
  return a.tape().record("sum", std::move(v), {a}, [a](Tape& t, const Matrix& g) {
    t.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

Var mean(Var a) {
  if (a.value().size() == 0) throw ShapeError("mean: empty operand");
  const double n = static_cast<double>(a.value().size());
  Matrix v = Matrix::Constant(1, 1, a.value().sum() / n);
  return a.tape().record("mean", std::move(v), {a}, [a, n](Tape& t, const Matrix& g) {
    t.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0) / n));
  });
}

Var row_sum(Var a) {
  Matrix v = a.value().rowwise().sum();
  return a.tape().record("row_sum", std::move(v), {a}, [a](Tape& t, const Matrix& g) {
    t.accumulate(a, g.replicate(1, a.cols()));
  });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw ShapeError("slice_cols: columns [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") out of range for " +
                     shape_str(a.value()));
  }
  Matrix v = a.value().middleCols(start, count);
  return a.tape().record("slice_cols", std::move(v), {a},
                         [a, start, count](Tape& t, const Matrix& g) {
                           Matrix full = Matrix::Zero(a.rows(), a.cols());
                           full.middleCols(start, count) = g;
                           t.accumulate(a, full);
                         });
}

Var reshape(Var a, Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != a.value().size()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.value()) + " as " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  }
  Matrix v = Eigen::Map<const Matrix>(a.value().data(), rows, cols);
  return a.tape().record("reshape", std::move(v), {a}, [a](Tape& t, const Matrix& g) {
    t.accumulate(a, Eigen::Map<const Matrix>(g.data(), a.rows(), a.cols()));
  });
}

Var group_mul(Var tall, Var small) {
  require_same_tape("group_mul", tall, small);
  if (small.rows() == 0 || tall.cols() != small.cols() || tall.rows() % small.rows() != 0) {
    shape_fail("group_mul", tall.value(), small.value());
  }
  const Eigen::Index g = tall.rows() / small.rows();
  Matrix v(tall.rows(), tall.cols());
  for (Eigen::Index b = 0; b < small.rows(); ++b) {
    v.middleRows(b * g, g) =
        (tall.value().middleRows(b * g, g).array().rowwise() * small.value().row(b).array())
            .matrix();
  }
  return tall.tape().record(
      "group_mul", std::move(v), {tall, small}, [tall, small, g](Tape& t, const Matrix& grad) {
        if (tall.requires_grad()) {
          Matrix d(tall.rows(), tall.cols());
          for (Eigen::Index b = 0; b < small.rows(); ++b) {
            d.middleRows(b * g, g) =
                (grad.middleRows(b * g, g).array().rowwise() * small.value().row(b).array())
                    .matrix();
          }
          t.accumulate(tall, d);
        }
        if (small.requires_grad()) {
          Matrix d(small.rows(), small.cols());
          for (Eigen::Index b = 0; b < small.rows(); ++b) {
            d.row(b) = (grad.middleRows(b * g, g).array() *
                        tall.value().middleRows(b * g, g).array())
                           .colwise()
                           .sum()
                           .matrix();
          }
          t.accumulate(small, d);
        }
      });
}

Var group_sum_squares(Var tall, Eigen::Index group, Eigen::Index first) {
  if (group <= 0 || first < 0 || first >= group || tall.rows() % group != 0) {
    throw ShapeError("group_sum_squares: group " + std::to_string(group) + " / first " +
                     std::to_string(first) + " invalid for " + shape_str(tall.value()));
  }
  const Eigen::Index batch = tall.rows() / group;
  const Eigen::Index span = group - first;
  Matrix v(batch, tall.cols());
  for (Eigen::Index b = 0; b < batch; ++b) {
    v.row(b) = tall.value().middleRows(b * group + first, span).array().square().colwise().sum();
  }
  return tall.tape().record(
      "group_sum_squares", std::move(v), {tall},
      [tall, group, first, batch, span](Tape& t, const Matrix& g) {
        Matrix d = Matrix::Zero(tall.rows(), tall.cols());
        for (Eigen::Index b = 0; b < batch; ++b) {
          d.middleRows(b * group + first, span) =
              2.0 * (tall.value().middleRows(b * group + first, span).array().rowwise() *
                     g.row(b).array())
                        .matrix();
        }
        t.accumulate(tall, d);
      });
}

Var sort_rows(Var a) {
  Matrix v = a.value();
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    std::sort(v.row(r).begin(), v.row(r).end());
  }
  return a.tape().record("sort_rows", std::move(v), {a}, nullptr);
}

// ---------------------------------------------------------------------------
// Parameter plumbing

std::vector<Var> bind(Tape& tape, const ParamStore& params, bool trainable) {
  std::vector<Var> out;
  out.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    out.push_back(trainable ? tape.variable(params[i]) : tape.constant(params[i]));
  }
  return out;
}

ParamStore gradients(const Tape& tape, std::span<const Var> bound, const ParamStore& params) {
  if (bound.size() != params.size()) {
    throw ShapeError("gradients: " + std::to_string(bound.size()) + " bound leaves for " +
                     std::to_string(params.size()) + " parameter tensors");
  }
  ParamStore out = params.zeros_like();
  for (std::size_t i = 0; i < bound.size(); ++i) out[i] = tape.grad(bound[i]);
  return out;
}

ParamStore param_gradient(const ParamStore& params,
                          const std::function<Var(Tape&, std::span<const Var>)>& loss,
                          double* value) {
  Tape tape;
  auto bound = bind(tape, params, true);
  Var root = loss(tape, bound);
  if (value != nullptr) *value = root.value()(0, 0);
  tape.backward(root);
  return gradients(tape, bound, params);
}

}  // namespace dgm::ad
