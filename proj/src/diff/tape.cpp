#include "voicesep/diff/tape.h"

#include <algorithm>
#include <cmath>

#include "voicesep/errors.h"

namespace voicesep::diff {
namespace {

std::string shape_str(const Matrix& m) {
  return "(" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ")";
}

void require_same_tape(Var a, Var b) {
  if (a.tape() == nullptr || a.tape() != b.tape()) throw ContractError("operands belong to different tapes");
}

void require_same_shape(const char* op, Var a, Var b) {
  require_same_tape(a, b);
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.value()) + " vs " +
                     shape_str(b.value()));
  }
}

bool any_grad(std::initializer_list<Var> vars) {
  for (Var v : vars) {
    if (v.tape()->requires_grad(v)) return true;
  }
  return false;
}

// Elementwise unary op; `derivative(x, y)` gives dy/dx per entry.
template <typename Forward, typename Derivative>
Var unary(Var a, Forward forward, Derivative derivative) {
  Tape& tape = *a.tape();
  const std::size_t out = tape.size();
  Matrix value = a.value().unaryExpr(forward);
  return tape.record(std::move(value), any_grad({a}), [a, out, derivative](Tape& t, const Matrix& g) {
    const Matrix& x = a.value();
    const Matrix& y = t.value(out);
    Matrix dx(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.size(); ++i) dx.data()[i] = g.data()[i] * derivative(x.data()[i], y.data()[i]);
    t.accumulate(a, dx);
  });
}

}  // namespace

// ParameterSet -------------------------------------------------------------

Parameter& ParameterSet::add(std::string name, Matrix value) {
  if (find(name) != nullptr) throw ContractError("duplicate parameter '" + name + "'");
  auto p = std::make_unique<Parameter>();
  p->name = std::move(name);
  p->value = std::move(value);
  p->zero_grad();
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter& ParameterSet::add_glorot(std::string name, Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix value(rows, cols);
  for (Eigen::Index i = 0; i < value.size(); ++i) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    value.data()[i] = static_cast<Scalar>((2.0 * u - 1.0) * bound);
  }
  return add(std::move(name), std::move(value));
}

Parameter& ParameterSet::add_zeros(std::string name, Eigen::Index rows, Eigen::Index cols) {
  return add(std::move(name), Matrix::Zero(rows, cols));
}

Parameter* ParameterSet::find(const std::string& name) {
  for (auto& p : params_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

const Parameter* ParameterSet::find(const std::string& name) const {
  return const_cast<ParameterSet*>(this)->find(name);
}

Parameter& ParameterSet::at(const std::string& name) {
  Parameter* p = find(name);
  if (p == nullptr) throw ContractError("unknown parameter '" + name + "'");
  return *p;
}

const Parameter& ParameterSet::at(const std::string& name) const {
  return const_cast<ParameterSet*>(this)->at(name);
}

std::size_t ParameterSet::num_scalars() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

// Tape ---------------------------------------------------------------------

const Matrix& Var::value() const { return tape_->value(id_); }

Scalar Var::item() const {
  const Matrix& v = value();
  if (v.size() != 1) throw ShapeError("item() on a non-scalar " + shape_str(v));
  return v(0, 0);
}

Var Tape::constant(Matrix value) { return record(std::move(value), false, nullptr); }

Var Tape::parameter(Parameter& p) {
  Node node;
  node.value = p.value;
  node.requires_grad = true;
  node.param = &p;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, bool requires_grad, Backward backward) {
#ifndef NDEBUG
  if (!value.allFinite()) throw NumericalError("non-finite value produced at tape node " + std::to_string(nodes_.size()));
#endif
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  if (requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Tape::accumulate(Var v, const Matrix& g) { accumulate_expr(v, g); }

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw ContractError("backward: loss belongs to another tape");
  if (loss.value().size() != 1) throw ContractError("backward requires a scalar loss, got " + shape_str(loss.value()));
  for (std::size_t i = 0; i <= loss.id(); ++i) nodes_[i].grad.resize(0, 0);
  if (!nodes_[loss.id()].requires_grad) return;
  nodes_[loss.id()].grad = Matrix::Ones(1, 1);

  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.requires_grad || node.grad.size() == 0) continue;
    if (node.param != nullptr) {
      node.param->grad += node.grad;
    } else if (node.backward) {
      node.backward(*this, node.grad);
    }
  }
}

// Binary ops -----------------------------------------------------------------

Var add(Var a, Var b) {
  require_same_shape("add", a, b);
  return a.tape()->record(a.value() + b.value(), any_grad({a, b}), [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a, b);
  return a.tape()->record(a.value() - b.value(), any_grad({a, b}), [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    t.accumulate_expr(b, -g);
  });
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a, b);
  return a.tape()->record(a.value().cwiseProduct(b.value()), any_grad({a, b}), [a, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accumulate_expr(a, g.cwiseProduct(b.value()));
    if (t.requires_grad(b)) t.accumulate_expr(b, g.cwiseProduct(a.value()));
  });
}

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ " + shape_str(a.value()) + " x " + shape_str(b.value()));
  }
  Matrix value = a.value() * b.value();
  return a.tape()->record(std::move(value), any_grad({a, b}), [a, b](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) t.accumulate_expr(a, g * b.value().transpose());
    if (t.requires_grad(b)) t.accumulate_expr(b, a.value().transpose() * g);
  });
}

Var scale(Var a, Scalar s) {
  return a.tape()->record(a.value() * s, any_grad({a}),
                          [a, s](Tape& t, const Matrix& g) { t.accumulate_expr(a, g * s); });
}

Var add_constant(Var a, Scalar c) {
  return a.tape()->record(a.value().array() + c, any_grad({a}),
                          [a](Tape& t, const Matrix& g) { t.accumulate(a, g); });
}

Var add_row(Var a, Var b) {
  require_same_tape(a, b);
  if (b.rows() != 1 || b.cols() != a.cols()) {
    throw ShapeError("add_row: expected 1x" + std::to_string(a.cols()) + " row, got " + shape_str(b.value()));
  }
  Matrix value = a.value().rowwise() + b.value().row(0);
  return a.tape()->record(std::move(value), any_grad({a, b}), [a, b](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    if (t.requires_grad(b)) t.accumulate_expr(b, g.colwise().sum());
  });
}

Var add_col(Var a, Var c) {
  require_same_tape(a, c);
  if (c.cols() != 1 || c.rows() != a.rows()) {
    throw ShapeError("add_col: expected " + std::to_string(a.rows()) + "x1 column, got " + shape_str(c.value()));
  }
  Matrix value = a.value().colwise() + c.value().col(0);
  return a.tape()->record(std::move(value), any_grad({a, c}), [a, c](Tape& t, const Matrix& g) {
    t.accumulate(a, g);
    if (t.requires_grad(c)) t.accumulate_expr(c, g.rowwise().sum());
  });
}

Var scale_rows(Var a, Var s) {
  require_same_tape(a, s);
  if (s.cols() != 1 || s.rows() != a.rows()) {
    throw ShapeError("scale_rows: expected " + std::to_string(a.rows()) + "x1 scale, got " + shape_str(s.value()));
  }
  Matrix value = a.value().array().colwise() * s.value().col(0).array();
  return a.tape()->record(std::move(value), any_grad({a, s}), [a, s](Tape& t, const Matrix& g) {
    if (t.requires_grad(a)) {
      Matrix ga = g.array().colwise() * s.value().col(0).array();
      t.accumulate(a, ga);
    }
    if (t.requires_grad(s)) t.accumulate_expr(s, g.cwiseProduct(a.value()).rowwise().sum());
  });
}

// Unary ops ------------------------------------------------------------------

Var sigmoid(Var a) {
  return unary(
      a,
      [](Scalar x) {
        return x >= 0 ? Scalar(1) / (Scalar(1) + std::exp(-x)) : std::exp(x) / (Scalar(1) + std::exp(x));
      },
      [](Scalar, Scalar y) { return y * (Scalar(1) - y); });
}

Var tanh(Var a) {
  return unary(
      a, [](Scalar x) { return std::tanh(x); }, [](Scalar, Scalar y) { return Scalar(1) - y * y; });
}

Var relu(Var a) {
  return unary(
      a, [](Scalar x) { return x > 0 ? x : Scalar(0); }, [](Scalar x, Scalar) { return x > 0 ? Scalar(1) : Scalar(0); });
}

Var log(Var a) {
  if ((a.value().array() <= 0).any()) throw NumericalError("log of a nonpositive value");
  return unary(
      a, [](Scalar x) { return std::log(x); }, [](Scalar x, Scalar) { return Scalar(1) / x; });
}

Var exp(Var a) {
  return unary(
      a, [](Scalar x) { return std::exp(x); }, [](Scalar, Scalar y) { return y; });
}

Var square(Var a) {
  return unary(
      a, [](Scalar x) { return x * x; }, [](Scalar x, Scalar) { return Scalar(2) * x; });
}

Var sqrt(Var a, Scalar eps) {
  if ((a.value().array() < 0).any()) throw NumericalError("sqrt of a negative value");
  return unary(
      a, [](Scalar x) { return std::sqrt(x); },
      [eps](Scalar x, Scalar) { return Scalar(0.5) / std::sqrt(x + eps); });
}

Var reciprocal(Var a) {
  return unary(
      a, [](Scalar x) { return Scalar(1) / x; }, [](Scalar, Scalar y) { return -y * y; });
}

Var clamp(Var a, Scalar lo, Scalar hi) {
  return unary(
      a, [lo, hi](Scalar x) { return std::clamp(x, lo, hi); },
      [lo, hi](Scalar x, Scalar) { return (x >= lo && x <= hi) ? Scalar(1) : Scalar(0); });
}

Var softmax_rows(Var a) {
  Tape& tape = *a.tape();
  const std::size_t out = tape.size();
  Matrix value = a.value();
  for (Eigen::Index i = 0; i < value.rows(); ++i) {
    auto row = value.row(i);
    row.array() -= row.maxCoeff();
    row = row.array().exp().matrix();
    row /= row.sum();
  }
  return tape.record(std::move(value), any_grad({a}), [a, out](Tape& t, const Matrix& g) {
    const Matrix& y = t.value(out);
    // dx = y * (g - <g, y>) per row.
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> dots = g.cwiseProduct(y).rowwise().sum();
    Matrix dx = y.array() * (g.array().colwise() - dots.array());
    t.accumulate(a, dx);
  });
}

// Structural ops ---------------------------------------------------------------

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no operands");
  Tape& tape = *parts[0].tape();
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  bool grad = false;
  for (Var p : parts) {
    require_same_tape(parts[0], p);
    if (p.rows() != rows) throw ShapeError("concat_cols: row counts differ");
    cols += p.cols();
    grad = grad || tape.requires_grad(p);
  }
  Matrix value(rows, cols);
  Eigen::Index offset = 0;
  for (Var p : parts) {
    value.middleCols(offset, p.cols()) = p.value();
    offset += p.cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return tape.record(std::move(value), grad, [inputs](Tape& t, const Matrix& g) {
    Eigen::Index off = 0;
    for (Var p : inputs) {
      if (t.requires_grad(p)) t.accumulate_expr(p, g.middleCols(off, p.cols()));
      off += p.cols();
    }
  });
}

Var slice_cols(Var a, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > a.cols()) {
    throw IndexError("slice_cols: [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") out of range for " + shape_str(a.value()));
  }
  Matrix value = a.value().middleCols(begin, count);
  return a.tape()->record(std::move(value), any_grad({a}), [a, begin, count](Tape& t, const Matrix& g) {
    Matrix ga = Matrix::Zero(a.rows(), a.cols());
    ga.middleCols(begin, count) = g;
    t.accumulate(a, ga);
  });
}

Var gather_rows(Var a, std::span<const Index> index) {
  const auto rows = static_cast<Index>(a.rows());
  Matrix value(static_cast<Eigen::Index>(index.size()), a.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= rows) {
      throw IndexError("gather_rows: index " + std::to_string(index[i]) + " >= " + std::to_string(rows));
    }
    value.row(static_cast<Eigen::Index>(i)) = a.value().row(static_cast<Eigen::Index>(index[i]));
  }
  std::vector<Index> idx(index.begin(), index.end());
  return a.tape()->record(std::move(value), any_grad({a}), [a, idx = std::move(idx)](Tape& t, const Matrix& g) {
    Matrix ga = Matrix::Zero(a.rows(), a.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      ga.row(static_cast<Eigen::Index>(idx[i])) += g.row(static_cast<Eigen::Index>(i));
    }
    t.accumulate(a, ga);
  });
}

Var scatter_add_rows(Var a, std::span<const Index> index, Index rows) {
  if (static_cast<Index>(a.rows()) != index.size()) {
    throw ShapeError("scatter_add_rows: " + std::to_string(index.size()) + " indices for " + shape_str(a.value()));
  }
  Matrix value = Matrix::Zero(static_cast<Eigen::Index>(rows), a.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= rows) {
      throw IndexError("scatter_add_rows: index " + std::to_string(index[i]) + " >= " + std::to_string(rows));
    }
    value.row(static_cast<Eigen::Index>(index[i])) += a.value().row(static_cast<Eigen::Index>(i));
  }
  std::vector<Index> idx(index.begin(), index.end());
  return a.tape()->record(std::move(value), any_grad({a}), [a, idx = std::move(idx)](Tape& t, const Matrix& g) {
    Matrix ga(a.rows(), a.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      ga.row(static_cast<Eigen::Index>(i)) = g.row(static_cast<Eigen::Index>(idx[i]));
    }
    t.accumulate(a, ga);
  });
}

// Reductions -----------------------------------------------------------------

Var sum(Var a) {
  Matrix value(1, 1);
  value(0, 0) = a.value().sum();
  return a.tape()->record(std::move(value), any_grad({a}), [a](Tape& t, const Matrix& g) {
    t.accumulate_expr(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

Var mean(Var a) {
  if (a.value().size() == 0) throw ShapeError("mean of an empty tensor");
  return scale(sum(a), Scalar(1) / static_cast<Scalar>(a.value().size()));
}

Var row_sum(Var a) {
  Matrix value = a.value().rowwise().sum();
  return a.tape()->record(std::move(value), any_grad({a}), [a](Tape& t, const Matrix& g) {
    Matrix ga = g.col(0).replicate(1, a.cols());
    t.accumulate(a, ga);
  });
}

Var l2_norm(Var a) {
  Tape& tape = *a.tape();
  const std::size_t out = tape.size();
  Matrix value(1, 1);
  value(0, 0) = a.value().norm();
  return tape.record(std::move(value), any_grad({a}), [a, out](Tape& t, const Matrix& g) {
    const Scalar norm = t.value(out)(0, 0);
    if (norm == Scalar(0)) return;
    t.accumulate_expr(a, a.value() * (g(0, 0) / norm));
  });
}

Var dropout(Var a, Scalar p, std::mt19937_64& rng) {
  if (p <= Scalar(0)) return a;
  if (p >= Scalar(1)) throw ContractError("dropout probability must be < 1");
  Matrix mask(a.rows(), a.cols());
  const Scalar keep_scale = Scalar(1) / (Scalar(1) - p);
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    mask.data()[i] = u < static_cast<double>(p) ? Scalar(0) : keep_scale;
  }
  Var m = a.tape()->constant(std::move(mask));
  return mul(a, m);
}

}  // namespace voicesep::diff
