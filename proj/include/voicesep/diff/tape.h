// Dense 2-D tensors with tape-based reverse-mode differentiation.
//
// A Tape records every operation of one forward pass. Var is a cheap handle
// (tape pointer + slot). Parameters live outside the tape in a ParameterSet
// so they survive across passes; Tape::backward() accumulates into them.
//
// Shapes are always (rows, cols); vectors are column matrices and scalars
// are 1x1.

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace voicesep::diff {

#ifdef VOICESEP_FLOAT32
using Scalar = float;
#else
using Scalar = double;
#endif

using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = std::size_t;

struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
  std::size_t size() const { return static_cast<std::size_t>(value.size()); }
};

/// Named parameters with stable addresses, kept in insertion order.
class ParameterSet {
 public:
  Parameter& add(std::string name, Matrix value);
  /// Glorot-uniform weight matrix.
  Parameter& add_glorot(std::string name, Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng);
  Parameter& add_zeros(std::string name, Eigen::Index rows, Eigen::Index cols);

  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;

  std::size_t size() const { return params_.size(); }
  std::size_t num_scalars() const;
  void zero_grad();

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  Parameter& operator[](std::size_t i) { return *params_[i]; }
  const Parameter& operator[](std::size_t i) const { return *params_[i]; }

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  /// Value of a 1x1 var.
  Scalar item() const;

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix& upstream)>;

  Var constant(Matrix value);
  Var parameter(Parameter& p);

  /// Records a computed node. `backward` receives the node's gradient and
  /// must route it to the inputs with accumulate().
  Var record(Matrix value, bool requires_grad, Backward backward);

  /// Reverse pass from a 1x1 var. Throws ContractError otherwise. Parameter
  /// gradients accumulate across calls.
  void backward(Var loss);

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
  /// Gradient of the last backward pass for an interior node.
  const Matrix& grad(Var v) const { return nodes_[v.id()].grad; }

  void accumulate(Var v, const Matrix& g);
  template <typename Expr>
  void accumulate_expr(Var v, const Expr& g) {
    auto& node = nodes_[v.id()];
    if (!node.requires_grad) return;
    if (node.grad.size() == 0) {
      node.grad = g;
    } else {
      node.grad += g;
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

// Primitive operations. All operands must come from the same tape.
// Shape mismatches throw ShapeError, bad indices throw IndexError.

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var matmul(Var a, Var b);
Var scale(Var a, Scalar s);
Var add_constant(Var a, Scalar c);
/// a (n x d) + b (1 x d), b broadcast over rows.
Var add_row(Var a, Var b);
/// a (n x d) + c (n x 1), c broadcast over columns.
Var add_col(Var a, Var c);
/// a (n x d) scaled row-wise by s (n x 1).
Var scale_rows(Var a, Var s);

Var sigmoid(Var a);
Var tanh(Var a);
Var relu(Var a);
Var log(Var a);
Var exp(Var a);
Var square(Var a);
/// Elementwise sqrt. The derivative uses sqrt(x + eps) so it stays finite
/// at zero; the forward value is the exact root.
Var sqrt(Var a, Scalar eps = Scalar(1e-12));
Var reciprocal(Var a);
/// Gradient is passed only where lo <= a <= hi.
Var clamp(Var a, Scalar lo, Scalar hi);
/// Row-wise softmax.
Var softmax_rows(Var a);

Var concat_cols(std::span<const Var> parts);
Var slice_cols(Var a, Eigen::Index begin, Eigen::Index count);
/// out[i] = a[index[i]].
Var gather_rows(Var a, std::span<const Index> index);
/// out (rows x d), out[index[i]] += a[i].
Var scatter_add_rows(Var a, std::span<const Index> index, Index rows);

/// Sum of all entries, 1x1.
Var sum(Var a);
Var mean(Var a);
/// n x d -> n x 1.
Var row_sum(Var a);
/// Euclidean norm of all entries, 1x1. Gradient at zero is zero.
Var l2_norm(Var a);

/// Inverted dropout with keep probability 1 - p.
Var dropout(Var a, Scalar p, std::mt19937_64& rng);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

}  // namespace voicesep::diff
