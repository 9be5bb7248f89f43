#pragma once

#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <vector>

#include "lcpvae/tensor.hpp"

namespace lcpvae {

/// One vertex of a define-by-run computation graph.
///
/// `grad` always has the shape of `value`. Parents are kept even across a
/// stop-gradient edge so that backward() can reset every reachable gradient;
/// whether adjoints flow along the edge is decided by `backward_fn`.
struct Node {
  Tensor value;
  Tensor grad;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(const Node&)> backward_fn;
  bool requires_grad = false;
};

/// Shared handle to a graph node.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Var constant(Tensor value);
  /// Leaf that receives gradients.
  static Var parameter(Tensor value);

  bool valid() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_->requires_grad; }

  /// In-place write access for leaf values (optimizer updates, finite
  /// differences). Not for use on interior nodes.
  std::span<double> mutable_value() { return node_->value.mutable_data(); }
  void zero_grad();

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

enum class UnaryOp { exp, log, tanh, square, abs, neg };
enum class BinaryOp { add, sub, mul, div };

/// [m, k] x [k, n] -> [m, n].
Var matmul(const Var& a, const Var& b);

/// Elementwise unary op. log requires strictly positive input.
Var unary(UnaryOp op, const Var& x);
/// Elementwise binary op over equal shapes, or a single-element operand
/// broadcast against the other. div requires a non-zero denominator.
Var binary(BinaryOp op, const Var& a, const Var& b);

inline Var exp(const Var& x) { return unary(UnaryOp::exp, x); }
inline Var log(const Var& x) { return unary(UnaryOp::log, x); }
inline Var tanh(const Var& x) { return unary(UnaryOp::tanh, x); }
inline Var square(const Var& x) { return unary(UnaryOp::square, x); }
inline Var abs(const Var& x) { return unary(UnaryOp::abs, x); }

inline Var operator+(const Var& a, const Var& b) { return binary(BinaryOp::add, a, b); }
inline Var operator-(const Var& a, const Var& b) { return binary(BinaryOp::sub, a, b); }
inline Var operator*(const Var& a, const Var& b) { return binary(BinaryOp::mul, a, b); }
inline Var operator/(const Var& a, const Var& b) { return binary(BinaryOp::div, a, b); }
inline Var operator-(const Var& x) { return unary(UnaryOp::neg, x); }

Var scale(const Var& x, double factor);
Var add_scalar(const Var& x, double offset);

/// [m, n] + [1, n], the row added to every row of `a`.
Var add_rowwise(const Var& a, const Var& row);

/// Concatenates along `axis`; all other extents must agree.
Var concat(std::span<const Var> parts, std::size_t axis);
Var concat(std::initializer_list<Var> parts, std::size_t axis);

/// Columns [begin, end) of a 2-D tensor.
Var slice_cols(const Var& x, std::size_t begin, std::size_t end);

/// Clamp to [lo, hi]; the adjoint passes only where the input is inside.
Var clamp(const Var& x, double lo, double hi);

/// Identity on values, zero adjoint.
Var stop_gradient(const Var& x);

/// Sum of all elements, rank-0 result.
Var sum(const Var& x);
Var mean(const Var& x);

/// Reverse sweep from a single-element root. Every node reachable from
/// `root` has its gradient reset first, so afterwards each requires_grad
/// node holds exactly d root / d node.
void backward(const Var& root);

}  // namespace lcpvae
