#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "gpldla/tensor.hpp"

namespace gpldla {

namespace detail {
struct Node;
}

// Handle to a value recorded on a dynamic reverse-mode graph.
//
// Graphs are built eagerly as operations are applied and are owned by the
// handles that reference them. A graph is meant to live for one episode and
// must not be shared between threads while backward() runs.
class Var {
 public:
  using NodePtr = std::shared_ptr<detail::Node>;
  // Receives the gradient flowing into the node, the node's value and its
  // parents; must accumulate into every parent that requires a gradient.
  using BackwardFn =
      std::function<void(const Tensor& grad, const Tensor& value, std::span<const NodePtr> parents)>;

  Var();

  // Leaf whose gradient is tracked.
  static Var parameter(Tensor value);
  // Leaf excluded from differentiation.
  static Var constant(Tensor value);
  // Interior node; used by operation implementations.
  static Var make(Tensor value, std::vector<Var> parents, BackwardFn backward);

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }
  double item() const { return value().item(); }
  bool requires_grad() const;

  // Gradient from the last backward() through this node; zeros if the node
  // was not on a path to the root.
  Tensor grad() const;

  const NodePtr& node() const { return node_; }

 private:
  explicit Var(NodePtr node) : node_(std::move(node)) {}
  NodePtr node_;
};

// Adds `g` into the gradient buffer of `node` when it is tracked.
void accumulate_grad(const Var::NodePtr& node, const Tensor& g);

// Reverse sweep from a scalar root. Gradients of all nodes reachable from
// `root` are reset before the sweep, so repeated calls do not accumulate.
void backward(const Var& root);

// Elementwise arithmetic. Operands must share a shape, or one side must hold
// exactly one element, which is then broadcast.
Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator/(const Var& a, const Var& b);
Var operator-(const Var& a);
Var operator+(const Var& a, double s);
Var operator+(double s, const Var& a);
Var operator-(const Var& a, double s);
Var operator-(double s, const Var& a);
Var operator*(const Var& a, double s);
Var operator*(double s, const Var& a);
Var operator/(const Var& a, double s);

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);

Var exp(const Var& a);
Var log(const Var& a);
Var sqrt(const Var& a);
Var square(const Var& a);
Var reciprocal(const Var& a);
Var tanh(const Var& a);
Var relu(const Var& a);
// max(a, floor) elementwise; the gradient passes where a > floor.
Var clamp_min(const Var& a, double floor);

Var sum(const Var& a);
Var mean(const Var& a);
// Per-row sums of a matrix -> [rows].
Var sum_rows(const Var& m);
// Per-column sums of a matrix -> [cols].
Var sum_cols(const Var& m);

// m[n x c] + r broadcast over rows (r has c elements).
Var add_row(const Var& m, const Var& r);
// m[n x c] + v broadcast over columns (v has n elements).
Var add_col(const Var& m, const Var& v);
// m[n x c] / v broadcast over columns (v has n elements).
Var div_col(const Var& m, const Var& v);

Var softmax(const Var& v);
// Scalar log-sum-exp over all elements.
Var log_sum_exp(const Var& v);
// Row-wise log-sum-exp of a matrix -> [rows].
Var log_sum_exp_rows(const Var& m);

// out[i] = m(i, index[i]).
Var pick(const Var& m, std::span<const std::size_t> index);
Var concat_rows(const Var& a, const Var& b);
Var slice_rows(const Var& m, std::size_t begin, std::size_t end);
// Reshape preserving element order.
Var reshape(const Var& a, Shape shape);

}  // namespace gpldla
