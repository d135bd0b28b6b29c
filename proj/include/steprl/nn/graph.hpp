#pragma once

#include <functional>
#include <span>
#include <vector>

#include "steprl/nn/tensor.hpp"

namespace steprl::nn {

class Graph;

// Handle to a node recorded on a Graph.
struct Var {
  Graph* graph = nullptr;
  int id = -1;

  const Tensor& value() const;
  int rows() const { return value().rows; }
  int cols() const { return value().cols; }
};

// Reverse-mode tape. Nodes are appended in evaluation order, so reverse
// creation order is a valid topological order for backpropagation.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor t);
  // Differentiable input owned by the graph; its gradient is read via grad().
  Var input(Tensor t);
  // Parameter leaf referencing an external tensor. When `sink` is non-null
  // the leaf is differentiable and backward() accumulates straight into
  // *sink; grad() of such a leaf returns the sink contents.
  Var parameter(const Tensor& value, Tensor* sink);

  const Tensor& value(Var v) const;
  // Gradient of the last backward() w.r.t. a node; zeros if it was not reached.
  Tensor grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].requires_grad; }

  // Throws std::invalid_argument for a non-scalar loss.
  void backward(Var loss);
  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

  // Used by operation implementations.
  using BackwardFn = std::function<void(Graph&, int self)>;
  Var record(Tensor value, std::initializer_list<Var> parents, BackwardFn fn);
  Tensor& grad_ref(int id);
  bool needs(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].requires_grad; }

 private:
  struct Node {
    Tensor own;
    const Tensor* external = nullptr;
    Tensor grad;
    Tensor* sink = nullptr;
    bool requires_grad = false;
    BackwardFn backward;
    const Tensor& value() const { return external ? *external : own; }
  };
  std::vector<Node> nodes_;
};

// Operations. Shapes are checked; mismatches throw std::invalid_argument.
Var matmul(Var a, Var b);
// Same shape, or b a 1 x n row broadcast over the rows of a.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var exp(Var a);
Var square(Var a);
Var gelu(Var a);
// Gradient passes where lo <= a <= hi.
Var clamp(Var a, double lo, double hi);
Var minimum(Var a, Var b);
Var maximum(Var a, Var b);
Var sum(Var a);
Var mean(Var a);
// sum(weights .* a) for constant weights of a's shape.
Var weighted_sum(Var a, const Tensor& weights);
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
Var embedding(Var table, std::span<const int> ids);
Var slice_rows(Var x, int begin, int count);
Var pick_rows(Var x, std::span<const int> rows);
// Column c as an n x 1 vector.
Var column(Var x, int c);
// Element (i, cols[i]) for each row i, as an n x 1 vector.
Var gather_cols(Var x, std::span<const int> cols);
Var log_softmax_rows(Var x);
// Multi-head causal self-attention over packed [T x d] projections.
Var causal_attention(Var q, Var k, Var v, int n_heads);

}  // namespace steprl::nn
