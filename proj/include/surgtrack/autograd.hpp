#pragma once

#include "surgtrack/tensor.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace surgtrack {

/// Handle to a node of a Graph. Only meaningful together with its graph.
struct Var {
  int id = -1;
};

/// Reverse-mode automatic differentiation over dense matrices.
///
/// Every op appends a node holding its forward value and a closure that
/// scatters the node's gradient into its inputs. Nodes whose inputs carry no
/// gradient requirement skip the closure, so frozen subgraphs cost forward
/// time only. A graph built with grad disabled never records closures.
class Graph {
 public:
  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Matrix value);
  Var leaf(Matrix value, bool requires_grad);

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  /// Gradient of the last backward() output w.r.t. v; zeros if v did not
  /// participate.
  Matrix grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  /// Seeds d(out)/d(out) = 1 for a 1×1 output and propagates backwards.
  void backward(Var out);

  Var matmul(Var a, Var b);
  Var matmul_nt(Var a, Var b);  // a · bᵀ
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);          // elementwise
  Var add_row(Var a, Var row);    // broadcast 1×n row over every row of a
  Var mul_row(Var a, Var row);    // broadcast elementwise product
  Var scale(Var a, double s);
  Var gelu(Var a);
  Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-6);
  /// Row softmax. With top_k > 0 and fewer than the row length, only the
  /// top_k largest entries of each row (ties broken by lower column index)
  /// receive probability mass.
  Var softmax_rows(Var a, int top_k = 0);
  Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
  Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);
  Var concat_cols(std::span<const Var> parts);
  Var concat_rows(std::span<const Var> parts);
  Var sum_all(Var a);
  /// λ_bce·mean BCE-with-logits + λ_dice·(1 − soft Dice(sigmoid)), Dice
  /// smoothed with 1 in numerator and denominator. logits is n×1.
  Var seg_loss(Var logits, std::span<const std::uint8_t> target, double lambda_bce, double lambda_dice);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;  // allocated on first accumulation
    bool requires_grad = false;
    std::function<void()> backward;
  };

  Var push(Matrix value, std::initializer_list<Var> inputs);
  bool any_requires(std::initializer_list<Var> inputs) const;
  void accumulate(Var v, const Matrix& g);
  template <typename Expr>
  void accumulate_expr(Var v, const Expr& g);
  const Matrix& out_grad(int id) const { return nodes_[id].grad; }

  bool grad_enabled_;
  std::vector<Node> nodes_;
};

}  // namespace surgtrack
