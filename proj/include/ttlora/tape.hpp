#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ttlora/tt_core.hpp"
#include "ttlora/tt_linear.hpp"

namespace ttlora {

/// Minimal reverse-mode tape over dense row-major matrices.
///
/// Nodes are appended in evaluation order, so replaying them from last to
/// first is a reverse topological order and visits each op once. Only nodes
/// that depend on a parameter leaf carry a backward closure; constants such
/// as frozen weights never get a gradient buffer.
class Tape {
 public:
  struct Var {
    std::size_t id = static_cast<std::size_t>(-1);
    bool valid() const { return id != static_cast<std::size_t>(-1); }
  };

  Var constant(Matrix value);
  Var parameter(Matrix value);

  const Matrix& value(Var v) const;
  /// Gradient accumulated by backward(); a zero matrix for nodes that were
  /// never reached.
  Matrix grad(Var v) const;
  bool requires_grad(Var v) const;
  std::size_t size() const { return nodes_.size(); }
  bool backward_done() const { return backward_done_; }

  Var add(Var a, Var b);
  Var scale(Var a, double s);
  /// a * b
  Var matmul(Var a, Var b);
  /// a * b^T
  Var matmul_nt(Var a, Var b);
  /// x * W^T for a frozen W; W must outlive the tape.
  Var linear_frozen(Var x, const Matrix* weight);
  /// Adds a frozen row vector to every row; bias must outlive the tape.
  Var add_row_frozen(Var x, const Vector* bias);
  /// Adds a 1 x cols node to every row.
  Var add_row(Var x, Var row);
  Var gelu(Var a);
  Var softmax_rows(Var a);
  /// Column means, 1 x cols.
  Var mean_rows(Var a);
  Var sum(std::span<const Var> terms);

  /// x * (Delta W)^T where Delta W is the TT operator held by `cores`
  /// (parameter nodes, core i laid out as (r_{i-1} * k_i) x r_i).
  Var tt_apply(std::span<const Var> cores, const TensorizationMap& map, Var x);

  /// Mean softmax cross-entropy of rows of `logits` against class labels.
  Var cross_entropy(Var logits, std::span<const int> labels);
  /// Mean squared error over all entries.
  Var mse(Var prediction, const Matrix& target);

  /// Seeds d(loss)/d(loss) = seed and runs every recorded backward closure
  /// once. A tape can be replayed only once.
  void backward(Var loss, double seed = 1.0);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool needs_grad = false;
    std::function<void(Tape&, const Node&)> back;
  };

  Var push(Matrix value, bool needs_grad, std::function<void(Tape&, const Node&)> back = {});
  void accumulate(Var v, const Matrix& g);
  const Node& node(Var v) const;

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

using Var = Tape::Var;

/// Gradients with respect to one adapter's cores, plus the loss value.
struct GradBuffer {
  std::vector<TTCore> cores;
  double loss = 0.0;

  std::size_t element_count() const;
  void zero();
};

/// Registers every core as a parameter node.
std::vector<Var> register_cores(Tape& tape, const TTCores& cores);

/// W0 x + b + alpha * (Delta W) x for each row of x, with the adapter cores
/// already registered on the tape.
Var adapted_forward(Tape& tape, const AdaptedLinear& layer, std::span<const Var> cores, Var x);

/// Runs the reverse pass from `loss` and collects the gradients of `cores`.
/// Throws ContractViolation when the tape holds no completed forward pass.
GradBuffer backward(Tape& tape, Var loss, std::span<const Var> cores, double loss_grad = 1.0);

Matrix core_matrix(const TTCore& core);

}  // namespace ttlora
