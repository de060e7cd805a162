#pragma once

// Minimal reverse-mode automatic differentiation over dense matrices.
//
// A Tape records every operation applied to its variables; backward() replays the
// recorded closures in reverse order. Operations whose inputs are all constants do
// not record a backward closure. A tape is single-use and not thread-safe; build one
// per loss evaluation.

#include <Eigen/Dense>

#include <functional>
#include <utility>
#include <vector>

namespace gprompt {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

namespace ad {

class Tape;

class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, int self, const Matrix& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var parameter(Matrix value);
  Var constant(Matrix value);

  // Seeds d(scalar)/d(scalar) = 1 and propagates to every parameter.
  void backward(Var scalar);

  // Zero matrix of the right shape if the variable received no gradient.
  Matrix grad(Var v) const;

  const Matrix& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Used by operation implementations.
  Var record(Matrix value, const std::vector<Var>& parents, Backward back);
  void accumulate(int id, const Matrix& g);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward back;
    bool requires_grad = false;
    bool has_grad = false;
  };
  std::vector<Node> nodes_;
};

// Linear algebra.
Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // elementwise
Var scale(Var a, double s);
Var add_row(Var a, Var row);  // broadcast a 1×n row over every row of a
Var vstack(const std::vector<Var>& parts);

// Elementwise nonlinearities.
Var relu(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
Var exp(Var a);
Var log(Var a);

// Reductions.
Var sum(Var a);        // 1×1
Var mean(Var a);       // 1×1
Var sum_rows(Var a);   // N×d → 1×d
Var mean_rows(Var a);  // N×d → 1×d
Var squared_norm(Var a);

// Row-wise L2 normalization, x / max(|x|, min_norm). With min_norm = 0 a zero-norm
// row throws NumericError.
Var normalize_rows(Var a, double min_norm = 0.0);

// Keeps entries strictly above `threshold`, zeroing the rest. Gradient flows only
// through the kept entries.
Var gate_above(Var a, double threshold);

// Forward: indicator(a > threshold). Backward: identity (straight-through estimator).
Var straight_through_step(Var a, double threshold);

// Builds a rows×cols matrix whose (dst_row, dst_col) entry accumulates
// src(src_row, src_col) for every listed placement.
struct Placement {
  Eigen::Index src_row, src_col, dst_row, dst_col;
};
Var scatter(Var src, Eigen::Index rows, Eigen::Index cols, std::vector<Placement> placements);

// D^{-1/2} (A + I) D^{-1/2} with D the degree matrix of A + I.
Var sym_normalize_adjacency(Var adjacency);

// Losses (all return 1×1).
// Mean over rows of -log softmax(logits)[i, target_i]; with exclude_diagonal the
// softmax of row i ranges over columns j != i.
Var softmax_cross_entropy(Var logits, const std::vector<int>& targets, bool exclude_diagonal = false);
Var bce_with_logits(Var logits, const Matrix& targets);
Var mean_squared_error(Var prediction, const Matrix& targets);

}  // namespace ad
}  // namespace gprompt
