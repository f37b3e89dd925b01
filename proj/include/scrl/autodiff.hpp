#pragma once

#include "scrl/types.hpp"

#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace scrl {

// Floor applied to softmax outputs before taking logarithms in the loss
// kernels, and to Sinkhorn marginals before division.
inline constexpr double kLogFloor = 1e-30;

/// A trainable matrix. Lives outside any tape; gradients accumulate
/// across backward passes until zero_grad().
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter(std::string name_, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(name_)),
        value(Matrix::Zero(rows, cols)),
        grad(Matrix::Zero(rows, cols)) {}

  void zero_grad() { grad.setZero(); }
};

class Tape;

/// Lightweight handle to a node on a Tape.
class Variable {
 public:
  Variable() = default;

  const Matrix& value() const;
  /// For leaf variables this is the bound Parameter's accumulated
  /// gradient; for intermediates, the gradient from the last backward().
  const Matrix& grad() const;
  bool requires_grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  int id() const { return id_; }
  Tape* tape() const { return tape_; }

 private:
  friend class Tape;
  Variable(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Record of differentiable matrix operations. Nodes are appended in
/// execution order, so every node's inputs precede it and a single
/// reverse sweep accumulates exact gradients.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf node bound to a Parameter; backward() accumulates into p.grad.
  Variable leaf(Parameter& p);
  /// Gradient-free constant.
  Variable constant(Matrix value);

  Variable matmul(Variable a, Variable b);
  /// Sparse-dense product s*d. The sparse side carries no gradient.
  Variable spmm(const CsrMatrix& s, Variable d);
  Variable relu(Variable a);
  /// Row-wise softmax of a/tau with per-row max subtraction.
  Variable row_softmax(Variable a, double tau);
  /// Inverted dropout: zero with probability `rate`, scale survivors by
  /// 1/(1-rate). Identity when `training` is false.
  Variable dropout(Variable a, double rate, bool training, std::mt19937_64& rng);
  Variable concat_cols(Variable a, Variable b);
  Variable add(Variable a, Variable b);
  /// a + bias broadcast over rows; bias is 1 x n.
  Variable add_row_bias(Variable a, Variable bias);
  /// L2-normalize rows (axis=1) or columns (axis=0). Zero vectors pass
  /// through unchanged.
  Variable l2_normalize(Variable a, int axis);
  /// Sum of all entries, as a 1x1 scalar.
  Variable sum(Variable a);
  /// scale * sum_ij weights_ij * log(max(probs_ij, kLogFloor)), as 1x1.
  Variable weighted_log_sum(Variable probs, Matrix weights, double scale);
  /// scale * sum over (row, col) cells of log(max(probs_rc, kLogFloor)).
  Variable gather_log_sum(Variable probs,
                          std::vector<std::pair<int, int>> cells,
                          double scale);

  /// Reverse sweep from a 1x1 loss node. Intermediate gradients are
  /// reset per call; Parameter gradients accumulate.
  void backward(Variable loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
    int in0 = -1;
    int in1 = -1;
    // Accumulates input gradients given this node's gradient.
    std::function<void(Tape&, int)> backprop;
  };

  int push(Node node);
  Node& node(int id) { return nodes_[id]; }
  Matrix& grad_of(int id);
  void check_same_tape(Variable v) const;

  friend class Variable;
  std::vector<Node> nodes_;
};

}  // namespace scrl
