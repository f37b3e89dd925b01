#include "scrl/autodiff.hpp"

#include <cmath>
#include <sstream>

namespace scrl {

const Matrix& Variable::value() const { return tape_->nodes_[id_].value; }

const Matrix& Variable::grad() const {
  const auto& n = tape_->nodes_[id_];
  return n.param != nullptr ? n.param->grad : n.grad;
}

bool Variable::requires_grad() const { return tape_->nodes_[id_].requires_grad; }

int Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return static_cast<int>(nodes_.size()) - 1;
}

Matrix& Tape::grad_of(int id) {
  Node& n = nodes_[id];
  return n.param != nullptr ? n.param->grad : n.grad;
}

void Tape::check_same_tape(Variable v) const {
  if (v.tape() != this) throw std::invalid_argument("variable belongs to a different tape");
}

Variable Tape::leaf(Parameter& p) {
  Node n;
  n.value = p.value;
  n.requires_grad = true;
  n.param = &p;
  return Variable(this, push(std::move(n)));
}

Variable Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = false;
  return Variable(this, push(std::move(n)));
}

namespace {

[[noreturn]] void shape_fail(const char* op, Eigen::Index ar, Eigen::Index ac,
                             Eigen::Index br, Eigen::Index bc) {
  std::ostringstream os;
  os << op << ": incompatible shapes " << ar << "x" << ac << " and " << br << "x" << bc;
  throw ShapeError(os.str());
}

}  // namespace

Variable Tape::matmul(Variable a, Variable b) {
  check_same_tape(a);
  check_same_tape(b);
  if (a.cols() != b.rows()) shape_fail("matmul", a.rows(), a.cols(), b.rows(), b.cols());
  Node n;
  n.value = a.value() * b.value();
  n.requires_grad = a.requires_grad() || b.requires_grad();
  n.in0 = a.id();
  n.in1 = b.id();
  n.backprop = [](Tape& t, int self) {
    const Node& s = t.node(self);
    const Matrix& g = s.grad;
    if (t.node(s.in0).requires_grad) t.grad_of(s.in0).noalias() += g * t.node(s.in1).value.transpose();
    if (t.node(s.in1).requires_grad) t.grad_of(s.in1).noalias() += t.node(s.in0).value.transpose() * g;
  };
  return Variable(this, push(std::move(n)));
}

Variable Tape::spmm(const CsrMatrix& s, Variable d) {
  check_same_tape(d);
  if (s.cols() != d.rows()) shape_fail("spmm", s.rows(), s.cols(), d.rows(), d.cols());
  Node n;
  n.value = s * d.value();
  n.requires_grad = d.requires_grad();
  n.in0 = d.id();
  CsrMatrix st = s.transpose();
  n.backprop = [st](Tape& t, int self) {
    const Node& sn = t.node(self);
    if (t.node(sn.in0).requires_grad) t.grad_of(sn.in0).noalias() += st * sn.grad;
  };
  return Variable(this, push(std::move(n)));
}

Variable Tape::relu(Variable a) {
  check_same_tape(a);
  Node n;
  n.value = a.value().cwiseMax(0.0);
  n.requires_grad = a.requires_grad();
  n.in0 = a.id();
  n.backprop = [](Tape& t, int self) {
    const Node& s = t.node(self);
    if (!t.node(s.in0).requires_grad) return;
    // Subgradient at exactly 0 is 0.
    const Matrix& x = t.node(s.in0).value;
    t.grad_of(s.in0).array() += s.grad.array() * (x.array() > 0.0).cast<double>();
  };
  return Variable(this, push(std::move(n)));
}

Variable Tape::row_softmax(Variable a, double tau) {
  check_same_tape(a);
  if (!(tau > 0.0)) throw std::invalid_argument("row_softmax: temperature must be positive");
  Node n;
  Matrix scaled = a.value() / tau;
  Matrix out(scaled.rows(), scaled.cols());
  for (Eigen::Index i = 0; i < scaled.rows(); ++i) {
    const double m = scaled.row(i).maxCoeff();
    out.row(i) = (scaled.row(i).array() - m).exp();
    out.row(i) /= out.row(i).sum();
  }
  n.value = std::move(out);
  n.requires_grad = a.requires_grad();
  n.in0 = a.id();
  n.backprop = [tau](Tape& t, int self) {
    const Node& s = t.node(self);
    if (!t.node(s.in0).requires_grad) return;
    Matrix& gx = t.grad_of(s.in0);
    const Matrix& y = s.value;
    const Matrix& g = s.grad;
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      const double dot = g.row(i).dot(y.row(i));
      gx.row(i).array() += (g.row(i).array() - dot) * y.row(i).array() / tau;
    }
  };
  return Variable(this, push(std::move(n)));
}

Variable Tape::dropout(Variable a, double rate, bool training, std::mt19937_64& rng) {
  check_same_tape(a);
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must be in [0, 1)");
  if (!training || rate == 0.0) {
    Node n;
    n.value = a.value();
    n.requires_grad = a.requires_grad();
    n.in0 = a.id();
    n.backprop = [](Tape& t, int self) {
      const Node& s = t.node(self);
      if (t.node(s.in0).requires_grad) t.grad_of(s.in0) += s.grad;
    };
    return Variable(this, push(std::move(n)));
  }
  const double keep_scale = 1.0 / (1.0 - rate);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Matrix mask(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < mask.rows(); ++i)
    for (Eigen::Index j = 0; j < mask.cols(); ++j)
      mask(i, j) = unif(rng) >= rate ? keep_scale : 0.0;
  Node n;
  n.value = a.value().cwiseProduct(mask);
  n.requires_grad = a.requires_grad();
  n.in0 = a.id();
  n.backprop = [mask](Tape& t, int self) {
    const Node& s = t.node(self);
    if (t.node(s.in0).requires_grad) t.grad_of(s.in0) += s.grad.cwiseProduct(mask);
  };
  return Variable(this, push(std::move(n)));
}

Variable Tape::concat_cols(Variable a, Variable b) {
  check_same_tape(a);
  check_same_tape(b);
  if (a.rows() != b.rows()) shape_fail("concat_cols", a.rows(), a.cols(), b.rows(), b.cols());
  Node n;
  n.value.resize(a.rows(), a.cols() + b.cols());
  n.value.leftCols(a.cols()) = a.value();
  n.value.rightCols(b.cols()) = b.value();
  n.requires_grad = a.requires_grad() || b.requires_grad();
  n.in0 = a.id();
  n.in1 = b.id();
  const Eigen::Index split = a.cols();
  n.backprop = [split](Tape& t, int self) {
    const Node& s = t.node(self);
    if (t.node(s.in0).requires_grad) t.grad_of(s.in0) += s.grad.leftCols(split);
    if (t.node(s.in1).requires_grad)
      t.grad_of(s.in1) += s.grad.rightCols(s.grad.cols() - split);
  };
  return Variable(this, push(std::move(n)));
}

Variable Tape::add(Variable a, Variable b) {
  check_same_tape(a);
  check_same_tape(b);
  if (a.rows() != b.rows() || a.cols() != b.cols())
    shape_fail("add", a.rows(), a.cols(), b.rows(), b.cols());
  Node n;
  n.value = a.value() + b.value();
  n.requires_grad = a.requires_grad() || b.requires_grad();
  n.in0 = a.id();
  n.in1 = b.id();
  n.backprop = [](Tape& t, int self) {
    const Node& s = t.node(self);
    if (t.node(s.in0).requires_grad) t.grad_of(s.in0) += s.grad;
    if (t.node(s.in1).requires_grad) t.grad_of(s.in1) += s.grad;
  };
  return Variable(this, push(std::move(n)));
}

Variable Tape::add_row_bias(Variable a, Variable bias) {
  check_same_tape(a);
  check_same_tape(bias);
  if (bias.rows() != 1 || bias.cols() != a.cols())
    shape_fail("add_row_bias", a.rows(), a.cols(), bias.rows(), bias.cols());
  Node n;
  n.value = a.value();
  n.value.rowwise() += Eigen::RowVectorXd(bias.value().row(0));
  n.requires_grad = a.requires_grad() || bias.requires_grad();
  n.in0 = a.id();
  n.in1 = bias.id();
  n.backprop = [](Tape& t, int self) {
    const Node& s = t.node(self);
    if (t.node(s.in0).requires_grad) t.grad_of(s.in0) += s.grad;
    if (t.node(s.in1).requires_grad) t.grad_of(s.in1) += s.grad.colwise().sum();
  };
  return Variable(this, push(std::move(n)));
}

Variable Tape::l2_normalize(Variable a, int axis) {
  check_same_tape(a);
  if (axis != 0 && axis != 1) throw std::invalid_argument("l2_normalize: axis must be 0 or 1");
  Node n;
  const Matrix& x = a.value();
  Matrix out = x;
  Eigen::VectorXd norms;
  if (axis == 1) {
    norms = x.rowwise().norm();
    for (Eigen::Index i = 0; i < out.rows(); ++i)
      if (norms(i) > 0.0) out.row(i) /= norms(i);
  } else {
    norms = x.colwise().norm();
    for (Eigen::Index j = 0; j < out.cols(); ++j)
      if (norms(j) > 0.0) out.col(j) /= norms(j);
  }
  n.value = std::move(out);
  n.requires_grad = a.requires_grad();
  n.in0 = a.id();
  n.backprop = [axis, norms](Tape& t, int self) {
    const Node& s = t.node(self);
    if (!t.node(s.in0).requires_grad) return;
    Matrix& gx = t.grad_of(s.in0);
    const Matrix& y = s.value;
    const Matrix& g = s.grad;
    if (axis == 1) {
      for (Eigen::Index i = 0; i < y.rows(); ++i) {
        if (norms(i) == 0.0) { gx.row(i) += g.row(i); continue; }
        const double dot = g.row(i).dot(y.row(i));
        gx.row(i) += (g.row(i) - dot * y.row(i)) / norms(i);
      }
    } else {
      for (Eigen::Index j = 0; j < y.cols(); ++j) {
        if (norms(j) == 0.0) { gx.col(j) += g.col(j); continue; }
        const double dot = g.col(j).dot(y.col(j));
        gx.col(j) += (g.col(j) - dot * y.col(j)) / norms(j);
      }
    }
  };
  return Variable(this, push(std::move(n)));
}

Variable Tape::sum(Variable a) {
  check_same_tape(a);
  Node n;
  n.value = Matrix::Constant(1, 1, a.value().sum());
  n.requires_grad = a.requires_grad();
  n.in0 = a.id();
  n.backprop = [](Tape& t, int self) {
    const Node& s = t.node(self);
    if (t.node(s.in0).requires_grad) t.grad_of(s.in0).array() += s.grad(0, 0);
  };
  return Variable(this, push(std::move(n)));
}

Variable Tape::weighted_log_sum(Variable probs, Matrix weights, double scale) {
  check_same_tape(probs);
  if (probs.rows() != weights.rows() || probs.cols() != weights.cols())
    shape_fail("weighted_log_sum", probs.rows(), probs.cols(), weights.rows(), weights.cols());
  const Matrix& p = probs.value();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i)
    for (Eigen::Index j = 0; j < p.cols(); ++j)
      acc += weights(i, j) * std::log(std::max(p(i, j), kLogFloor));
  Node n;
  n.value = Matrix::Constant(1, 1, scale * acc);
  n.requires_grad = probs.requires_grad();
  n.in0 = probs.id();
  n.backprop = [weights, scale](Tape& t, int self) {
    const Node& s = t.node(self);
    if (!t.node(s.in0).requires_grad) return;
    Matrix& gx = t.grad_of(s.in0);
    const Matrix& p = t.node(s.in0).value;
    const double g = s.grad(0, 0) * scale;
    for (Eigen::Index i = 0; i < p.rows(); ++i)
      for (Eigen::Index j = 0; j < p.cols(); ++j)
        if (p(i, j) >= kLogFloor) gx(i, j) += g * weights(i, j) / p(i, j);
  };
  return Variable(this, push(std::move(n)));
}

Variable Tape::gather_log_sum(Variable probs, std::vector<std::pair<int, int>> cells,
                              double scale) {
  check_same_tape(probs);
  const Matrix& p = probs.value();
  double acc = 0.0;
  for (const auto& [i, j] : cells) {
    if (i < 0 || i >= p.rows() || j < 0 || j >= p.cols())
      throw ShapeError("gather_log_sum: cell index out of range");
    acc += std::log(std::max(p(i, j), kLogFloor));
  }
  Node n;
  n.value = Matrix::Constant(1, 1, scale * acc);
  n.requires_grad = probs.requires_grad();
  n.in0 = probs.id();
  n.backprop = [cells = std::move(cells), scale](Tape& t, int self) {
    const Node& s = t.node(self);
    if (!t.node(s.in0).requires_grad) return;
    Matrix& gx = t.grad_of(s.in0);
    const Matrix& p = t.node(s.in0).value;
    const double g = s.grad(0, 0) * scale;
    for (const auto& [i, j] : cells)
      if (p(i, j) >= kLogFloor) gx(i, j) += g / p(i, j);
  };
  return Variable(this, push(std::move(n)));
}

void Tape::backward(Variable loss) {
  check_same_tape(loss);
  if (loss.rows() != 1 || loss.cols() != 1)
    throw ShapeError("backward: loss must be a 1x1 scalar");
  // Intermediate gradients are scratch per pass; Parameter gradients
  // accumulate across passes until zero_grad().
  for (Node& n : nodes_) {
    if (n.param != nullptr) continue;
    if (n.grad.rows() != n.value.rows() || n.grad.cols() != n.value.cols())
      n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    else
      n.grad.setZero();
  }
  grad_of(loss.id())(0, 0) += 1.0;
  for (int i = loss.id(); i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.requires_grad && n.backprop) n.backprop(*this, i);
  }
}

}  // namespace scrl
