#include "scrl/sinkhorn.hpp"

#include <algorithm>
#include <cmath>

namespace scrl {

Matrix sinkhorn_assign(const Matrix& scores, const SinkhornConfig& cfg) {
  if (cfg.iterations < 1) throw std::invalid_argument("sinkhorn: iterations >= 1");
  if (!(cfg.epsilon > 0.0)) throw std::invalid_argument("sinkhorn: epsilon > 0");
  if (!all_finite(scores)) throw ValidationError("sinkhorn: non-finite scores");

  const Eigen::Index n = scores.rows();
  const Eigen::Index b = scores.cols();
  const double row_target = 1.0 / static_cast<double>(n);
  const double col_target = 1.0 / static_cast<double>(b);

  Matrix q = ((scores.array() - scores.maxCoeff()) / cfg.epsilon).exp();
  for (int it = 0; it < cfg.iterations; ++it) {
    for (Eigen::Index j = 0; j < b; ++j)
      q.col(j) *= col_target / std::max(q.col(j).sum(), cfg.floor);
    for (Eigen::Index i = 0; i < n; ++i)
      q.row(i) *= row_target / std::max(q.row(i).sum(), cfg.floor);
  }
  return q;
}

Matrix pseudo_labels(const Matrix& assignment) {
  return assignment * static_cast<double>(assignment.rows());
}

std::pair<double, double> marginal_errors(const Matrix& assignment) {
  const double row_target = 1.0 / static_cast<double>(assignment.rows());
  const double col_target = 1.0 / static_cast<double>(assignment.cols());
  const double row_err = (assignment.rowwise().sum().array() - row_target).abs().maxCoeff();
  const double col_err = (assignment.colwise().sum().array() - col_target).abs().maxCoeff();
  return {row_err, col_err};
}

}  // namespace scrl
