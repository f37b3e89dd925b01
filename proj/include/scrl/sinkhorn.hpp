#pragma once

#include "scrl/types.hpp"

#include <utility>

namespace scrl {

struct SinkhornConfig {
  int iterations = 5;
  double epsilon = 0.05;
  double floor = 1e-30;
};

/// Entropic-OT assignment of N rows to B prototypes with uniform
/// marginals (rows 1/N, columns 1/B). Starts from exp(z/epsilon) with
/// global max subtraction, then alternates column and row rescaling for
/// `iterations` rounds, ending on a row rescale so every row sums to
/// exactly 1/N. The result is a plain matrix: no gradient flows
/// through it.
Matrix sinkhorn_assign(const Matrix& scores, const SinkhornConfig& cfg);

/// Per-node pseudo-label distributions: q_i = N * Q_i.
Matrix pseudo_labels(const Matrix& assignment);

/// (max |row sum - 1/N|, max |col sum - 1/B|).
std::pair<double, double> marginal_errors(const Matrix& assignment);

}  // namespace scrl
