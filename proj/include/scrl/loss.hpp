#pragma once

#include "scrl/autodiff.hpp"
#include "scrl/model.hpp"

#include <vector>

namespace scrl {

/// Exchanged-prediction loss:
///   (1/N) sum_i [ -sum_b q_ib^(f) log p_ib^(t) - sum_b q_ib^(t) log p_ib^(f) ]
/// where q_t, q_f are pseudo-label distributions (rows sum to 1) and
/// carry no gradient.
Variable swapped_prediction_loss(Tape& tape, Variable p_topology, Variable p_feature,
                                 const Matrix& q_topology, const Matrix& q_feature);

/// Sum of -log predicted-true-class probability over the labeled nodes.
Variable supervised_ce_loss(Tape& tape, Variable predictions, const std::vector<int>& labels,
                            const std::vector<int>& train_index);

/// Full mode adds the self-supervised term; every other mode is the
/// supervised loss alone.
Variable total_loss(Tape& tape, Variable l_ce, Variable l_ss, AblationMode mode);

}  // namespace scrl
