#include "scrl/loss.hpp"

namespace scrl {

Variable swapped_prediction_loss(Tape& tape, Variable p_topology, Variable p_feature,
                                 const Matrix& q_topology, const Matrix& q_feature) {
  if (p_topology.rows() != p_feature.rows() || p_topology.cols() != p_feature.cols())
    throw ShapeError("swapped_prediction_loss: branch shapes differ");
  const double inv_n = 1.0 / static_cast<double>(p_topology.rows());
  Variable cross_t = tape.weighted_log_sum(p_topology, q_feature, -inv_n);
  Variable cross_f = tape.weighted_log_sum(p_feature, q_topology, -inv_n);
  return tape.add(cross_t, cross_f);
}

Variable supervised_ce_loss(Tape& tape, Variable predictions, const std::vector<int>& labels,
                            const std::vector<int>& train_index) {
  if (train_index.empty()) throw ValidationError("supervised_ce_loss: empty training set");
  std::vector<std::pair<int, int>> cells;
  cells.reserve(train_index.size());
  for (int i : train_index) {
    if (i < 0 || i >= static_cast<int>(labels.size()))
      throw ValidationError("supervised_ce_loss: train index out of range");
    cells.emplace_back(i, labels[i]);
  }
  return tape.gather_log_sum(predictions, std::move(cells), -1.0);
}

Variable total_loss(Tape& tape, Variable l_ce, Variable l_ss, AblationMode mode) {
  if (mode == AblationMode::kFull) return tape.add(l_ce, l_ss);
  return l_ce;
}

}  // namespace scrl
