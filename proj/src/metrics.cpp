#include "scrl/metrics.hpp"

namespace scrl {

std::vector<int> argmax_rows(const Matrix& probs) {
  std::vector<int> out(probs.rows());
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < probs.cols(); ++j)
      if (probs(i, j) > probs(i, best)) best = j;
    out[i] = static_cast<int>(best);
  }
  return out;
}

ClassificationMetrics classification_metrics(const std::vector<int>& predictions,
                                             const std::vector<int>& labels,
                                             const std::vector<int>& index_set, int num_classes) {
  if (index_set.empty()) throw ValidationError("classification_metrics: empty index set");
  std::vector<long> tp(num_classes, 0), fp(num_classes, 0), fn(num_classes, 0);
  long correct = 0;
  for (int i : index_set) {
    const int y = labels[i];
    const int yhat = predictions[i];
    if (y == yhat) {
      ++correct;
      ++tp[y];
    } else {
      ++fp[yhat];
      ++fn[y];
    }
  }
  ClassificationMetrics m;
  m.accuracy = static_cast<double>(correct) / static_cast<double>(index_set.size());
  double f1_sum = 0.0;
  for (int c = 0; c < num_classes; ++c) {
    const long denom = 2 * tp[c] + fp[c] + fn[c];
    f1_sum += denom > 0 ? 2.0 * static_cast<double>(tp[c]) / static_cast<double>(denom) : 0.0;
  }
  m.macro_f1 = f1_sum / static_cast<double>(num_classes);
  return m;
}

}  // namespace scrl
