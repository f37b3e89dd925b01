#pragma once

#include "scrl/types.hpp"

#include <vector>

namespace scrl {

struct ClassificationMetrics {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
};

/// Row-wise argmax; ties go to the lower column index.
std::vector<int> argmax_rows(const Matrix& probs);

/// Accuracy and macro-F1 over the given node index set. A class with
/// zero predicted and zero true positives contributes F1 = 0.
ClassificationMetrics classification_metrics(const std::vector<int>& predictions,
                                             const std::vector<int>& labels,
                                             const std::vector<int>& index_set, int num_classes);

}  // namespace scrl
