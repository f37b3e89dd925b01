#pragma once

#include "scrl/autodiff.hpp"

#include <vector>

namespace scrl {

/// Adam with bias correction. Weight decay enters as an L2 gradient
/// term g += wd * theta before the moment updates.
struct AdamOptimizer {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  explicit AdamOptimizer(const std::vector<Parameter*>& params);

  void step(const std::vector<Parameter*>& params, double lr, double weight_decay);

  long step_count() const { return step_; }

 private:
  struct Slot {
    Matrix m, v;
  };
  std::vector<Slot> slots_;
  long step_ = 0;
};

}  // namespace scrl
