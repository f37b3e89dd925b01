#include "scrl/adam.hpp"

#include <cmath>

namespace scrl {

AdamOptimizer::AdamOptimizer(const std::vector<Parameter*>& params) {
  slots_.reserve(params.size());
  for (const Parameter* p : params)
    slots_.push_back({Matrix::Zero(p->value.rows(), p->value.cols()),
                      Matrix::Zero(p->value.rows(), p->value.cols())});
}

void AdamOptimizer::step(const std::vector<Parameter*>& params, double lr, double weight_decay) {
  if (params.size() != slots_.size())
    throw std::invalid_argument("adam: parameter list does not match optimizer state");
  ++step_;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    Slot& s = slots_[i];
    Matrix g = p.grad + weight_decay * p.value;
    s.m = beta1 * s.m + (1.0 - beta1) * g;
    s.v = beta2 * s.v + (1.0 - beta2) * g.cwiseProduct(g);
    p.value.array() -= lr * (s.m.array() / bc1) / ((s.v.array() / bc2).sqrt() + eps);
  }
}

}  // namespace scrl
