#pragma once

#include "scrl/adam.hpp"
#include "scrl/graph_io.hpp"
#include "scrl/metrics.hpp"
#include "scrl/model.hpp"
#include "scrl/sinkhorn.hpp"

#include <nlohmann/json.hpp>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace scrl {

struct TrainConfig {
  int k = 7;
  double tau = 0.1;
  int prototypes = 0;  // 0 resolves to 3 * num_classes at train time
  int sinkhorn_iters = 5;
  double epsilon = 0.05;
  double learning_rate = 3e-4;
  double weight_decay = 5e-4;
  double dropout = 0.5;
  int epochs = 200;
  std::uint64_t seed = 0;
  AblationMode ablation = AblationMode::kFull;
  int hidden = 256;
  int embed = 128;
  bool self_loops = true;
  int eval_every = 1;
  bool normalize_embeddings = false;

  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
  void validate() const;
  int resolve_prototypes(int num_classes) const;
};

struct EpochMetrics {
  int epoch = 0;
  double loss_ce = 0.0;
  double loss_ss = 0.0;
  double loss_total = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;  // NaN when there is no validation split
  double test_acc = 0.0;
  double test_f1 = 0.0;
  double wall_ms = 0.0;

  /// Deterministic fields only; timing goes to a sidecar stream so two
  /// identical runs produce byte-identical metrics files.
  nlohmann::json to_json() const;
};

/// Normalized propagation operators for the two branches.
struct PropagationOps {
  CsrMatrix topology;
  CsrMatrix feature;
};

PropagationOps build_ops(const DatasetBundle& ds, const TrainConfig& cfg);

struct EvalOutputs {
  Matrix predictions;  // N x M probability rows
  Matrix consensus;    // N x (2U or U)
};

/// Deterministic inference pass (dropout inactive).
EvalOutputs forward_eval(ScrlModel& model, const PropagationOps& ops, const Matrix& features);

struct TrainResult {
  ScrlModel model;
  std::vector<EpochMetrics> history;
  int best_epoch = 0;          // epoch whose parameters the model holds
  std::string selection;       // "best-val" or "final"
  ClassificationMetrics test;  // at the selected parameters
  ClassificationMetrics val;
};

/// Runs the full training loop: builds the feature graph once, then per
/// epoch runs both branches, the prototype softmaxes, detached Sinkhorn
/// assignments, the combined loss, backprop and one Adam step. Keeps
/// the best-validation parameters when a validation split exists,
/// otherwise the final ones.
TrainResult train(const DatasetBundle& ds, const TrainConfig& cfg,
                  const std::function<void(const EpochMetrics&)>& on_epoch = {});

}  // namespace scrl
