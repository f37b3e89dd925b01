#include "scrl/train.hpp"

#include "scrl/loss.hpp"

#include <chrono>
#include <cmath>
#include <limits>

namespace scrl {

using nlohmann::json;

json TrainConfig::to_json() const {
  return json{{"k", k},
              {"tau", tau},
              {"prototypes", prototypes},
              {"sinkhorn_iters", sinkhorn_iters},
              {"epsilon", epsilon},
              {"learning_rate", learning_rate},
              {"weight_decay", weight_decay},
              {"dropout", dropout},
              {"epochs", epochs},
              {"seed", seed},
              {"ablation", to_string(ablation)},
              {"hidden", hidden},
              {"embed", embed},
              {"self_loops", self_loops},
              {"eval_every", eval_every},
              {"normalize_embeddings", normalize_embeddings}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  c.k = j.value("k", c.k);
  c.tau = j.value("tau", c.tau);
  c.prototypes = j.value("prototypes", c.prototypes);
  c.sinkhorn_iters = j.value("sinkhorn_iters", c.sinkhorn_iters);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.dropout = j.value("dropout", c.dropout);
  c.epochs = j.value("epochs", c.epochs);
  c.seed = j.value("seed", c.seed);
  if (j.contains("ablation")) c.ablation = ablation_from_string(j.at("ablation").get<std::string>());
  c.hidden = j.value("hidden", c.hidden);
  c.embed = j.value("embed", c.embed);
  c.self_loops = j.value("self_loops", c.self_loops);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.normalize_embeddings = j.value("normalize_embeddings", c.normalize_embeddings);
  return c;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("config: learning_rate > 0");
  if (epochs < 1) throw std::invalid_argument("config: epochs >= 1");
  if (k < 1) throw std::invalid_argument("config: k >= 1");
  if (!(tau > 0.0)) throw std::invalid_argument("config: tau > 0");
  if (!(epsilon > 0.0)) throw std::invalid_argument("config: epsilon > 0");
  if (sinkhorn_iters < 1) throw std::invalid_argument("config: sinkhorn_iters >= 1");
  if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("config: dropout in [0, 1)");
  if (hidden < 1 || embed < 1) throw std::invalid_argument("config: hidden/embed >= 1");
  if (eval_every < 1) throw std::invalid_argument("config: eval_every >= 1");
}

int TrainConfig::resolve_prototypes(int num_classes) const {
  const int b = prototypes > 0 ? prototypes : 3 * num_classes;
  if (b < num_classes)
    throw std::invalid_argument("config: prototype count must be >= number of classes");
  return b;
}

json EpochMetrics::to_json() const {
  json j{{"epoch", epoch},
         {"loss_ce", loss_ce},
         {"loss_ss", loss_ss},
         {"loss_total", loss_total},
         {"train_acc", train_acc},
         {"test_acc", test_acc},
         {"test_f1", test_f1}};
  if (!std::isnan(val_acc)) j["val_acc"] = val_acc;
  return j;
}

PropagationOps build_ops(const DatasetBundle& ds, const TrainConfig& cfg) {
  PropagationOps ops;
  ops.topology = normalize_adjacency(ds.adjacency, cfg.self_loops);
  if (cfg.ablation != AblationMode::kTopologyOnly) {
    FeatureGraph fg = build_knn_graph(ds.features, cfg.k);
    ops.feature = normalize_adjacency(fg.adjacency, cfg.self_loops);
  }
  return ops;
}

namespace {

bool worth_sparse(const Matrix& features) {
  const Eigen::Index total = features.size();
  if (total == 0) return false;
  const Eigen::Index nz = (features.array() != 0.0).count();
  return nz * 4 < total;
}

struct BranchEmbeddings {
  Variable topology;
  Variable feature;
};

BranchEmbeddings run_encoders(Tape& tape, ScrlModel& model, const PropagationOps& ops,
                              const Matrix& features, const CsrMatrix* sparse_features,
                              bool training, std::mt19937_64& rng) {
  BranchEmbeddings out;
  if (model.uses_topology()) {
    out.topology = sparse_features
                       ? model.topology.forward(tape, ops.topology, *sparse_features, training, rng)
                       : model.topology.forward(tape, ops.topology, tape.constant(features),
                                                training, rng);
  }
  if (model.uses_feature()) {
    out.feature = sparse_features
                      ? model.feature.forward(tape, ops.feature, *sparse_features, training, rng)
                      : model.feature.forward(tape, ops.feature, tape.constant(features),
                                              training, rng);
  }
  return out;
}

std::vector<Matrix> snapshot(std::vector<Parameter*> params) {
  std::vector<Matrix> out;
  out.reserve(params.size());
  for (const Parameter* p : params) out.push_back(p->value);
  return out;
}

void restore(std::vector<Parameter*> params, const std::vector<Matrix>& values) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = values[i];
}

}  // namespace

EvalOutputs forward_eval(ScrlModel& model, const PropagationOps& ops, const Matrix& features) {
  Tape tape;
  std::mt19937_64 unused_rng(0);
  const bool use_sparse = worth_sparse(features);
  CsrMatrix sparse;
  if (use_sparse) sparse = features.sparseView();
  BranchEmbeddings emb = run_encoders(tape, model, ops, features, use_sparse ? &sparse : nullptr,
                                      /*training=*/false, unused_rng);
  Variable y = classify(tape, model, emb.topology, emb.feature);
  EvalOutputs out;
  out.predictions = y.value();
  if (model.two_branch()) {
    out.consensus.resize(features.rows(), 2 * model.dims.embed);
    out.consensus.leftCols(model.dims.embed) = emb.topology.value();
    out.consensus.rightCols(model.dims.embed) = emb.feature.value();
  } else {
    out.consensus = model.uses_topology() ? emb.topology.value() : emb.feature.value();
  }
  return out;
}

TrainResult train(const DatasetBundle& ds, const TrainConfig& cfg,
                  const std::function<void(const EpochMetrics&)>& on_epoch) {
  cfg.validate();
  const int num_classes = ds.num_classes;
  ModelDims dims;
  dims.in_dim = ds.num_features();
  dims.hidden = cfg.hidden;
  dims.embed = cfg.embed;
  dims.prototypes = cfg.resolve_prototypes(num_classes);
  dims.classes = num_classes;

  PropagationOps ops = build_ops(ds, cfg);

  TrainResult result{
      ScrlModel(dims, cfg.ablation, cfg.dropout, cfg.tau, cfg.normalize_embeddings),
      {}, 0, "final", {}, {}};
  ScrlModel& model = result.model;
  model.init_params(cfg.seed);

  std::vector<Parameter*> params = model.parameters();
  AdamOptimizer adam(params);
  std::mt19937_64 rng(cfg.seed + 0x9e3779b97f4a7c15ull);

  const bool use_sparse = worth_sparse(ds.features);
  CsrMatrix sparse_features;
  if (use_sparse) sparse_features = ds.features.sparseView();
  const CsrMatrix* sparse_ptr = use_sparse ? &sparse_features : nullptr;

  SinkhornConfig sk;
  sk.iterations = cfg.sinkhorn_iters;
  sk.epsilon = cfg.epsilon;

  double best_val = -1.0;
  std::vector<Matrix> best_params;
  int best_epoch = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Tape tape;
    BranchEmbeddings emb =
        run_encoders(tape, model, ops, ds.features, sparse_ptr, /*training=*/true, rng);

    EpochMetrics em;
    em.epoch = epoch;

    Variable loss;
    Variable l_ce;
    if (model.uses_ssl()) {
      Variable z_t = model.head.scores(tape, emb.topology);
      Variable z_f = model.head.scores(tape, emb.feature);
      Variable p_t = model.head.assignment_probs(tape, z_t);
      Variable p_f = model.head.assignment_probs(tape, z_f);
      // Pseudo-labels are targets, not differentiated through.
      Matrix q_t = pseudo_labels(sinkhorn_assign(z_t.value(), sk));
      Matrix q_f = pseudo_labels(sinkhorn_assign(z_f.value(), sk));
      Variable l_ss = swapped_prediction_loss(tape, p_t, p_f, q_t, q_f);
      Variable y = classify(tape, model, emb.topology, emb.feature);
      l_ce = supervised_ce_loss(tape, y, ds.labels, ds.train);
      loss = total_loss(tape, l_ce, l_ss, model.mode);
      em.loss_ss = l_ss.value()(0, 0);
    } else {
      Variable y = classify(tape, model, emb.topology, emb.feature);
      l_ce = supervised_ce_loss(tape, y, ds.labels, ds.train);
      loss = total_loss(tape, l_ce, l_ce, model.mode);
      em.loss_ss = 0.0;
    }
    em.loss_ce = l_ce.value()(0, 0);
    em.loss_total = loss.value()(0, 0);
    if (!std::isfinite(em.loss_total))
      throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) +
                           " (ce=" + std::to_string(em.loss_ce) +
                           ", ss=" + std::to_string(em.loss_ss) + ")");

    model.zero_grad();
    tape.backward(loss);
    adam.step(params, cfg.learning_rate, cfg.weight_decay);

    if (epoch % cfg.eval_every == 0 || epoch == cfg.epochs) {
      EvalOutputs eval = forward_eval(model, ops, ds.features);
      std::vector<int> pred = argmax_rows(eval.predictions);
      em.train_acc = classification_metrics(pred, ds.labels, ds.train, num_classes).accuracy;
      const auto test_m = classification_metrics(pred, ds.labels, ds.test, num_classes);
      em.test_acc = test_m.accuracy;
      em.test_f1 = test_m.macro_f1;
      if (!ds.val.empty()) {
        em.val_acc = classification_metrics(pred, ds.labels, ds.val, num_classes).accuracy;
        if (em.val_acc > best_val) {
          best_val = em.val_acc;
          best_params = snapshot(params);
          best_epoch = epoch;
        }
      } else {
        em.val_acc = std::numeric_limits<double>::quiet_NaN();
      }
    } else {
      em.val_acc = std::numeric_limits<double>::quiet_NaN();
    }

    em.wall_ms = std::chrono::duration<double, std::milli>(
                     std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(em);
    if (on_epoch) on_epoch(em);
  }

  if (!ds.val.empty() && !best_params.empty()) {
    restore(params, best_params);
    result.best_epoch = best_epoch;
    result.selection = "best-val";
  } else {
    result.best_epoch = cfg.epochs;
    result.selection = "final";
  }

  EvalOutputs final_eval = forward_eval(model, ops, ds.features);
  std::vector<int> pred = argmax_rows(final_eval.predictions);
  result.test = classification_metrics(pred, ds.labels, ds.test, num_classes);
  if (!ds.val.empty())
    result.val = classification_metrics(pred, ds.labels, ds.val, num_classes);
  return result;
}

}  // namespace scrl
