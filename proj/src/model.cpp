#include "scrl/model.hpp"

#include <cmath>

namespace scrl {

std::string to_string(AblationMode mode) {
  switch (mode) {
    case AblationMode::kFull: return "full";
    case AblationMode::kNoSsl: return "no-ssl";
    case AblationMode::kTopologyOnly: return "topology-only";
    case AblationMode::kFeatureOnly: return "feature-only";
  }
  return "full";
}

AblationMode ablation_from_string(const std::string& s) {
  if (s == "full") return AblationMode::kFull;
  if (s == "no-ssl") return AblationMode::kNoSsl;
  if (s == "topology-only") return AblationMode::kTopologyOnly;
  if (s == "feature-only") return AblationMode::kFeatureOnly;
  throw std::invalid_argument("unknown ablation mode: " + s);
}

Variable GcnEncoder::forward(Tape& tape, const CsrMatrix& op, Variable x, bool training,
                             std::mt19937_64& rng) {
  Variable h = tape.relu(
      tape.spmm(op, tape.matmul(tape.dropout(x, dropout_rate, training, rng), tape.leaf(w0))));
  return tape.relu(
      tape.spmm(op, tape.matmul(tape.dropout(h, dropout_rate, training, rng), tape.leaf(w1))));
}

namespace {

/// Inverted dropout over the stored entries of a sparse matrix;
/// structural zeros are unaffected by dropout anyway.
CsrMatrix sparse_dropout(const CsrMatrix& x, double rate, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout: rate must be in [0, 1)");
  CsrMatrix out = x;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (Eigen::Index i = 0; i < out.outerSize(); ++i)
    for (CsrMatrix::InnerIterator it(out, i); it; ++it)
      it.valueRef() *= unif(rng) >= rate ? keep_scale : 0.0;
  return out;
}

}  // namespace

Variable GcnEncoder::forward(Tape& tape, const CsrMatrix& op, const CsrMatrix& x, bool training,
                             std::mt19937_64& rng) {
  Variable xw = (training && dropout_rate > 0.0)
                    ? tape.spmm(sparse_dropout(x, dropout_rate, rng), tape.leaf(w0))
                    : tape.spmm(x, tape.leaf(w0));
  Variable h = tape.relu(tape.spmm(op, xw));
  return tape.relu(
      tape.spmm(op, tape.matmul(tape.dropout(h, dropout_rate, training, rng), tape.leaf(w1))));
}

Variable PrototypeHead::scores(Tape& tape, Variable x) {
  Variable c = tape.leaf(prototypes);
  if (normalize) {
    x = tape.l2_normalize(x, 1);
    c = tape.l2_normalize(c, 0);
  }
  return tape.matmul(x, c);
}

Variable PrototypeHead::assignment_probs(Tape& tape, Variable z) {
  return tape.row_softmax(z, temperature);
}

Variable Classifier::forward(Tape& tape, Variable r) {
  return tape.row_softmax(tape.add_row_bias(tape.matmul(r, tape.leaf(weight)), tape.leaf(bias)),
                          1.0);
}

namespace {

Eigen::Index classifier_width(const ModelDims& d, AblationMode mode) {
  return (mode == AblationMode::kTopologyOnly || mode == AblationMode::kFeatureOnly)
             ? d.embed
             : 2 * d.embed;
}

}  // namespace

ScrlModel::ScrlModel(const ModelDims& d, AblationMode mode_, double dropout, double tau,
                     bool normalize_embeddings)
    : dims(d),
      mode(mode_),
      topology("topology", d.in_dim, d.hidden, d.embed, dropout),
      feature("feature", d.in_dim, d.hidden, d.embed, dropout),
      head(d.embed, d.prototypes, tau, normalize_embeddings),
      classifier(classifier_width(d, mode_), d.classes) {}

std::vector<Parameter*> ScrlModel::parameters() {
  std::vector<Parameter*> out;
  if (uses_topology()) {
    out.push_back(&topology.w0);
    out.push_back(&topology.w1);
  }
  if (uses_feature()) {
    out.push_back(&feature.w0);
    out.push_back(&feature.w1);
  }
  if (uses_ssl()) out.push_back(&head.prototypes);
  out.push_back(&classifier.weight);
  out.push_back(&classifier.bias);
  return out;
}

void glorot_fill(Matrix& m, std::mt19937_64& rng) {
  const double s = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
  std::uniform_real_distribution<double> unif(-s, s);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = unif(rng);
}

void ScrlModel::init_params(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  // All matrices are drawn in a fixed order regardless of mode so the
  // same seed yields the same shared weights across ablations.
  glorot_fill(topology.w0.value, rng);
  glorot_fill(topology.w1.value, rng);
  glorot_fill(feature.w0.value, rng);
  glorot_fill(feature.w1.value, rng);
  glorot_fill(head.prototypes.value, rng);
  glorot_fill(classifier.weight.value, rng);
  classifier.bias.value.setZero();
  zero_grad();
}

void ScrlModel::zero_grad() {
  for (Parameter* p : parameters()) p->zero_grad();
}

Variable classify(Tape& tape, ScrlModel& model, Variable x_topology, Variable x_feature) {
  Variable r;
  if (model.two_branch())
    r = tape.concat_cols(x_topology, x_feature);
  else if (model.uses_topology())
    r = x_topology;
  else
    r = x_feature;
  return model.classifier.forward(tape, r);
}

}  // namespace scrl
