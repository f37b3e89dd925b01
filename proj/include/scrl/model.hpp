#pragma once

#include "scrl/autodiff.hpp"
#include "scrl/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace scrl {

enum class AblationMode { kFull, kNoSsl, kTopologyOnly, kFeatureOnly };

std::string to_string(AblationMode mode);
AblationMode ablation_from_string(const std::string& s);

/// Two-layer graph convolutional encoder:
///   relu(op * dropout(relu(op * dropout(x) * W0)) * W1)
struct GcnEncoder {
  Parameter w0;  // d x hidden
  Parameter w1;  // hidden x embed
  double dropout_rate;

  GcnEncoder(const std::string& prefix, Eigen::Index in_dim, Eigen::Index hidden,
             Eigen::Index embed, double dropout)
      : w0(prefix + ".w0", in_dim, hidden), w1(prefix + ".w1", hidden, embed),
        dropout_rate(dropout) {}

  Variable forward(Tape& tape, const CsrMatrix& op, Variable x, bool training,
                   std::mt19937_64& rng);
  /// Sparse-feature fast path; identical values to the dense overload
  /// when dropout is inactive.
  Variable forward(Tape& tape, const CsrMatrix& op, const CsrMatrix& x, bool training,
                   std::mt19937_64& rng);
};

/// Learnable prototype bank shared by both branches. Scores are plain
/// dot products x * C; the optional normalization flag L2-normalizes
/// embedding rows and prototype columns first.
struct PrototypeHead {
  Parameter prototypes;  // embed x count
  double temperature;
  bool normalize;

  PrototypeHead(Eigen::Index embed, Eigen::Index count, double tau, bool normalize_ = false)
      : prototypes("prototypes", embed, count), temperature(tau), normalize(normalize_) {}

  Eigen::Index count() const { return prototypes.value.cols(); }

  Variable scores(Tape& tape, Variable x);
  /// Row softmax of the scores at this head's temperature.
  Variable assignment_probs(Tape& tape, Variable z);
};

/// Linear softmax classifier over the consensus representation.
struct Classifier {
  Parameter weight;  // in_dim x classes
  Parameter bias;    // 1 x classes

  Classifier(Eigen::Index in_dim, Eigen::Index classes)
      : weight("classifier.weight", in_dim, classes), bias("classifier.bias", 1, classes) {}

  Variable forward(Tape& tape, Variable r);
};

struct ModelDims {
  Eigen::Index in_dim = 0;
  Eigen::Index hidden = 256;
  Eigen::Index embed = 128;
  Eigen::Index prototypes = 0;
  Eigen::Index classes = 0;
};

/// The full two-branch network: independent GCN encoders over the
/// topology and feature graphs, one shared prototype head, and a
/// classifier over the concatenated embeddings. Ablation modes drop
/// the self-supervised head or one branch entirely.
struct ScrlModel {
  ModelDims dims;
  AblationMode mode;
  GcnEncoder topology;
  GcnEncoder feature;
  PrototypeHead head;
  Classifier classifier;

  ScrlModel(const ModelDims& d, AblationMode mode_, double dropout, double tau,
            bool normalize_embeddings = false);

  bool uses_topology() const { return mode != AblationMode::kFeatureOnly; }
  bool uses_feature() const { return mode != AblationMode::kTopologyOnly; }
  bool uses_ssl() const { return mode == AblationMode::kFull; }
  bool two_branch() const { return uses_topology() && uses_feature(); }

  /// Trainable parameters for the active mode, in checkpoint order.
  std::vector<Parameter*> parameters();

  /// Glorot-uniform weights, zero biases; prototypes use the same
  /// scheme. Deterministic for a fixed seed.
  void init_params(std::uint64_t seed);

  void zero_grad();
};

/// Classifier probabilities from branch embeddings; pass only the
/// active branch in single-branch modes.
Variable classify(Tape& tape, ScrlModel& model, Variable x_topology, Variable x_feature);

void glorot_fill(Matrix& m, std::mt19937_64& rng);

}  // namespace scrl
