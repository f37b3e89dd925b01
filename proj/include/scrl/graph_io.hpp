#pragma once

#include "scrl/types.hpp"

#include <filesystem>
#include <random>
#include <vector>

namespace scrl {

/// Attributed graph plus supervision: symmetric binary adjacency,
/// node features, integer labels, and disjoint train/val/test splits.
struct DatasetBundle {
  CsrMatrix adjacency;       // N x N, symmetric, zero diagonal, entries in {0,1}
  Matrix features;           // N x d
  std::vector<int> labels;   // length N, values in [0, num_classes)
  std::vector<int> train;
  std::vector<int> val;      // may be empty
  std::vector<int> test;
  int num_classes = 0;

  Eigen::Index num_nodes() const { return features.rows(); }
  Eigen::Index num_features() const { return features.cols(); }
};

/// kNN graph over node features.
struct FeatureGraph {
  CsrMatrix adjacency;  // symmetric, zero diagonal
  int k = 0;
};

/// Loads edges.txt, features.txt, labels.txt, splits.json and meta.json
/// from `dir` and validates the bundle. Duplicate edges collapse;
/// self-loops in the input are rejected.
DatasetBundle load_dataset(const std::filesystem::path& dir);

// Lower-level loaders, used by CLI commands that run before a full
// bundle exists (e.g. split generation).
std::vector<std::pair<int, int>> load_edges(const std::filesystem::path& file, int num_nodes);
Matrix load_features(const std::filesystem::path& file);
std::vector<int> load_labels(const std::filesystem::path& file, int num_classes);
struct DatasetMeta {
  int num_nodes = 0;
  int num_features = 0;
  int num_classes = 0;
};
DatasetMeta load_meta(const std::filesystem::path& file);

/// Builds a symmetric binary CSR adjacency from an undirected edge list.
CsrMatrix adjacency_from_edges(const std::vector<std::pair<int, int>>& edges, int num_nodes);

/// Cosine similarity; 0 when either vector has zero norm.
double cosine_similarity(const Eigen::Ref<const RowVector>& a,
                         const Eigen::Ref<const RowVector>& b);

/// kNN graph under cosine similarity. Each node links to its k most
/// similar other nodes (ties to the lower index); the result is the
/// symmetric union of those selections, with zero diagonal.
FeatureGraph build_knn_graph(const Matrix& features, int k);

/// Symmetric normalization D^{-1/2} A D^{-1/2}, optionally over A + I
/// (the renormalization form, default in training). Isolated nodes get
/// a lone diagonal 1 when self-loops are on.
CsrMatrix normalize_adjacency(const CsrMatrix& adjacency, bool add_self_loops);

/// Random per-class splits: `labels_per_class` train nodes per class,
/// then `val_size` validation and `test_size` test nodes drawn from the
/// remainder, all disjoint.
struct Splits {
  std::vector<int> train, val, test;
};
Splits make_splits(const std::vector<int>& labels, int num_classes, int labels_per_class,
                   int val_size, int test_size, std::uint64_t seed);

void write_splits_json(const Splits& s, const std::filesystem::path& file);

}  // namespace scrl
