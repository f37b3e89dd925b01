#include "scrl/graph_io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace scrl {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::filesystem::path& file, int line, const std::string& msg) {
  std::ostringstream os;
  os << file.string() << ":" << line << ": " << msg;
  throw ValidationError(os.str());
}

std::ifstream open_or_throw(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open " + file.string());
  return in;
}

bool is_blank_or_comment(const std::string& line) {
  for (char c : line) {
    if (c == '#') return true;
    if (!std::isspace(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

}  // namespace

std::vector<std::pair<int, int>> load_edges(const std::filesystem::path& file, int num_nodes) {
  auto in = open_or_throw(file);
  std::vector<std::pair<int, int>> edges;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (is_blank_or_comment(line)) continue;
    std::istringstream ls(line);
    long long u, v;
    if (!(ls >> u >> v)) fail(file, lineno, "expected two integers");
    if (u < 0 || v < 0 || u >= num_nodes || v >= num_nodes)
      fail(file, lineno, "node index out of range [0, " + std::to_string(num_nodes) + ")");
    if (u == v) fail(file, lineno, "self-loop not allowed");
    edges.emplace_back(static_cast<int>(u), static_cast<int>(v));
  }
  return edges;
}

Matrix load_features(const std::filesystem::path& file) {
  auto in = open_or_throw(file);
  std::vector<std::vector<double>> rows;
  std::string line;
  int lineno = 0;
  Eigen::Index width = -1;
  while (std::getline(in, line)) {
    ++lineno;
    if (is_blank_or_comment(line)) continue;
    std::istringstream ls(line);
    std::vector<double> row;
    double x;
    while (ls >> x) row.push_back(x);
    if (width < 0)
      width = static_cast<Eigen::Index>(row.size());
    else if (static_cast<Eigen::Index>(row.size()) != width)
      fail(file, lineno, "expected " + std::to_string(width) + " values");
    if (!std::all_of(row.begin(), row.end(), [](double v) { return std::isfinite(v); }))
      fail(file, lineno, "non-finite feature value");
    rows.push_back(std::move(row));
  }
  Matrix m(static_cast<Eigen::Index>(rows.size()), std::max<Eigen::Index>(width, 0));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rows[i][j];
  return m;
}

std::vector<int> load_labels(const std::filesystem::path& file, int num_classes) {
  auto in = open_or_throw(file);
  std::vector<int> labels;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (is_blank_or_comment(line)) continue;
    std::istringstream ls(line);
    long long y;
    if (!(ls >> y)) fail(file, lineno, "expected one integer label");
    if (y < 0 || y >= num_classes)
      fail(file, lineno, "label " + std::to_string(y) + " outside [0, " +
                             std::to_string(num_classes) + ")");
    labels.push_back(static_cast<int>(y));
  }
  return labels;
}

DatasetMeta load_meta(const std::filesystem::path& file) {
  auto in = open_or_throw(file);
  json j = json::parse(in);
  DatasetMeta meta;
  meta.num_nodes = j.at("num_nodes").get<int>();
  meta.num_features = j.at("num_features").get<int>();
  meta.num_classes = j.at("num_classes").get<int>();
  return meta;
}

CsrMatrix adjacency_from_edges(const std::vector<std::pair<int, int>>& edges, int num_nodes) {
  std::set<std::pair<int, int>> unique;
  for (auto [u, v] : edges) unique.emplace(std::min(u, v), std::max(u, v));
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(2 * unique.size());
  for (auto [u, v] : unique) {
    trips.emplace_back(u, v, 1.0);
    trips.emplace_back(v, u, 1.0);
  }
  CsrMatrix a(num_nodes, num_nodes);
  a.setFromTriplets(trips.begin(), trips.end());
  a.makeCompressed();
  return a;
}

namespace {

std::vector<int> load_index_array(const nlohmann::json& j, const char* key, int num_nodes,
                                  const std::filesystem::path& file) {
  std::vector<int> idx;
  for (const auto& v : j.at(key)) {
    int i = v.get<int>();
    if (i < 0 || i >= num_nodes)
      throw ValidationError(file.string() + ": split \"" + key + "\" index " +
                            std::to_string(i) + " out of range");
    idx.push_back(i);
  }
  return idx;
}

}  // namespace

DatasetBundle load_dataset(const std::filesystem::path& dir) {
  const DatasetMeta meta = load_meta(dir / "meta.json");
  DatasetBundle ds;
  ds.num_classes = meta.num_classes;
  ds.features = load_features(dir / "features.txt");
  if (ds.features.rows() != meta.num_nodes || ds.features.cols() != meta.num_features)
    throw ValidationError(dir.string() + ": features.txt is " + std::to_string(ds.features.rows()) +
                          "x" + std::to_string(ds.features.cols()) + ", meta.json says " +
                          std::to_string(meta.num_nodes) + "x" + std::to_string(meta.num_features));
  ds.labels = load_labels(dir / "labels.txt", meta.num_classes);
  if (static_cast<int>(ds.labels.size()) != meta.num_nodes)
    throw ValidationError(dir.string() + ": labels.txt has " + std::to_string(ds.labels.size()) +
                          " lines, expected " + std::to_string(meta.num_nodes));
  ds.adjacency = adjacency_from_edges(load_edges(dir / "edges.txt", meta.num_nodes),
                                      meta.num_nodes);

  const auto splits_file = dir / "splits.json";
  auto in = open_or_throw(splits_file);
  json j = json::parse(in);
  ds.train = load_index_array(j, "train", meta.num_nodes, splits_file);
  ds.val = load_index_array(j, "val", meta.num_nodes, splits_file);
  ds.test = load_index_array(j, "test", meta.num_nodes, splits_file);
  if (ds.train.empty()) throw ValidationError(splits_file.string() + ": empty train split");

  std::set<int> seen(ds.train.begin(), ds.train.end());
  if (seen.size() != ds.train.size())
    throw ValidationError(splits_file.string() + ": duplicate train indices");
  for (const auto* split : {&ds.val, &ds.test})
    for (int i : *split)
      if (!seen.insert(i).second)
        throw ValidationError(splits_file.string() + ": splits are not disjoint (node " +
                              std::to_string(i) + ")");

  std::vector<bool> covered(meta.num_classes, false);
  for (int i : ds.train) covered[ds.labels[i]] = true;
  for (int c = 0; c < meta.num_classes; ++c)
    if (!covered[c])
      throw ValidationError(splits_file.string() + ": class " + std::to_string(c) +
                            " has no labeled training node");
  return ds;
}

double cosine_similarity(const Eigen::Ref<const RowVector>& a,
                         const Eigen::Ref<const RowVector>& b) {
  if (a.size() != b.size()) throw ShapeError("cosine_similarity: dimension mismatch");
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

FeatureGraph build_knn_graph(const Matrix& features, int k) {
  const Eigen::Index n = features.rows();
  if (k < 1 || k >= n) throw std::invalid_argument("build_knn_graph: need 1 <= k < N");

  Matrix normalized = features;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double norm = normalized.row(i).norm();
    if (norm > 0.0) normalized.row(i) /= norm;
  }

  // Sparse accumulation when the feature matrix is mostly zeros
  // (bag-of-words datasets); dense row products otherwise.
  const Eigen::Index total = n * normalized.cols();
  Eigen::Index nonzeros = 0;
  for (Eigen::Index i = 0; i < n; ++i) nonzeros += (normalized.row(i).array() != 0.0).count();
  const bool sparse_path = total > 0 && nonzeros * 4 < total;

  CsrMatrix rows_csr;
  Eigen::SparseMatrix<double> cols_csc;
  if (sparse_path) {
    rows_csr = normalized.sparseView();
    cols_csc = rows_csr;
  }

  std::vector<double> sims(n);
  std::vector<int> order(n);
  std::set<std::pair<int, int>> selected;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (sparse_path) {
      std::fill(sims.begin(), sims.end(), 0.0);
      for (CsrMatrix::InnerIterator it(rows_csr, i); it; ++it) {
        const double v = it.value();
        for (Eigen::SparseMatrix<double>::InnerIterator jt(cols_csc, it.col()); jt; ++jt)
          sims[jt.row()] += v * jt.value();
      }
    } else {
      Eigen::VectorXd s = normalized * normalized.row(i).transpose();
      for (Eigen::Index j = 0; j < n; ++j) sims[j] = s(j);
    }
    sims[i] = -2.0;  // below any cosine, excludes self

    std::iota(order.begin(), order.end(), 0);
    auto better = [&sims](int a, int b) {
      return sims[a] > sims[b] || (sims[a] == sims[b] && a < b);
    };
    std::nth_element(order.begin(), order.begin() + k, order.end(), better);
    for (int t = 0; t < k; ++t) {
      const int j = order[t];
      selected.emplace(std::min<int>(i, j), std::max<int>(i, j));
    }
  }

  FeatureGraph g;
  g.k = k;
  std::vector<std::pair<int, int>> edges(selected.begin(), selected.end());
  g.adjacency = adjacency_from_edges(edges, static_cast<int>(n));
  return g;
}

CsrMatrix normalize_adjacency(const CsrMatrix& adjacency, bool add_self_loops) {
  CsrMatrix at = adjacency.transpose();
  if (CsrMatrix(at - adjacency).squaredNorm() != 0.0)
    throw ValidationError("normalize_adjacency: adjacency is not symmetric");

  CsrMatrix a = adjacency;
  if (add_self_loops) {
    CsrMatrix eye(adjacency.rows(), adjacency.cols());
    eye.setIdentity();
    a = adjacency + eye;
  }
  Eigen::VectorXd inv_sqrt_deg(a.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const double deg = a.row(i).sum();
    inv_sqrt_deg(i) = deg > 0.0 ? 1.0 / std::sqrt(deg) : 0.0;
  }
  for (Eigen::Index i = 0; i < a.outerSize(); ++i)
    for (CsrMatrix::InnerIterator it(a, i); it; ++it)
      it.valueRef() *= inv_sqrt_deg(it.row()) * inv_sqrt_deg(it.col());
  a.makeCompressed();
  return a;
}

Splits make_splits(const std::vector<int>& labels, int num_classes, int labels_per_class,
                   int val_size, int test_size, std::uint64_t seed) {
  if (labels_per_class < 1) throw std::invalid_argument("make_splits: labels_per_class >= 1");
  std::mt19937_64 rng(seed);
  std::vector<std::vector<int>> by_class(num_classes);
  for (int i = 0; i < static_cast<int>(labels.size()); ++i) by_class[labels[i]].push_back(i);

  Splits s;
  std::vector<bool> taken(labels.size(), false);
  for (int c = 0; c < num_classes; ++c) {
    auto& nodes = by_class[c];
    if (static_cast<int>(nodes.size()) < labels_per_class)
      throw ValidationError("make_splits: class " + std::to_string(c) + " has only " +
                            std::to_string(nodes.size()) + " nodes, need " +
                            std::to_string(labels_per_class));
    std::shuffle(nodes.begin(), nodes.end(), rng);
    for (int t = 0; t < labels_per_class; ++t) {
      s.train.push_back(nodes[t]);
      taken[nodes[t]] = true;
    }
  }
  std::sort(s.train.begin(), s.train.end());

  std::vector<int> pool;
  for (int i = 0; i < static_cast<int>(labels.size()); ++i)
    if (!taken[i]) pool.push_back(i);
  if (static_cast<int>(pool.size()) < val_size + test_size)
    throw ValidationError("make_splits: only " + std::to_string(pool.size()) +
                          " unlabeled nodes for val+test of " +
                          std::to_string(val_size + test_size));
  std::shuffle(pool.begin(), pool.end(), rng);
  s.val.assign(pool.begin(), pool.begin() + val_size);
  s.test.assign(pool.begin() + val_size, pool.begin() + val_size + test_size);
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

void write_splits_json(const Splits& s, const std::filesystem::path& file) {
  nlohmann::json j;
  j["train"] = s.train;
  j["val"] = s.val;
  j["test"] = s.test;
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << j.dump(2) << "\n";
}

}  // namespace scrl
