#include <doctest.h>

#include "scrl/graph_io.hpp"

#include "helpers/toy_dataset.hpp"

#include <filesystem>
#include <fstream>
#include <random>
#include <set>

using namespace scrl;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("scrl_test_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream f(p);
  f << content;
}

Matrix random_features(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  Matrix m(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) m(i, j) = unif(rng);
  return m;
}

}  // namespace

TEST_CASE("load_dataset on a 3-node toy directory") {
  TempDir dir;
  write_file(dir.path / "meta.json",
             R"({"num_nodes": 3, "num_features": 2, "num_classes": 2})");
  write_file(dir.path / "edges.txt", "# comment line\n0 1\n1 2\n");
  write_file(dir.path / "features.txt", "1 0\n0.5 0.5\n0 1\n");
  write_file(dir.path / "labels.txt", "0\n0\n1\n");
  write_file(dir.path / "splits.json", R"({"train": [0, 2], "val": [], "test": [1]})");

  DatasetBundle ds = load_dataset(dir.path);
  CHECK(ds.num_nodes() == 3);
  CHECK(ds.adjacency.nonZeros() == 4);  // symmetry doubles each edge
  CHECK(ds.num_classes == 2);
  CHECK(ds.labels == std::vector<int>{0, 0, 1});

  SUBCASE("duplicate edges collapse") {
    write_file(dir.path / "edges.txt", "0 1\n1 0\n0 1\n1 2\n");
    CHECK(load_dataset(dir.path).adjacency.nonZeros() == 4);
  }
  SUBCASE("label out of range reports the line") {
    write_file(dir.path / "labels.txt", "0\n7\n1\n");
    CHECK_THROWS_WITH_AS(load_dataset(dir.path), doctest::Contains(":2:"), ValidationError);
  }
  SUBCASE("self-loop rejected") {
    write_file(dir.path / "edges.txt", "0 1\n2 2\n");
    CHECK_THROWS_AS(load_dataset(dir.path), ValidationError);
  }
  SUBCASE("edge index out of range") {
    write_file(dir.path / "edges.txt", "0 3\n");
    CHECK_THROWS_AS(load_dataset(dir.path), ValidationError);
  }
  SUBCASE("missing file") {
    fs::remove(dir.path / "features.txt");
    CHECK_THROWS(load_dataset(dir.path));
  }
  SUBCASE("overlapping splits rejected") {
    write_file(dir.path / "splits.json", R"({"train": [0, 2], "val": [0], "test": [1]})");
    CHECK_THROWS_AS(load_dataset(dir.path), ValidationError);
  }
  SUBCASE("train split must cover every class") {
    write_file(dir.path / "splits.json", R"({"train": [0, 1], "val": [], "test": [2]})");
    CHECK_THROWS_AS(load_dataset(dir.path), ValidationError);
  }
}

TEST_CASE("cosine_similarity") {
  RowVector a(2), b(2);
  a << 1, 0;
  b << 0, 1;
  CHECK(cosine_similarity(a, b) == doctest::Approx(0.0));

  a << 1, 2;
  b << 2, 4;
  CHECK(cosine_similarity(a, b) == doctest::Approx(1.0));

  RowVector c(3), d(3);
  c << 1, 1, 0;
  d << 1, 0, 1;
  CHECK(cosine_similarity(c, d) == doctest::Approx(0.5));

  RowVector zero = RowVector::Zero(3);
  CHECK(cosine_similarity(zero, d) == 0.0);

  CHECK_THROWS_AS(cosine_similarity(a, c), ShapeError);
}

TEST_CASE("build_knn_graph basics") {
  Matrix x(3, 2);
  x << 1, 0, 0.9, 0.1, 0, 1;
  FeatureGraph g = build_knn_graph(x, 1);
  // brute force: 0 picks 1, 1 picks 0, 2 picks 1; union {0-1, 1-2}
  CHECK(g.adjacency.nonZeros() == 4);
  CHECK(g.adjacency.coeff(0, 1) == 1.0);
  CHECK(g.adjacency.coeff(1, 2) == 1.0);
  CHECK(g.adjacency.coeff(0, 2) == 0.0);
  for (int i = 0; i < 3; ++i) CHECK(g.adjacency.coeff(i, i) == 0.0);

  SUBCASE("k = N-1 gives the complete graph minus self-loops") {
    Matrix r = random_features(6, 3, 1);
    CHECK(build_knn_graph(r, 5).adjacency.nonZeros() == 30);
  }
  SUBCASE("per-node scaling leaves the graph unchanged") {
    Matrix scaled = x;
    scaled.row(0) *= 5.0;
    CHECK(Matrix(build_knn_graph(scaled, 1).adjacency).isApprox(Matrix(g.adjacency)));
  }
  SUBCASE("k out of range") {
    CHECK_THROWS_AS(build_knn_graph(x, 0), std::invalid_argument);
    CHECK_THROWS_AS(build_knn_graph(x, 3), std::invalid_argument);
  }
}

TEST_CASE("build_knn_graph invariances") {
  const Matrix x = random_features(15, 4, 7);
  const Matrix base = Matrix(build_knn_graph(x, 3).adjacency);

  SUBCASE("global orthogonal rotation of all features") {
    Matrix a = random_features(4, 4, 9);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
    Matrix rot = qr.householderQ();
    CHECK(Matrix(build_knn_graph(x * rot, 3).adjacency).isApprox(base));
  }
  SUBCASE("node relabeling permutes the adjacency") {
    std::vector<int> perm(15);
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(11);
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix permuted(15, 4);
    for (int i = 0; i < 15; ++i) permuted.row(perm[i]) = x.row(i);
    Matrix got = Matrix(build_knn_graph(permuted, 3).adjacency);
    Matrix want = Matrix::Zero(15, 15);
    for (int i = 0; i < 15; ++i)
      for (int j = 0; j < 15; ++j) want(perm[i], perm[j]) = base(i, j);
    CHECK(got.isApprox(want));
  }
}

TEST_CASE("normalize_adjacency") {
  SUBCASE("single node, no edges") {
    CsrMatrix a(1, 1);
    Matrix got = Matrix(normalize_adjacency(a, true));
    CHECK(got(0, 0) == doctest::Approx(1.0));
  }
  SUBCASE("two nodes, one edge, self-loops on") {
    CsrMatrix a = adjacency_from_edges({{0, 1}}, 2);
    Matrix got = Matrix(normalize_adjacency(a, true));
    CHECK(got.isApproxToConstant(0.5, 1e-15));
  }
  SUBCASE("two nodes, one edge, self-loops off") {
    CsrMatrix a = adjacency_from_edges({{0, 1}}, 2);
    Matrix got = Matrix(normalize_adjacency(a, false));
    Matrix want(2, 2);
    want << 0, 1, 1, 0;
    CHECK(got.isApprox(want));
  }
  SUBCASE("non-symmetric input rejected") {
    CsrMatrix a(2, 2);
    a.insert(0, 1) = 1.0;
    CHECK_THROWS_AS(normalize_adjacency(a, true), ValidationError);
  }
  SUBCASE("symmetric output with spectral radius <= 1") {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      std::mt19937_64 rng(seed);
      std::uniform_int_distribution<int> node(0, 199);
      std::vector<std::pair<int, int>> edges;
      for (int e = 0; e < 600; ++e) {
        int u = node(rng), v = node(rng);
        if (u != v) edges.emplace_back(u, v);
      }
      CsrMatrix norm = normalize_adjacency(adjacency_from_edges(edges, 200), true);
      CHECK(CsrMatrix(CsrMatrix(norm.transpose()) - norm).squaredNorm() <= 1e-30);
      // power iteration
      Eigen::VectorXd v = Eigen::VectorXd::Ones(200).normalized();
      double lambda = 0.0;
      for (int it = 0; it < 200; ++it) {
        Eigen::VectorXd w = norm * v;
        lambda = w.norm();
        v = w / lambda;
      }
      CHECK(lambda <= 1.0 + 1e-10);
    }
  }
}

TEST_CASE("make_splits") {
  std::vector<int> labels;
  for (int i = 0; i < 100; ++i) labels.push_back(i % 4);
  Splits s = make_splits(labels, 4, 5, 20, 30, 42);
  CHECK(s.train.size() == 20);
  CHECK(s.val.size() == 20);
  CHECK(s.test.size() == 30);
  std::set<int> all(s.train.begin(), s.train.end());
  for (int i : s.val) CHECK(all.insert(i).second);
  for (int i : s.test) CHECK(all.insert(i).second);

  Splits again = make_splits(labels, 4, 5, 20, 30, 42);
  CHECK(again.train == s.train);
  CHECK(again.val == s.val);
  CHECK(again.test == s.test);

  CHECK_THROWS_AS(make_splits(labels, 4, 26, 0, 0, 0), ValidationError);
  CHECK_THROWS_AS(make_splits(labels, 4, 5, 60, 30, 0), ValidationError);
}
