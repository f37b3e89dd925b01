#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <stdexcept>
#include <string>

namespace scrl {

// Row-major throughout: file formats and the checkpoint layout are
// row-major, so keeping compute storage identical avoids transposes
// at every serialization boundary.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

// Compressed-row sparse matrix; adjacency operators and sparse feature
// matrices are gradient-free constants.
using CsrMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace scrl
