#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace tric {

using Index = Eigen::Index;
using DenseMatrix = Eigen::MatrixXd;
using DenseVector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// The linear operator of a solve is singular or numerically so.
class SingularOperatorError : public Error {
 public:
  SingularOperatorError(const std::string& what, double rcond)
      : Error(what + " (reciprocal condition estimate " + std::to_string(rcond) + ")"),
        rcond_(rcond) {}

  double rcond() const noexcept { return rcond_; }

 private:
  double rcond_;
};

class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// A Krylov basis block lost rank and no deflation is attempted.
class BreakdownError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline void require_same_shape(const DenseMatrix& a, const DenseMatrix& b, const char* where) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(where) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
}

inline void require_square(const DenseMatrix& a, const char* where) {
  if (a.rows() != a.cols()) {
    throw ShapeError(std::string(where) + ": matrix is not square (" + std::to_string(a.rows()) +
                     "x" + std::to_string(a.cols()) + ")");
  }
}

}  // namespace detail
}  // namespace tric
