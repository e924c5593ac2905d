#pragma once

// Dense substrate: elementwise order, vec/commutation utilities, Z/M-matrix
// classification and the Kronecker-system oracle for T-Sylvester equations.
//
// vec() stacks columns (column-major), so that for the commutation matrix
//   Pi * vec(X) = vec(X^T)
// and X -> D X + X^T A has the matrix  I (x) D + (A^T (x) I) Pi.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "tric/types.hpp"

namespace tric {

/// Tolerance used for order relations on computed iterates.
inline double default_order_tol(const DenseMatrix& m) {
  return 1e-12 * std::max(1.0, m.norm());
}

/// True iff every entry of N - M is >= -tol.
inline bool elementwise_leq(const DenseMatrix& m, const DenseMatrix& n, double tol) {
  detail::require_same_shape(m, n, "elementwise_leq");
  if (tol < 0.0) throw Error("elementwise_leq: negative tolerance");
  return ((n - m).array() >= -tol).all();
}

inline bool is_nonnegative(const DenseMatrix& m, double tol = 0.0) {
  return (m.array() >= -tol).all();
}

inline DenseVector vec(const DenseMatrix& x) {
  return Eigen::Map<const DenseVector>(x.data(), x.size());
}

inline DenseMatrix unvec(const DenseVector& v, Index rows, Index cols) {
  if (v.size() != rows * cols) throw ShapeError("unvec: size mismatch");
  return Eigen::Map<const DenseMatrix>(v.data(), rows, cols);
}

/// X -> D X + X^T A.
inline DenseMatrix tsylv_apply(const DenseMatrix& d, const DenseMatrix& a, const DenseMatrix& x) {
  DenseMatrix out = d * x;
  out.noalias() += x.transpose() * a;
  return out;
}

/// The n^2 x n^2 permutation with Pi * vec(X) = vec(X^T).
inline DenseMatrix commutation_matrix(Index n) {
  if (n < 1) throw Error("commutation_matrix: n must be positive");
  DenseMatrix pi = DenseMatrix::Zero(n * n, n * n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i) pi(i + j * n, j + i * n) = 1.0;
  return pi;
}

/// I (x) D + (A^T (x) I) Pi, assembled entrywise:
/// the coefficient of X(k,l) in (D X + X^T A)(i,j) is D(i,k)[j==l] + A(k,j)[l==i].
inline DenseMatrix tsylv_kron_matrix(const DenseMatrix& d, const DenseMatrix& a) {
  detail::require_square(d, "tsylv_kron_matrix");
  detail::require_same_shape(d, a, "tsylv_kron_matrix");
  const Index n = d.rows();
  DenseMatrix k = DenseMatrix::Zero(n * n, n * n);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i) {
      const Index row = i + j * n;
      for (Index kk = 0; kk < n; ++kk) {
        k(row, kk + j * n) += d(i, kk);
        k(row, kk + i * n) += a(kk, j);
      }
    }
  return k;
}

/// Bounds on the Perron root of a nonnegative operator from Collatz-Wielandt
/// ratios; `vector` is the positive iterate attaining `upper`.
struct PerronEstimate {
  double lower = 0.0;
  double upper = std::numeric_limits<double>::infinity();
  DenseVector vector;
  int iterations = 0;
  bool converged = false;
};

/// Power iteration with the (N + I) shift, which keeps iterates strictly
/// positive. `apply` computes y = N x for a nonnegative N of order `n`.
/// Stops early once the bounds decide `rho < threshold` or `rho >= threshold`.
template <class Apply>
PerronEstimate perron_root(Apply&& apply, Index n, double rel_tol, int max_iter,
                           std::optional<double> threshold = std::nullopt) {
  PerronEstimate est;
  DenseVector x = DenseVector::Ones(n);
  DenseVector y(n);
  constexpr double floor = 1e-280;
  for (int it = 1; it <= max_iter; ++it) {
    y = apply(x);
    double lo = std::numeric_limits<double>::infinity();
    double hi = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double r = y(i) / x(i);
      lo = std::min(lo, r);
      hi = std::max(hi, r);
    }
    est.iterations = it;
    est.lower = std::max(est.lower, lo);
    if (hi < est.upper) {
      est.upper = hi;
      est.vector = x;
    }
    if (est.upper - est.lower <= rel_tol * est.upper) {
      est.converged = true;
      return est;
    }
    if (threshold && (est.upper < *threshold || est.lower >= *threshold)) return est;
    x += y;
    x /= x.maxCoeff();
    x = x.cwiseMax(floor);
  }
  return est;
}

/// Largest eigenvalue modulus, relative accuracy 1e-8.
inline double spectral_radius(const DenseMatrix& m) {
  detail::require_square(m, "spectral_radius");
  if (m.size() == 0) return 0.0;
  if ((m.array() >= 0.0).all()) {
    auto est = perron_root([&](const DenseVector& x) { DenseVector y = m * x; return y; },
                           m.rows(), 1e-10, 10000);
    if (est.converged) return 0.5 * (est.lower + est.upper);
  }
  Eigen::EigenSolver<DenseMatrix> es(m, false);
  if (es.info() != Eigen::Success) throw ConvergenceError("spectral_radius: eigenvalue iteration failed");
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// Upper estimate of rho(N) for a sparse nonnegative N; returns the
/// Collatz-Wielandt upper bound, which never underestimates.
inline double spectral_radius_upper(const SparseMatrix& n, int max_iter = 10000, double rel_tol = 1e-8) {
  if (n.rows() != n.cols()) throw ShapeError("spectral_radius_upper: matrix is not square");
  if (n.rows() == 0) return 0.0;
  auto est = perron_root([&](const DenseVector& x) { DenseVector y = n * x; return y; }, n.rows(),
                         rel_tol, max_iter);
  return est.upper;
}

struct MatrixClass {
  bool is_z_matrix = false;
  bool is_nonsingular_m_matrix = false;
  /// v >= 0 with M v > 0, present when the M-matrix test succeeds.
  std::optional<DenseVector> certificate;
  /// Splitting M = s I - N and the computed rho(N), when M is a Z-matrix.
  double shift = 0.0;
  double rho = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

inline bool certifies(const DenseMatrix& m, const DenseVector& v) {
  return (v.array() >= 0.0).all() && ((m * v).array() > 0.0).all();
}

}  // namespace detail

/// Z-matrix test on off-diagonals, then M = sI - N with s = max diag + 1 and
/// rho(N) < s decided by power iteration, falling back to a dense eigen-solve.
inline MatrixClass classify_m_matrix(const DenseMatrix& m, double tol = 0.0) {
  detail::require_square(m, "classify_m_matrix");
  MatrixClass cls;
  const Index n = m.rows();
  cls.is_z_matrix = true;
  for (Index j = 0; j < n && cls.is_z_matrix; ++j)
    for (Index i = 0; i < n; ++i)
      if (i != j && m(i, j) > tol) {
        cls.is_z_matrix = false;
        break;
      }
  if (!cls.is_z_matrix || n == 0) return cls;

  const double s = m.diagonal().maxCoeff() + 1.0;
  DenseMatrix nn = -m;
  nn.diagonal().array() += s;
  nn = nn.cwiseMax(0.0);
  cls.shift = s;

  auto est = perron_root([&](const DenseVector& x) { DenseVector y = nn * x; return y; }, n, 1e-8,
                         10000, s);
  if (est.upper < s && detail::certifies(m, est.vector)) {
    cls.rho = est.upper;
    cls.is_nonsingular_m_matrix = true;
    cls.certificate = est.vector;
    return cls;
  }
  if (est.lower >= s) {
    cls.rho = est.lower;
    return cls;
  }
  cls.rho = spectral_radius(nn);
  if (cls.rho < s) {
    Eigen::PartialPivLU<DenseMatrix> lu(m);
    DenseVector v = lu.solve(DenseVector::Ones(n));
    if (detail::certifies(m, v)) {
      cls.is_nonsingular_m_matrix = true;
      cls.certificate = std::move(v);
    }
  }
  return cls;
}

/// Matrix-free classification of I (x) D + (A^T (x) I) Pi without forming the
/// n^2 x n^2 matrix. For n >= 2 the Kronecker matrix is a Z-matrix iff D has
/// nonpositive off-diagonal entries and every entry of A is nonpositive.
/// The certificate, when present, is vec(V) for an n x n matrix V.
inline MatrixClass classify_tsylv_operator(const DenseMatrix& d, const DenseMatrix& a, double tol = 0.0,
                                           int max_iter = 2000) {
  detail::require_square(d, "classify_tsylv_operator");
  detail::require_same_shape(d, a, "classify_tsylv_operator");
  const Index n = d.rows();
  MatrixClass cls;
  if (n == 1) {
    cls.is_z_matrix = true;
    cls.shift = d(0, 0) + a(0, 0) + 1.0;
    cls.rho = 1.0;
    if (d(0, 0) + a(0, 0) > 0.0) {
      cls.is_nonsingular_m_matrix = true;
      cls.certificate = DenseVector::Ones(1);
    }
    return cls;
  }
  DenseMatrix off = d;
  off.diagonal().setConstant(-std::numeric_limits<double>::infinity());
  cls.is_z_matrix = off.maxCoeff() <= tol && a.maxCoeff() <= tol;
  if (!cls.is_z_matrix) return cls;

  // Diagonal of the Kronecker matrix is D(i,i) + [i==j] A(i,i) <= D(i,i).
  const double s = d.diagonal().maxCoeff() + 1.0;
  cls.shift = s;
  auto apply_n = [&](const DenseVector& x) {
    const auto xm = Eigen::Map<const DenseMatrix>(x.data(), n, n);
    DenseMatrix y = s * xm - tsylv_apply(d, a, xm);
    // Entries dropped by the Z tolerance would make y slightly negative.
    return DenseVector(vec(y.cwiseMax(0.0)));
  };
  auto est = perron_root(apply_n, n * n, 1e-8, max_iter, s);
  if (est.upper < s) {
    const auto v = Eigen::Map<const DenseMatrix>(est.vector.data(), n, n);
    if ((tsylv_apply(d, a, v).array() > 0.0).all()) {
      cls.rho = est.upper;
      cls.is_nonsingular_m_matrix = true;
      cls.certificate = est.vector;
    }
    return cls;
  }
  cls.rho = est.lower >= s ? est.lower : 0.5 * (est.lower + est.upper);
  return cls;
}

/// Solves D X + X^T A = RHS through the dense n^2 x n^2 Kronecker system.
/// Refuses n > cap since the system has n^4 entries.
inline DenseMatrix tsylv_oracle_solve(const DenseMatrix& d, const DenseMatrix& a, const DenseMatrix& rhs,
                                      Index cap = 200) {
  detail::require_square(d, "tsylv_oracle_solve");
  detail::require_same_shape(d, a, "tsylv_oracle_solve");
  detail::require_same_shape(d, rhs, "tsylv_oracle_solve");
  const Index n = d.rows();
  if (n > cap)
    throw Error("tsylv_oracle_solve: n = " + std::to_string(n) + " exceeds oracle cap " + std::to_string(cap));
  const DenseMatrix k = tsylv_kron_matrix(d, a);
  Eigen::FullPivLU<DenseMatrix> lu(k);
  const double rcond = lu.rcond();
  if (!lu.isInvertible() || rcond < 1e-14)
    throw SingularOperatorError("tsylv_oracle_solve: singular Kronecker system", rcond);
  return unvec(lu.solve(vec(rhs)), n, n);
}

}  // namespace tric
