#pragma once

// Factored matrices M = P1 P2^T and the large-scale T-Riccati problem
//   D X + X^T A - X^T B1 B2^T X + C1^T C2 = 0
// with sparse A, D. Nothing here forms an n x n dense matrix.

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <utility>

#include <Eigen/QR>
#include <Eigen/SVD>
#include <Eigen/SparseLU>

#include "tric/riccati_dense.hpp"
#include "tric/types.hpp"

namespace tric {

struct LowRankPair {
  DenseMatrix p1, p2;

  LowRankPair() = default;
  LowRankPair(DenseMatrix left, DenseMatrix right) : p1(std::move(left)), p2(std::move(right)) {
    if (p1.cols() != p2.cols()) throw ShapeError("LowRankPair: factors have different column counts");
  }

  static LowRankPair zero(Index n) { return {DenseMatrix(n, 0), DenseMatrix(n, 0)}; }

  Index rows() const noexcept { return p1.rows(); }
  Index cols() const noexcept { return p2.rows(); }
  Index rank() const noexcept { return p1.cols(); }

  /// The represented matrix; for tests and small problems only.
  DenseMatrix dense() const {
    if (p1.cols() == 0) return DenseMatrix::Zero(p1.rows(), p2.rows());
    return p1 * p2.transpose();
  }
};

namespace detail {

inline void require_same_outer(const LowRankPair& m, const LowRankPair& n, const char* where) {
  if (m.rows() != n.rows() || m.cols() != n.cols())
    throw ShapeError(std::string(where) + ": outer dimensions differ");
}

/// Upper triangular R (min(rows,cols) x cols) of a thin QR of `m`.
inline DenseMatrix qr_r(const DenseMatrix& m) {
  Eigen::HouseholderQR<DenseMatrix> qr(m);
  const Index k = std::min(m.rows(), m.cols());
  return qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
}

/// Thin orthonormal factor Q (rows x min(rows,cols)) and R with m = Q R.
inline std::pair<DenseMatrix, DenseMatrix> thin_qr(const DenseMatrix& m) {
  Eigen::HouseholderQR<DenseMatrix> qr(m);
  const Index k = std::min(m.rows(), m.cols());
  DenseMatrix q = qr.householderQ() * DenseMatrix::Identity(m.rows(), k);
  DenseMatrix r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  return {std::move(q), std::move(r)};
}

}  // namespace detail

/// ||P1 P2^T||_F = ||R1 R2^T||_F from thin QR factors of P1 and P2, which keeps
/// relative accuracy when the represented matrix is much smaller than its factors.
inline double lr_frobenius_norm(const LowRankPair& m) {
  if (m.rank() == 0) return 0.0;
  return (detail::qr_r(m.p1) * detail::qr_r(m.p2).transpose()).norm();
}

/// <M, N>_F = trace(N^T M) = sum((P1^T Q1) .* (P2^T Q2)).
inline double lr_inner_product(const LowRankPair& m, const LowRankPair& n) {
  detail::require_same_outer(m, n, "lr_inner_product");
  if (m.rank() == 0 || n.rank() == 0) return 0.0;
  const DenseMatrix g1 = m.p1.transpose() * n.p1;
  const DenseMatrix g2 = m.p2.transpose() * n.p2;
  return (g1.array() * g2.array()).sum();
}

/// [s P1, t Q1][P2, Q2]^T, i.e. s M + t N without recompression.
inline LowRankPair lr_add(const LowRankPair& m, const LowRankPair& n, double s = 1.0, double t = 1.0) {
  detail::require_same_outer(m, n, "lr_add");
  DenseMatrix left(m.rows(), m.rank() + n.rank()), right(m.cols(), m.rank() + n.rank());
  left << s * m.p1, t * n.p1;
  right << m.p2, n.p2;
  return {std::move(left), std::move(right)};
}

/// Recompression: thin QR of each factor, SVD of the small core, singular
/// values below tol * sigma_max dropped, at most max_rank kept (0 = no cap).
/// The singular values are split evenly between the two factors.
inline LowRankPair lr_truncate(const LowRankPair& m, double tol, Index max_rank = 0) {
  if (tol < 0.0) throw Error("lr_truncate: negative tolerance");
  if (m.rank() == 0) return m;
  auto [q1, r1] = detail::thin_qr(m.p1);
  auto [q2, r2] = detail::thin_qr(m.p2);
  const DenseMatrix core = r1 * r2.transpose();
  Eigen::JacobiSVD<DenseMatrix> svd(core, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const DenseVector& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return LowRankPair::zero(m.rows());
  const double floor = std::max(tol, std::numeric_limits<double>::epsilon() * double(s.size()));
  Index keep = 0;
  while (keep < s.size() && s(keep) >= floor * s(0)) ++keep;
  if (max_rank > 0) keep = std::min(keep, max_rank);
  const DenseVector root = s.head(keep).cwiseSqrt();
  DenseMatrix p1 = q1 * (svd.matrixU().leftCols(keep) * root.asDiagonal());
  DenseMatrix p2 = q2 * (svd.matrixV().leftCols(keep) * root.asDiagonal());
  return {std::move(p1), std::move(p2)};
}

/// Square sparse matrix with a sparse LU computed on the first solve and
/// shared by copies.
class SparseOperator {
 public:
  SparseOperator() = default;
  explicit SparseOperator(SparseMatrix m) : state_(std::make_shared<State>()) {
    if (m.rows() != m.cols()) throw ShapeError("SparseOperator: matrix is not square");
    m.makeCompressed();
    state_->matrix = std::move(m);
  }

  Index rows() const noexcept { return state_ ? state_->matrix.rows() : 0; }
  const SparseMatrix& matrix() const { return state_->matrix; }

  DenseMatrix apply(const DenseMatrix& x) const { return state_->matrix * x; }

  DenseMatrix solve(const DenseMatrix& y) const {
    factorize();
    DenseMatrix z = state_->lu.solve(y);
    return z;
  }

  void factorize() const {
    std::call_once(state_->once, [this] {
      state_->lu.analyzePattern(state_->matrix);
      state_->lu.factorize(state_->matrix);
      state_->ok = state_->lu.info() == Eigen::Success;
    });
    if (!state_->ok) throw SingularOperatorError("SparseOperator: sparse LU failed", 0.0);
  }

 private:
  struct State {
    SparseMatrix matrix;
    Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu;
    std::once_flag once;
    bool ok = false;
  };
  std::shared_ptr<State> state_;
};

using SolveFn = std::function<DenseMatrix(const DenseMatrix&)>;

/// Solves (A - M N^T) Z = Y given solves with A:
///   Z = A^{-1} Y + A^{-1} M (I - N^T A^{-1} M)^{-1} N^T A^{-1} Y.
/// A^{-1} M and the capacitance factorization are kept for repeated solves.
class SmwSolver {
 public:
  SmwSolver(SolveFn base, DenseMatrix m, DenseMatrix n) : base_(std::move(base)), n_(std::move(n)) {
    if (m.rows() != n_.rows() || m.cols() != n_.cols()) throw ShapeError("SmwSolver: M and N differ in shape");
    const Index r = m.cols();
    if (r == 0) return;
    ainv_m_ = base_(m);
    const DenseMatrix cap = DenseMatrix::Identity(r, r) - n_.transpose() * ainv_m_;
    lu_.compute(cap);
    const double rc = lu_.rcond();
    if (!(rc >= 1e-14)) throw SingularOperatorError("SmwSolver: singular capacitance matrix", rc);
  }

  DenseMatrix solve(const DenseMatrix& y) const {
    DenseMatrix z = base_(y);
    if (ainv_m_.cols() > 0) z.noalias() += ainv_m_ * lu_.solve(n_.transpose() * z);
    return z;
  }

 private:
  SolveFn base_;
  DenseMatrix n_, ainv_m_;
  Eigen::PartialPivLU<DenseMatrix> lu_;
};

inline DenseMatrix smw_solve(const SolveFn& base, const DenseMatrix& m, const DenseMatrix& n, const DenseMatrix& y) {
  return SmwSolver(base, m, n).solve(y);
}

inline DenseMatrix smw_solve(const SparseOperator& a, const DenseMatrix& m, const DenseMatrix& n,
                             const DenseMatrix& y) {
  return smw_solve([&a](const DenseMatrix& v) { return a.solve(v); }, m, n, y);
}

/// D X + X^T A - X^T B1 B2^T X + C1^T C2 = 0 with sparse A, D (n x n),
/// B1, B2 (n x p) and C1, C2 (q x n).
class LowRankTRiccatiProblem {
 public:
  LowRankTRiccatiProblem() = default;
  LowRankTRiccatiProblem(SparseMatrix a, SparseMatrix d, DenseMatrix b1, DenseMatrix b2, DenseMatrix c1,
                         DenseMatrix c2)
      : b1_(std::move(b1)), b2_(std::move(b2)), c1_(std::move(c1)), c2_(std::move(c2)) {
    const Index n = d.rows();
    if (a.rows() != n || a.cols() != n || d.cols() != n) throw ShapeError("LowRankTRiccatiProblem: A, D must be n x n");
    if (b1_.rows() != n || b2_.rows() != n || b1_.cols() != b2_.cols())
      throw ShapeError("LowRankTRiccatiProblem: B1, B2 must be n x p");
    if (c1_.cols() != n || c2_.cols() != n || c1_.rows() != c2_.rows())
      throw ShapeError("LowRankTRiccatiProblem: C1, C2 must be q x n");
    at_ = SparseOperator(SparseMatrix(a.transpose()));
    a.makeCompressed();
    d_ = SparseOperator(std::move(d));
    a_ = std::move(a);
  }

  Index order() const noexcept { return d_.rows(); }
  Index p() const noexcept { return b1_.cols(); }
  Index q() const noexcept { return c1_.rows(); }

  const SparseMatrix& a() const { return a_; }
  const SparseMatrix& d() const { return d_.matrix(); }
  const DenseMatrix& b1() const { return b1_; }
  const DenseMatrix& b2() const { return b2_; }
  const DenseMatrix& c1() const { return c1_; }
  const DenseMatrix& c2() const { return c2_; }

  /// A^T and D with cached sparse LU factorizations.
  const SparseOperator& at_op() const { return at_; }
  const SparseOperator& d_op() const { return d_; }

  /// C = C1^T C2 as a factor pair.
  LowRankPair c_pair() const { return {c1_.transpose(), c2_.transpose()}; }

  /// Dense form, for small n.
  TRiccatiProblem to_dense() const {
    TRiccatiProblem p;
    p.a = DenseMatrix(a_);
    p.d = DenseMatrix(d());
    p.b = b1_ * b2_.transpose();
    p.c = c1_.transpose() * c2_;
    return p;
  }

 private:
  SparseMatrix a_;
  SparseOperator at_, d_;
  DenseMatrix b1_, b2_, c1_, c2_;
};

/// X^T B1 B2^T X for X = P1 P2^T, as (P2 (P1^T B1), P2 (P1^T B2)).
inline LowRankPair lr_quadratic(const LowRankPair& x, const DenseMatrix& b1, const DenseMatrix& b2) {
  if (x.rows() != b1.rows() || x.rows() != b2.rows()) throw ShapeError("lr_quadratic: shape mismatch");
  return {x.p2 * (x.p1.transpose() * b1), x.p2 * (x.p1.transpose() * b2)};
}

/// R(X) = [D P1, P2, -P2 alpha, C1^T][P2, A^T P1, P2 beta, C2^T]^T,
/// alpha = P1^T B1, beta = P1^T B2.
inline LowRankPair lr_riccati_residual(const LowRankTRiccatiProblem& prob, const LowRankPair& x) {
  const Index n = prob.order();
  if (x.rows() != n || x.cols() != n) throw ShapeError("lr_riccati_residual: iterate has the wrong size");
  const Index t = x.rank(), q = prob.q();
  if (t == 0) return prob.c_pair();
  const Index p = prob.p();
  const DenseMatrix alpha = x.p1.transpose() * prob.b1();
  const DenseMatrix beta = x.p1.transpose() * prob.b2();
  DenseMatrix left(n, 2 * t + p + q), right(n, 2 * t + p + q);
  left << prob.d_op().apply(x.p1), x.p2, -(x.p2 * alpha), prob.c1().transpose();
  right << x.p2, prob.at_op().apply(x.p1), x.p2 * beta, prob.c2().transpose();
  return {std::move(left), std::move(right)};
}

struct StepResidual {
  LowRankPair step;      ///< S_k = X~_{k+1} - X_k
  LowRankPair residual;  ///< L_{k+1}, residual of the Newton-step equation at X~_{k+1}
};

/// S_k = [P~1, -P1][P~2, P2]^T and
/// L = (D - X^T B) X~ + X~^T (A - B X) + X^T B X + C
///   = [D P~1, -P2 alpha b~^T, P~2,     -P~2 a~ beta^T, P2 alpha, C1^T]
///     [P~2,   P~2,            A^T P~1, P2,             P2 beta,  C2^T]^T
/// with alpha = P1^T B1, beta = P1^T B2, a~ = P~1^T B1, b~ = P~1^T B2.
/// Both pairs are recompressed when trunc_tol >= 0.
inline StepResidual lr_step_and_Lresidual(const LowRankTRiccatiProblem& prob, const LowRankPair& xk,
                                          const LowRankPair& xt, double trunc_tol = -1.0) {
  const Index n = prob.order();
  if (xk.rows() != n || xk.cols() != n || xt.rows() != n || xt.cols() != n)
    throw ShapeError("lr_step_and_Lresidual: iterate has the wrong size");
  StepResidual out;
  out.step = lr_add(xt, xk, 1.0, -1.0);

  const Index t = xk.rank(), s = xt.rank(), p = prob.p(), q = prob.q();
  const DenseMatrix alpha = xk.p1.transpose() * prob.b1();
  const DenseMatrix beta = xk.p1.transpose() * prob.b2();
  const DenseMatrix alpha_t = xt.p1.transpose() * prob.b1();
  const DenseMatrix beta_t = xt.p1.transpose() * prob.b2();
  const DenseMatrix p2_alpha = xk.p2 * alpha;
  const Index w = 3 * s + t + p + q;
  DenseMatrix left(n, w), right(n, w);
  left << prob.d_op().apply(xt.p1), -(p2_alpha * beta_t.transpose()), xt.p2,
      -(xt.p2 * (alpha_t * beta.transpose())), p2_alpha, prob.c1().transpose();
  right << xt.p2, xt.p2, prob.at_op().apply(xt.p1), xk.p2, xk.p2 * beta, prob.c2().transpose();
  out.residual = LowRankPair(std::move(left), std::move(right));
  if (trunc_tol >= 0.0) {
    out.step = lr_truncate(out.step, trunc_tol);
    out.residual = lr_truncate(out.residual, trunc_tol);
  }
  return out;
}

}  // namespace tric
