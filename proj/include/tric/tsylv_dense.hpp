#pragma once

// Dense T-Sylvester solver  D X + X^T A = E.
//
// With the real generalized Schur form D = Q S Z, A^T = Q T Z (S quasi upper
// triangular, T upper triangular) and Y = Z X Q the equation becomes
//
//   S Y + Y^T T^T = Q^T E Q,
//
// which is solved for the block pairs (Y_IJ, Y_JI), I <= J, walking from the
// bottom-right corner. Each pair is a linear system of order 2*b_I*b_J <= 8
// (order b_I^2 on the diagonal), so 2x2 blocks of S stay in real arithmetic.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SVD>

#include "tric/dense_core.hpp"
#include "tric/types.hpp"

namespace tric {

struct TSylvEquation {
  DenseMatrix d;
  DenseMatrix a;
  DenseMatrix e;
};

struct TSylvResult {
  DenseMatrix x;
  /// ||D X + X^T A - E||_F / ||E||_F (absolute when E = 0).
  double relative_residual = 0.0;
  /// Smallest singular value over the reduced block systems relative to ||D||_F + ||A||_F.
  double rcond = 0.0;
};

/// Threshold below which the operator is reported singular.
inline constexpr double kSingularRcond = 1e-14;

/// Holds the generalized Schur factorization of (D, A^T) so that several
/// right-hand sides can reuse it.
class TSylvSolver {
 public:
  using Small = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 8, 8>;
  using SmallVec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 8, 1>;

  TSylvSolver(const DenseMatrix& d, const DenseMatrix& a) : d_(d), a_(a) {
    detail::require_square(d, "TSylvSolver");
    detail::require_same_shape(d, a, "TSylvSolver");
    n_ = d.rows();
    if (n_ == 0) throw ShapeError("TSylvSolver: empty coefficients");
    if (!d.allFinite() || !a.allFinite()) throw Error("TSylvSolver: non-finite coefficients");

    Eigen::RealQZ<DenseMatrix> qz(n_);
    const DenseMatrix at = a.transpose();
    qz.compute(d, at, true);
    if (qz.info() != Eigen::Success) throw ConvergenceError("TSylvSolver: QZ iteration did not converge");
    q_ = qz.matrixQ();
    z_ = qz.matrixZ();
    st_ = qz.matrixS().transpose();
    tt_ = qz.matrixT().transpose();

    for (Index i = 0; i < n_;) {
      const Index size = (i + 1 < n_ && qz.matrixS()(i + 1, i) != 0.0) ? 2 : 1;
      starts_.push_back(i);
      sizes_.push_back(size);
      i += size;
    }
    estimate_rcond();
    if (!(rcond_ >= kSingularRcond))
      throw SingularOperatorError("T-Sylvester operator is singular or nearly so", rcond_);
  }

  Index order() const noexcept { return n_; }
  double rcond() const noexcept { return rcond_; }
  /// Number of 2x2 diagonal blocks of S (complex eigenvalue pairs of the pencil).
  Index complex_pairs() const noexcept {
    return static_cast<Index>(std::count(sizes_.begin(), sizes_.end(), Index{2}));
  }

  TSylvResult solve(const DenseMatrix& e) const {
    detail::require_same_shape(d_, e, "TSylvSolver::solve");
    const DenseMatrix f = q_.transpose() * e * q_;
    DenseMatrix y = DenseMatrix::Zero(n_, n_);
    const auto nb = static_cast<Index>(starts_.size());

    for (Index bi = nb - 1; bi >= 0; --bi) {
      for (Index bj = nb - 1; bj >= bi; --bj) {
        const Index i0 = starts_[bi], ni = sizes_[bi];
        const Index j0 = starts_[bj], nj = sizes_[bj];
        const Index ki = i0 + ni, kj = j0 + nj;
        const Index li = n_ - ki, lj = n_ - kj;

        Small g_ij = f.block(i0, j0, ni, nj);
        g_ij.noalias() -= st_.block(ki, i0, li, ni).transpose() * y.block(ki, j0, li, nj);
        g_ij.noalias() -= y.block(kj, i0, lj, ni).transpose() * tt_.block(kj, j0, lj, nj);

        if (bi == bj) {
          const Small sys = diagonal_system(bi);
          Small rhs = g_ij;
          const SmallVec u = sys.fullPivLu().solve(Eigen::Map<const SmallVec>(rhs.data(), ni * ni));
          y.block(i0, i0, ni, ni) = Eigen::Map<const Small>(u.data(), ni, ni);
          continue;
        }

        Small g_ji = f.block(j0, i0, nj, ni);
        g_ji.noalias() -= st_.block(kj, j0, lj, nj).transpose() * y.block(kj, i0, lj, ni);
        g_ji.noalias() -= y.block(ki, j0, li, nj).transpose() * tt_.block(ki, i0, li, ni);

        const Small sys = pair_system(bi, bj);
        const Index m = ni * nj;
        SmallVec rhs(2 * m);
        rhs.head(m) = Eigen::Map<const SmallVec>(g_ij.data(), m);
        const Small g_ji_t = g_ji.transpose();
        rhs.tail(m) = Eigen::Map<const SmallVec>(g_ji_t.data(), m);
        const SmallVec uw = sys.fullPivLu().solve(rhs);
        y.block(i0, j0, ni, nj) = Eigen::Map<const Small>(uw.data(), ni, nj);
        y.block(j0, i0, nj, ni) = Eigen::Map<const Small>(uw.data() + m, ni, nj).transpose();
      }
    }

    TSylvResult out;
    out.x = z_.transpose() * y * q_.transpose();
    out.rcond = rcond_;
    const double res = (tsylv_apply(d_, a_, out.x) - e).norm();
    const double en = e.norm();
    out.relative_residual = en > 0.0 ? res / en : res;
    return out;
  }

 private:
  // S_II and T_II as small dense blocks.
  Small s_block(Index bi, Index bj) const {
    return st_.block(starts_[bj], starts_[bi], sizes_[bj], sizes_[bi]).transpose();
  }
  Small t_block(Index bi, Index bj) const {
    return tt_.block(starts_[bj], starts_[bi], sizes_[bj], sizes_[bi]).transpose();
  }

  static Small kron_identity_left(Index k, const Small& m) {  // I_k (x) M
    Small out = Small::Zero(k * m.rows(), k * m.cols());
    for (Index b = 0; b < k; ++b) out.block(b * m.rows(), b * m.cols(), m.rows(), m.cols()) = m;
    return out;
  }
  static Small kron_identity_right(const Small& m, Index k) {  // M (x) I_k
    Small out = Small::Zero(m.rows() * k, m.cols() * k);
    for (Index r = 0; r < m.rows(); ++r)
      for (Index c = 0; c < m.cols(); ++c)
        for (Index b = 0; b < k; ++b) out(r * k + b, c * k + b) = m(r, c);
    return out;
  }

  // vec(S_II U + U^T T_II^T) = (I (x) S_II + (T_II (x) I) Pi) vec(U)
  Small diagonal_system(Index b) const {
    const Index k = sizes_[b];
    const Small s = s_block(b, b), t = t_block(b, b);
    Small sys = kron_identity_left(k, s);
    const Small tk = kron_identity_right(t, k);
    for (Index j = 0; j < k; ++j)
      for (Index i = 0; i < k; ++i) sys.col(j + i * k) += tk.col(i + j * k);
    return sys;
  }

  // [I (x) S_II, T_JJ (x) I; I (x) T_II, S_JJ (x) I] acting on [vec U; vec W].
  Small pair_system(Index bi, Index bj) const {
    const Index ni = sizes_[bi], nj = sizes_[bj], m = ni * nj;
    Small sys(2 * m, 2 * m);
    sys.topLeftCorner(m, m) = kron_identity_left(nj, s_block(bi, bi));
    sys.topRightCorner(m, m) = kron_identity_right(t_block(bj, bj), ni);
    sys.bottomLeftCorner(m, m) = kron_identity_left(nj, t_block(bi, bi));
    sys.bottomRightCorner(m, m) = kron_identity_right(s_block(bj, bj), ni);
    return sys;
  }

  void estimate_rcond() {
    const double scale = d_.norm() + a_.norm();
    double smin = std::numeric_limits<double>::infinity();
    const auto nb = static_cast<Index>(starts_.size());
    for (Index bi = 0; bi < nb; ++bi)
      for (Index bj = bi; bj < nb; ++bj) {
        const Small sys = bi == bj ? diagonal_system(bi) : pair_system(bi, bj);
        double s;
        if (sys.rows() == 1) {
          s = std::abs(sys(0, 0));
        } else {
          Eigen::JacobiSVD<Small> svd(sys);
          s = svd.singularValues().minCoeff();
        }
        smin = std::min(smin, s);
      }
    rcond_ = scale > 0.0 ? smin / scale : 0.0;
  }

  DenseMatrix d_, a_;
  Index n_ = 0;
  DenseMatrix q_, z_, st_, tt_;
  std::vector<Index> starts_, sizes_;
  double rcond_ = 0.0;
};

inline TSylvResult solve_tsylv_dense(const TSylvEquation& eq) {
  return TSylvSolver(eq.d, eq.a).solve(eq.e);
}

/// Solves (D - U1) X + X^T (A - U2) = E, the form of a Newton step.
inline TSylvResult solve_tsylv_shifted(const DenseMatrix& d, const DenseMatrix& a, const DenseMatrix& u1,
                                       const DenseMatrix& u2, const DenseMatrix& e) {
  detail::require_same_shape(d, u1, "solve_tsylv_shifted");
  detail::require_same_shape(a, u2, "solve_tsylv_shifted");
  return TSylvSolver(d - u1, a - u2).solve(e);
}

}  // namespace tric
