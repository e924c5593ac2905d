#pragma once

// Extended Krylov projection for the Newton-step T-Sylvester equation
//
//   D^ X + X^T A^ = -F1 F2^T,   D^ = D - P2 alpha B2^T,  A^ = A - B1 beta^T P2^T,
//   F1 = [C1^T, P2 alpha],  F2 = [C2^T, P2 beta],  alpha = P1^T B1, beta = P1^T B2,
//
// around the iterate X_k = P1 P2^T. With M = A^^{-T} D^ the basis V spans the
// extended Krylov space of M seeded by A^^{-T} H, H = [C1^T, C2^T, P2 alpha, P2 beta],
// and W is an orthonormal basis of A^^T range(V). The approximation V Y W^T
// satisfies the Galerkin condition on range(W); its residual is
// (I - W W^T) D^ V Y W^T. Its norm is read off the next block row of W^T D^ V plus
// the part of D^ V outside the stored W, which rounding makes nonzero.

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/QR>
#include <Eigen/SVD>

#include "tric/lowrank_core.hpp"
#include "tric/tsylv_dense.hpp"
#include "tric/types.hpp"

namespace tric {

/// D^, A^^T, their inverses and the right-hand side factors for one Newton step.
class ShiftedOperators {
 public:
  ShiftedOperators(const LowRankTRiccatiProblem& prob, const LowRankPair& xk) : prob_(&prob) {
    const Index n = prob.order();
    if (xk.rows() != n || xk.cols() != n) throw ShapeError("ShiftedOperators: iterate has the wrong size");
    const DenseMatrix alpha = xk.p1.transpose() * prob.b1();
    const DenseMatrix beta = xk.p1.transpose() * prob.b2();
    p2_alpha_ = xk.p2 * alpha;
    p2_beta_ = xk.p2 * beta;
    const Index q = prob.q(), p = prob.p();
    f1_.resize(n, q + p);
    f1_ << prob.c1().transpose(), p2_alpha_;
    f2_.resize(n, q + p);
    f2_ << prob.c2().transpose(), p2_beta_;
    h_.resize(n, 2 * (q + p));
    h_ << prob.c1().transpose(), prob.c2().transpose(), p2_alpha_, p2_beta_;
    const SparseOperator at = prob.at_op(), d = prob.d_op();
    at_inv_.emplace([at](const DenseMatrix& y) { return at.solve(y); }, p2_beta_, prob.b1());
    d_inv_.emplace([d](const DenseMatrix& y) { return d.solve(y); }, p2_alpha_, prob.b2());
  }

  Index order() const noexcept { return prob_->order(); }

  /// D^ x
  DenseMatrix apply_d(const DenseMatrix& x) const {
    DenseMatrix y = prob_->d_op().apply(x);
    y.noalias() -= p2_alpha_ * (prob_->b2().transpose() * x);
    return y;
  }
  /// A^^T x
  DenseMatrix apply_at(const DenseMatrix& x) const {
    DenseMatrix y = prob_->at_op().apply(x);
    y.noalias() -= p2_beta_ * (prob_->b1().transpose() * x);
    return y;
  }
  /// A^^{-T} y
  DenseMatrix solve_at(const DenseMatrix& y) const { return at_inv_->solve(y); }
  /// D^^{-1} y
  DenseMatrix solve_d(const DenseMatrix& y) const { return d_inv_->solve(y); }

  /// M x = A^^{-T} D^ x and M^{-1} x = D^^{-1} A^^T x.
  DenseMatrix apply_m(const DenseMatrix& x) const { return solve_at(apply_d(x)); }
  DenseMatrix apply_m_inv(const DenseMatrix& x) const { return solve_d(apply_at(x)); }

  const DenseMatrix& f1() const { return f1_; }
  const DenseMatrix& f2() const { return f2_; }
  const DenseMatrix& seed() const { return h_; }

 private:
  const LowRankTRiccatiProblem* prob_;
  DenseMatrix p2_alpha_, p2_beta_, f1_, f2_, h_;
  std::optional<SmwSolver> at_inv_, d_inv_;
};

namespace detail {

/// Two passes of block classical Gram-Schmidt of X against the orthonormal
/// columns of Q; returns the accumulated coefficients Q^T X.
inline DenseMatrix cgs2(const DenseMatrix& q, DenseMatrix& x) {
  DenseMatrix coef = DenseMatrix::Zero(q.cols(), x.cols());
  if (q.cols() == 0) return coef;
  for (int pass = 0; pass < 2; ++pass) {
    const DenseMatrix c = q.transpose() * x;
    x.noalias() -= q * c;
    coef += c;
  }
  return coef;
}

/// Orthonormal basis of the part of X outside range(Q); columns whose
/// remaining size falls below drop_tol times their original norm are dropped.
inline DenseMatrix orthonormal_extension(const DenseMatrix& q, DenseMatrix x, double drop_tol) {
  if (x.cols() == 0) return DenseMatrix(x.rows(), 0);
  const DenseVector norms = x.colwise().norm();
  const double scale = norms.maxCoeff();
  if (scale == 0.0) return DenseMatrix(x.rows(), 0);
  cgs2(q, x);
  Eigen::ColPivHouseholderQR<DenseMatrix> qr(x);
  const Index kmax = std::min(x.rows(), x.cols());
  Index rank = 0;
  while (rank < kmax && std::abs(qr.matrixR()(rank, rank)) > drop_tol * scale) ++rank;
  DenseMatrix basis = qr.householderQ() * DenseMatrix::Identity(x.rows(), rank);
  // One more pass keeps the new columns orthogonal to Q at working precision.
  cgs2(q, basis);
  Eigen::HouseholderQR<DenseMatrix> clean(basis);
  return clean.householderQ() * DenseMatrix::Identity(x.rows(), rank);
}

}  // namespace detail

/// Bases V (extended Krylov space) and W (A^^T range(V)) with the projected
/// quantities for the first m blocks of V. One further block of V and W is kept
/// so that the coupling block tau = W_{m+1}^T D^ V_m is available.
class KrylovState {
 public:
  static constexpr double kDropTol = 1e-12;
  static constexpr double kBreakdownTol = 1e-12;

  explicit KrylovState(const ShiftedOperators& ops) : ops_(&ops) {
    const Index n = ops.order();
    v_.resize(n, 0);
    w_.resize(n, 0);
    e_.resize(n, 0);
    wf1_.resize(0, ops.f1().cols());
    wf2_.resize(0, ops.f2().cols());
    // First block: [A^^{-T} H, D^^{-1} H] = [u, M^{-1} u] with u = A^^{-T} H.
    const DenseMatrix& h = ops.seed();
    append_block(ops.solve_at(h), ops.solve_d(h));
    if (blocks_.empty()) return;
    activate_next();
    advance_lookahead();
    refresh_gram();
  }

  /// Number of blocks of V entering the projected equation.
  Index m() const noexcept { return m_; }
  Index dim() const noexcept { return active_cols_; }
  /// Columns of V and W stored, including the lookahead block.
  Index stored_dim() const noexcept { return v_.cols(); }
  /// True once M range(V_m) is contained in range(V_m): the lookahead is empty.
  bool invariant() const noexcept { return v_.cols() == active_cols_; }

  DenseMatrix v() const { return v_.leftCols(active_cols_); }
  DenseMatrix w() const { return w_.leftCols(active_cols_); }
  const DenseMatrix& v_all() const { return v_; }
  const DenseMatrix& w_all() const { return w_; }
  /// Column count of each block of V (and W).
  const std::vector<Index>& block_sizes() const { return blocks_; }

  /// T_m = W_m^T D^ V_m
  DenseMatrix t() const { return tfull_.topLeftCorner(active_cols_, active_cols_); }
  /// K_m = V_m^T A^ W_m, the transpose of the coefficients of A^^T V_m in W_m.
  DenseMatrix k() const { return rw_.topLeftCorner(active_cols_, active_cols_).transpose(); }
  /// tau = (newest W block)^T D^ V_m
  DenseMatrix tau() const { return tfull_.bottomRows(tfull_.rows() - active_cols_); }
  /// G1 = W_m^T F1, G2 = W_m^T F2
  DenseMatrix g1() const { return wf1_.topRows(active_cols_); }
  DenseMatrix g2() const { return wf2_.topRows(active_cols_); }

  /// Adds one extended Krylov block: M applied to the first half of the
  /// newest block and M^{-1} to the second half.
  void build_spaces_step() {
    if (blocks_.empty() || invariant()) return;
    activate_next();
    advance_lookahead();
    refresh_gram();
  }

  /// E = (I - W W^T) D^ V_m over all stored W, and its Gram matrix E^T E.
  const DenseMatrix& leak() const { return e_; }
  const DenseMatrix& leak_gram() const { return ge_; }

 private:
  void append_block(DenseMatrix first, DenseMatrix second) {
    const DenseMatrix q1 = detail::orthonormal_extension(v_, std::move(first), kDropTol);
    DenseMatrix with_first(v_.rows(), v_.cols() + q1.cols());
    with_first << v_, q1;
    const DenseMatrix q2 = detail::orthonormal_extension(with_first, std::move(second), kDropTol);
    const Index s1 = q1.cols(), s2 = q2.cols();
    if (s1 + s2 == 0) return;
    DenseMatrix grown(v_.rows(), v_.cols() + s1 + s2);
    grown << v_, q1, q2;
    v_ = std::move(grown);
    blocks_.push_back(s1 + s2);
    halves_.push_back(s1);
    extend_w(v_.rightCols(s1 + s2));
  }

  void extend_w(const DenseMatrix& vblock) {
    DenseMatrix z = ops_->apply_at(vblock);
    const double scale = z.norm();
    const DenseMatrix coef = detail::cgs2(w_, z);
    Eigen::HouseholderQR<DenseMatrix> qr(z);
    const Index s = vblock.cols();
    const DenseMatrix r = qr.matrixQR().topRows(s).triangularView<Eigen::Upper>();
    const double rmin = r.diagonal().cwiseAbs().minCoeff();
    if (!(rmin > kBreakdownTol * scale))
      throw BreakdownError("KrylovState: the W basis lost rank (smallest pivot " + std::to_string(rmin / scale) +
                           " relative)");
    const DenseMatrix qz = qr.householderQ() * DenseMatrix::Identity(z.rows(), s);
    const Index old = w_.cols();
    DenseMatrix grown(w_.rows(), old + s);
    grown << w_, qz;
    w_ = std::move(grown);
    DenseMatrix rw = DenseMatrix::Zero(old + s, old + s);
    rw.topLeftCorner(old, old) = rw_;
    rw.topRightCorner(old, s) = coef;
    rw.bottomRightCorner(s, s) = r;
    rw_ = std::move(rw);

    DenseMatrix wf1(old + s, ops_->f1().cols()), wf2(old + s, ops_->f2().cols());
    wf1 << wf1_, qz.transpose() * ops_->f1();
    wf2 << wf2_, qz.transpose() * ops_->f2();
    wf1_ = std::move(wf1);
    wf2_ = std::move(wf2);
    // New rows of W^T D^ V for the columns of V already active; qz^T D^ V = qz^T E.
    const DenseMatrix rows = qz.transpose() * e_;
    DenseMatrix t(old + s, e_.cols());
    t.topRows(old) = tfull_;
    t.bottomRows(s) = rows;
    tfull_ = std::move(t);
    e_.noalias() -= qz * rows;
    ge_.noalias() -= rows.transpose() * rows;
  }

  /// Moves the lookahead block into the active part of V.
  void activate_next() {
    const Index s = blocks_[static_cast<std::size_t>(m_)];
    const DenseMatrix vb = v_.middleCols(active_cols_, s);
    DenseMatrix dvb = ops_->apply_d(vb);
    const DenseMatrix coef = detail::cgs2(w_, dvb);
    DenseMatrix t(w_.cols(), active_cols_ + s);
    t.leftCols(active_cols_) = tfull_;
    t.rightCols(s) = coef;
    tfull_ = std::move(t);
    DenseMatrix e(e_.rows(), active_cols_ + s);
    e.leftCols(active_cols_) = e_;
    e.rightCols(s) = dvb;
    e_ = std::move(e);
    DenseMatrix ge = DenseMatrix::Zero(active_cols_ + s, active_cols_ + s);
    ge.topLeftCorner(active_cols_, active_cols_) = ge_;
    ge_ = std::move(ge);
    active_cols_ += s;
    ++m_;
  }

  /// Recomputes the Gram columns of the newest active block once the lookahead
  /// W has been projected out, avoiding cancellation in the downdate.
  void refresh_gram() {
    const Index s = blocks_[static_cast<std::size_t>(m_ - 1)];
    const DenseMatrix cross = e_.transpose() * e_.rightCols(s);
    ge_.rightCols(s) = cross;
    ge_.bottomRows(s) = cross.transpose();
  }

  /// Builds the block after the newest active one.
  void advance_lookahead() {
    const Index s = blocks_[static_cast<std::size_t>(m_ - 1)];
    const Index s1 = halves_[static_cast<std::size_t>(m_ - 1)];
    const DenseMatrix vb = v_.middleCols(active_cols_ - s, s);
    const Index n = v_.rows();
    const std::size_t before = blocks_.size();
    append_block(s1 > 0 ? ops_->apply_m(vb.leftCols(s1)) : DenseMatrix(n, 0),
                 s > s1 ? ops_->apply_m_inv(vb.rightCols(s - s1)) : DenseMatrix(n, 0));
    // Rounding in the inverse chain can leave M V_m outside range(V) although the
    // new block deflated completely; add those directions explicitly.
    if (blocks_.size() == before) append_block(ops_->apply_m(v()), DenseMatrix(n, 0));
  }

  const ShiftedOperators* ops_;
  DenseMatrix v_, w_, e_, ge_, rw_, tfull_, wf1_, wf2_;
  std::vector<Index> blocks_, halves_;
  Index m_ = 0;
  Index active_cols_ = 0;
};

/// Y_m from T_m Y + Y^T K_m = -G1 G2^T.
inline DenseMatrix solve_projected(const KrylovState& state) {
  const DenseMatrix g1 = state.g1(), g2 = state.g2();
  return TSylvSolver(state.t(), state.k()).solve(-(g1 * g2.transpose())).x;
}

/// ||D^ V Y W^T + W Y^T V^T A^ + F1 F2^T||_F = sqrt(||tau Y||^2 + ||E Y||^2).
inline double residual_norm(const KrylovState& state, const DenseMatrix& y) {
  if (y.size() == 0) return 0.0;
  const double outside = (y.array() * (state.leak_gram() * y).array()).sum();
  return std::sqrt((state.tau() * y).squaredNorm() + std::max(outside, 0.0));
}

enum class InnerStatus { Converged, MaxIterations, Breakdown, SolveFailed };

inline const char* to_string(InnerStatus s) {
  switch (s) {
    case InnerStatus::Converged: return "Converged";
    case InnerStatus::MaxIterations: return "MaxIterations";
    case InnerStatus::Breakdown: return "Breakdown";
    case InnerStatus::SolveFailed: return "SolveFailed";
  }
  return "Unknown";
}

struct InnerReport {
  InnerStatus status = InnerStatus::MaxIterations;
  /// Residual norm after each step m = 1, 2, ...
  std::vector<double> residual_history;
  Index iterations = 0;
  /// Largest dim(V_m) + dim(W_m) entering a projected solve.
  Index memory_dim = 0;
  std::string message;

  bool converged() const noexcept { return status == InnerStatus::Converged; }
};

struct KrylovSolution {
  LowRankPair x;
  InnerReport report;
};

/// Factors of V Y W^T after dropping singular values of Y below trunc_tol * sigma_max.
inline LowRankPair lift_solution(const DenseMatrix& v, const DenseMatrix& y, const DenseMatrix& w,
                                 double trunc_tol) {
  if (y.size() == 0) return LowRankPair::zero(v.rows());
  Eigen::JacobiSVD<DenseMatrix> svd(y, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const DenseVector& s = svd.singularValues();
  if (s(0) == 0.0) return LowRankPair::zero(v.rows());
  Index keep = 0;
  while (keep < s.size() && s(keep) > trunc_tol * s(0)) ++keep;
  const DenseVector root = s.head(keep).cwiseSqrt();
  return {v * (svd.matrixU().leftCols(keep) * root.asDiagonal()),
          w * (svd.matrixV().leftCols(keep) * root.asDiagonal())};
}

/// Approximate solution X~ = P~1 P~2^T of the Newton-step equation at X_k with
/// residual norm at most tol_abs, or the last iterate with a failure status.
inline KrylovSolution solve_tsylv_krylov(const LowRankTRiccatiProblem& prob, const LowRankPair& xk, double tol_abs,
                                         int m_max = 50, double trunc_tol = 1e-12) {
  if (!(tol_abs > 0.0)) throw Error("solve_tsylv_krylov: tolerance must be positive");
  if (m_max < 1) throw Error("solve_tsylv_krylov: m_max must be positive");
  KrylovSolution out;
  InnerReport& rep = out.report;
  out.x = LowRankPair::zero(prob.order());
  try {
    const ShiftedOperators ops(prob, xk);
    KrylovState state(ops);
    if (state.dim() == 0) {  // zero right-hand side
      rep.status = InnerStatus::Converged;
      rep.residual_history.push_back(0.0);
      return out;
    }
    DenseMatrix y;
    for (int m = 1; m <= m_max; ++m) {
      if (m > 1) state.build_spaces_step();
      y = solve_projected(state);
      const double res = residual_norm(state, y);
      rep.residual_history.push_back(res);
      rep.iterations = m;
      rep.memory_dim = std::max(rep.memory_dim, 2 * state.dim());
      if (!std::isfinite(res)) {
        rep.status = InnerStatus::SolveFailed;
        rep.message = "non-finite residual";
        break;
      }
      if (res <= tol_abs) {
        rep.status = InnerStatus::Converged;
        break;
      }
      if (state.invariant()) {
        rep.status = InnerStatus::SolveFailed;
        rep.message = "invariant subspace reached without meeting the tolerance";
        break;
      }
    }
    out.x = lift_solution(state.v(), y, state.w(), trunc_tol);
  } catch (const BreakdownError& e) {
    rep.status = InnerStatus::Breakdown;
    rep.message = e.what();
  } catch (const Error& e) {
    rep.status = InnerStatus::SolveFailed;
    rep.message = e.what();
  }
  return out;
}

}  // namespace tric
