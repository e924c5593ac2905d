#pragma once

// Inexact Newton-Kleinman iteration with line search for the large-scale
// T-Riccati equation with B = B1 B2^T and C = C1^T C2, on factored iterates.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "tric/lowrank_core.hpp"
#include "tric/riccati_dense.hpp"
#include "tric/tsylv_krylov.hpp"
#include "tric/types.hpp"

namespace tric {

/// How the step length along S_k is chosen.
enum class StepRule {
  Unit,   ///< lambda = 1
  Theta,  ///< argmin of the residual polynomial over (0, theta_k]
  Exact,  ///< argmin over (0, 2]; meant for (nearly) exact inner solves
};

inline const char* to_string(StepRule r) {
  switch (r) {
    case StepRule::Unit: return "none";
    case StepRule::Theta: return "inexact";
    case StepRule::Exact: return "exact";
  }
  return "unknown";
}

/// eta_k = 1 / (1 + k^3)
inline double default_eta(Index k) {
  const double kd = static_cast<double>(k);
  return 1.0 / (1.0 + kd * kd * kd);
}

struct InexactNewtonConfig {
  /// Stop once ||R(X_k)||_F < eps ||C||_F.
  double eps = 1e-6;
  double eta_bar = 0.5;
  /// Sufficient decrease constant; alpha + eta_bar < 1.
  double alpha = 1e-4;
  /// Forcing terms before the eta_bar cap.
  std::function<double(Index)> eta_schedule = default_eta;
  int max_outer = 50;
  int m_max = 50;
  double trunc_tol = 1e-12;
  /// Inner tolerances below inner_floor ||X_k^T B X_k + C||_F are raised to it;
  /// smaller requests are beneath the rounding level of the inner residual.
  double inner_floor = 1e-13;
  /// Largest iterate rank allowed; 0 means 4 (p + q) m_max.
  Index rank_cap = 0;
  StepRule step_rule = StepRule::Theta;
  /// Halvings of a step that misses the decrease condition before giving up.
  int max_halvings = 5;
  /// Require B1, B2, C1 >= 0 and C2 <= 0 (so B >= 0, C <= 0) before solving.
  bool force_sign_consistency = false;
  /// Entries sampled by the nonnegativity monitor per iterate (dense check for n <= 200).
  Index monitor_samples = 1000;
  /// Called with (k, X_k) for every accepted iterate, including X_0 = 0.
  std::function<void(Index, const LowRankPair&)> observer;

  void validate() const {
    if (!(eps > 0.0)) throw Error("InexactNewtonConfig: eps must be positive");
    if (!(eta_bar > 0.0 && eta_bar < 1.0)) throw Error("InexactNewtonConfig: eta_bar must lie in (0, 1)");
    if (!(alpha > 0.0 && alpha < 1.0 - eta_bar)) throw Error("InexactNewtonConfig: alpha must lie in (0, 1 - eta_bar)");
    if (!eta_schedule) throw Error("InexactNewtonConfig: eta_schedule is empty");
    if (max_outer < 1 || m_max < 1) throw Error("InexactNewtonConfig: iteration limits must be positive");
    if (inner_floor < 0.0) throw Error("InexactNewtonConfig: inner_floor must be nonnegative");
    if (trunc_tol < 0.0) throw Error("InexactNewtonConfig: trunc_tol must be nonnegative");
    if (rank_cap < 0 || max_halvings < 0 || monitor_samples < 0)
      throw Error("InexactNewtonConfig: counts must be nonnegative");
  }

  /// eta_k from the schedule, capped at eta_bar.
  double eta(Index k) const {
    const double e = eta_schedule(k);
    if (!(e > 0.0)) throw Error("InexactNewtonConfig: eta_schedule returned a nonpositive value");
    return std::min(e, eta_bar);
  }
};

/// theta_k = min{1, (1 - alpha - eta_bar) sqrt(alpha_k / delta_k)}, 1 when delta_k or alpha_k is 0.
inline double compute_theta(double alpha_k, double delta_k, const InexactNewtonConfig& cfg) {
  if (alpha_k < 0.0 || delta_k < 0.0) throw Error("compute_theta: coefficients must be nonnegative");
  if (delta_k == 0.0 || alpha_k == 0.0) return 1.0;
  return std::min(1.0, (1.0 - cfg.alpha - cfg.eta_bar) * std::sqrt(alpha_k / delta_k));
}

/// res_new <= (1 - lambda alpha) res_old, with relative slack 1e-10.
inline bool decrease_condition_check(double res_old, double res_new, double lambda, double alpha) {
  return res_new <= (1.0 - lambda * alpha) * res_old * (1.0 + 1e-10);
}

/// True when no entry of P1 P2^T checked is below -1e-8: every entry when
/// n <= 200, otherwise `sample` entries drawn with the given seed.
inline bool nonnegativity_monitor(const LowRankPair& x, Index sample, std::uint64_t seed = 0) {
  constexpr double kFloor = -1e-8;
  if (x.rank() == 0) return true;
  if (x.rows() <= 200 && x.cols() <= 200) return x.dense().minCoeff() >= kFloor;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Index> row(0, x.rows() - 1), col(0, x.cols() - 1);
  for (Index s = 0; s < sample; ++s) {
    const Index i = row(rng), j = col(rng);
    if (x.p1.row(i).dot(x.p2.row(j)) < kFloor) return false;
  }
  return true;
}

/// Coefficients of ||(1 - l) R + l L - l^2 Q||_F^2 for factored R, L, Q. All
/// three are expressed in common orthonormal bases first, so the inner products
/// keep relative accuracy when the matrices are small compared with their factors.
inline LineSearchPoly lr_line_search_poly(const LowRankPair& r, const LowRankPair& l, const LowRankPair& q) {
  detail::require_same_outer(r, l, "lr_line_search_poly");
  detail::require_same_outer(r, q, "lr_line_search_poly");
  const Index a = r.rank(), b = l.rank(), c = q.rank();
  LineSearchPoly p;
  if (a + b + c == 0) return p;
  DenseMatrix left(r.rows(), a + b + c), right(r.cols(), a + b + c);
  left << r.p1, l.p1, q.p1;
  right << r.p2, l.p2, q.p2;
  const DenseMatrix rl = detail::qr_r(left), rr = detail::qr_r(right);
  const DenseMatrix cr = rl.leftCols(a) * rr.leftCols(a).transpose();
  const DenseMatrix cl = rl.middleCols(a, b) * rr.middleCols(a, b).transpose();
  const DenseMatrix cq = rl.rightCols(c) * rr.rightCols(c).transpose();
  const auto dot = [](const DenseMatrix& x, const DenseMatrix& y) { return (x.array() * y.array()).sum(); };
  p.alpha = cr.squaredNorm();
  p.beta = cl.squaredNorm();
  p.gamma = dot(cr, cl);
  p.delta = cq.squaredNorm();
  p.epsilon = dot(cr, cq);
  p.xi = dot(cl, cq);
  return p;
}

struct LowRankSolution {
  LowRankPair x;
  SolveReport report;
};

namespace detail {

inline bool all_nonnegative(const DenseMatrix& m) { return m.size() == 0 || m.minCoeff() >= 0.0; }

inline void require_sign_consistency(const LowRankTRiccatiProblem& prob) {
  if (!all_nonnegative(prob.b1()) || !all_nonnegative(prob.b2()) || !all_nonnegative(prob.c1()) ||
      !all_nonnegative(-prob.c2()))
    throw Error("solve_inexact_newton: factors are not sign consistent (need B1, B2, C1 >= 0 and C2 <= 0)");
}

/// Dense solvability audit for small problems; a failed audit becomes a warning.
inline void audit_assumption1(const LowRankTRiccatiProblem& prob, SolveReport& rep) {
  if (prob.order() > 200) return;
  TRiccatiProblem dense = prob.to_dense();
  check_assumption1(dense);
  if (dense.assumption1_checked && !dense.assumption1_holds)
    rep.warnings.push_back("solvability conditions do not hold: " + dense.assumption1_note);
}

}  // namespace detail

/// Inexact Newton-Kleinman iteration from X_0 = 0. Each step solves the
/// Newton equation with the extended Krylov method to tolerance
/// eta_k ||R(X_k)||_F, picks the step length by the configured rule and
/// recompresses the new iterate.
inline LowRankSolution solve_inexact_newton(const LowRankTRiccatiProblem& prob, const InexactNewtonConfig& cfg = {}) {
  cfg.validate();
  if (cfg.force_sign_consistency) detail::require_sign_consistency(prob);
  detail::Stopwatch clock;
  LowRankSolution out;
  SolveReport& rep = out.report;
  detail::audit_assumption1(prob, rep);
  const Index n = prob.order();
  const Index rank_cap = cfg.rank_cap > 0 ? cfg.rank_cap : 4 * (prob.p() + prob.q()) * cfg.m_max;
  const double c_norm = lr_frobenius_norm(prob.c_pair());

  out.x = LowRankPair::zero(n);
  if (cfg.observer) cfg.observer(0, out.x);
  LowRankPair r_k = prob.c_pair();
  double res = c_norm;
  rep.iterations.push_back(detail::record(0, res, c_norm, 1.0, 0));
  bool monitor_warned = false;

  for (Index k = 0;; ++k) {
    if (res < cfg.eps * c_norm || res == 0.0) {
      detail::finish(rep, SolveStatus::Converged, clock);
      return out;
    }
    if (k >= cfg.max_outer) {
      rep.message = "outer iteration limit reached";
      detail::finish(rep, SolveStatus::MaxIterations, clock);
      return out;
    }
    const double eta = cfg.eta(k);
    const double floor = cfg.inner_floor * lr_frobenius_norm(lr_add(lr_quadratic(out.x, prob.b1(), prob.b2()), prob.c_pair()));
    const double inner_tol = std::max(eta * res, floor);
    const KrylovSolution inner = solve_tsylv_krylov(prob, out.x, inner_tol, cfg.m_max, cfg.trunc_tol);
    rep.memory_dim = std::max(rep.memory_dim, inner.report.memory_dim);
    if (!inner.report.converged()) {
      rep.failed_inner_residuals = inner.report.residual_history;
      rep.failed_inner_tolerance = inner_tol;
      rep.message = "inner solve " + std::to_string(k + 1) + " failed (" + to_string(inner.report.status) + ")";
      if (!inner.report.message.empty()) rep.message += ": " + inner.report.message;
      detail::finish(rep, SolveStatus::InnerSolveFailed, clock);
      return out;
    }

    const StepResidual sl = lr_step_and_Lresidual(prob, out.x, inner.x);
    double step = 1.0, theta = 0.0;
    if (cfg.step_rule != StepRule::Unit) {
      const LineSearchPoly poly = lr_line_search_poly(r_k, sl.residual, lr_quadratic(sl.step, prob.b1(), prob.b2()));
      theta = cfg.step_rule == StepRule::Theta ? compute_theta(poly.alpha, poly.delta, cfg) : 2.0;
      step = minimize_quartic(poly, theta);
    }

    // X_{k+1} = (1 - l) X_k + l X~_{k+1}, halving l while the decrease condition fails.
    LowRankPair next;
    LowRankPair r_next;
    double res_next = 0.0;
    for (int halving = 0;; ++halving) {
      next = lr_truncate(lr_add(out.x, inner.x, 1.0 - step, step), cfg.trunc_tol);
      r_next = lr_riccati_residual(prob, next);
      res_next = lr_frobenius_norm(r_next);
      if (cfg.step_rule != StepRule::Theta || decrease_condition_check(res, res_next, step, cfg.alpha)) break;
      if (halving == cfg.max_halvings) {
        rep.message = "step " + std::to_string(k + 1) + " violates the decrease condition after " +
                      std::to_string(cfg.max_halvings) + " halvings";
        detail::finish(rep, SolveStatus::Diverged, clock);
        return out;
      }
      step *= 0.5;
    }
    if (!std::isfinite(res_next)) {
      rep.message = "non-finite residual";
      detail::finish(rep, SolveStatus::Diverged, clock);
      return out;
    }
    if (next.rank() > rank_cap) {
      rep.message = "iterate rank " + std::to_string(next.rank()) + " exceeds the cap " + std::to_string(rank_cap);
      detail::finish(rep, SolveStatus::Diverged, clock);
      return out;
    }

    out.x = std::move(next);
    r_k = std::move(r_next);
    res = res_next;
    IterationRecord rec = detail::record(k + 1, res, c_norm, step, out.x.rank());
    rec.inner_iterations = inner.report.iterations;
    rec.step_bound = theta;
    rec.inner_residuals = inner.report.residual_history;
    rep.iterations.push_back(std::move(rec));
    if (cfg.observer) cfg.observer(k + 1, out.x);
    if (!monitor_warned && !nonnegativity_monitor(out.x, cfg.monitor_samples, static_cast<std::uint64_t>(k))) {
      rep.warnings.push_back("iterate " + std::to_string(k + 1) + " has negative entries below -1e-8");
      monitor_warned = true;
    }
  }
}

/// Mean inner iteration count over the outer steps of a report.
inline double average_inner_iterations(const SolveReport& rep) {
  if (rep.iterations.size() < 2) return 0.0;
  double total = 0.0;
  for (std::size_t i = 1; i < rep.iterations.size(); ++i) total += double(rep.iterations[i].inner_iterations);
  return total / double(rep.iterations.size() - 1);
}

}  // namespace tric
