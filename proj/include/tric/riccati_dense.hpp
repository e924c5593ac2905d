#pragma once

// Dense solvers for the T-Riccati equation  D X + X^T A - X^T B X + C = 0:
// fixed-point iteration, Newton-Kleinman and Newton with exact line search.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "tric/dense_core.hpp"
#include "tric/tsylv_dense.hpp"
#include "tric/types.hpp"

namespace tric {

struct TRiccatiProblem {
  DenseMatrix a, b, c, d;
  bool assumption1_checked = false;
  bool assumption1_holds = false;
  /// Run the solvers even when the sign/M-matrix conditions fail or were not checked.
  bool allow_unverified = false;
  std::string assumption1_note;

  Index order() const noexcept { return d.rows(); }
};

enum class SolveStatus { Converged, MaxIterations, InnerSolveFailed, Diverged };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Converged: return "Converged";
    case SolveStatus::MaxIterations: return "MaxIterations";
    case SolveStatus::InnerSolveFailed: return "InnerSolveFailed";
    case SolveStatus::Diverged: return "Diverged";
  }
  return "Unknown";
}

struct IterationRecord {
  Index k = 0;
  double residual_norm = 0.0;
  double relative_residual = 0.0;
  /// Step that produced this iterate; 1 for the initial guess.
  double step_size = 1.0;
  Index inner_iterations = 0;
  Index iterate_rank = 0;
  /// Upper end of the admissible step interval; 0 when no line search ran.
  double step_bound = 0.0;
  /// Inner residual norms of the solve that produced this iterate.
  std::vector<double> inner_residuals;
};

struct SolveReport {
  std::vector<IterationRecord> iterations;
  SolveStatus status = SolveStatus::MaxIterations;
  double wall_time = 0.0;
  double final_relative_residual = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::string> warnings;
  std::string message;
  /// Largest dim(V) + dim(W) of any inner Krylov solve; 0 for dense solvers.
  Index memory_dim = 0;
  /// Inner residual history of a failed inner solve.
  std::vector<double> failed_inner_residuals;
  /// Tolerance that the failed inner solve had to meet.
  double failed_inner_tolerance = 0.0;

  /// Number of outer steps taken (the first record is the initial guess).
  Index iteration_count() const noexcept {
    return iterations.empty() ? 0 : static_cast<Index>(iterations.size()) - 1;
  }
};

struct DenseSolution {
  DenseMatrix x;
  SolveReport report;
};

enum class LineSearch { Off, Exact };

struct DenseSolveOptions {
  double tol = 1e-12;
  /// 0 selects the solver default (50 for Newton, 10000 for the fixed point).
  int max_iter = 0;
  LineSearch line_search = LineSearch::Off;
  /// Called with (k, X_k) for every iterate, including X_0.
  std::function<void(Index, const DenseMatrix&)> observer;
};

/// Coefficients of p(l) = ||R(X_k + l S_k)||_F^2.
struct LineSearchPoly {
  double alpha = 0.0, beta = 0.0, gamma = 0.0, delta = 0.0, epsilon = 0.0, xi = 0.0;

  /// Power-basis coefficients c0..c4 of p.
  std::array<double, 5> coefficients() const {
    return {alpha, -2.0 * alpha + 2.0 * gamma, alpha + beta - 2.0 * gamma - 2.0 * epsilon,
            2.0 * epsilon - 2.0 * xi, delta};
  }

  double operator()(double l) const {
    const auto c = coefficients();
    return (((c[4] * l + c[3]) * l + c[2]) * l + c[1]) * l + c[0];
  }

  double derivative(double l) const {
    const auto c = coefficients();
    return ((4.0 * c[4] * l + 3.0 * c[3]) * l + 2.0 * c[2]) * l + c[1];
  }
};

inline DenseMatrix residual(const TRiccatiProblem& prob, const DenseMatrix& x) {
  detail::require_same_shape(prob.d, x, "residual");
  DenseMatrix r = prob.c;
  r.noalias() += prob.d * x;
  r.noalias() += x.transpose() * prob.a;
  const DenseMatrix bx = prob.b * x;
  r.noalias() -= x.transpose() * bx;
  return r;
}

/// Fills the solvability flags: B >= 0, C <= 0 and the T-Sylvester operator of
/// (D, A) a nonsingular M-matrix. Orders above 200 are left unchecked.
inline void check_assumption1(TRiccatiProblem& prob) {
  const Index n = prob.order();
  detail::require_square(prob.d, "check_assumption1");
  detail::require_same_shape(prob.d, prob.a, "check_assumption1");
  detail::require_same_shape(prob.d, prob.b, "check_assumption1");
  detail::require_same_shape(prob.d, prob.c, "check_assumption1");
  prob.assumption1_note.clear();
  if (n > 200) {
    prob.assumption1_checked = false;
    prob.assumption1_holds = false;
    prob.assumption1_note = "solvability conditions not verified for n > 200";
    return;
  }
  prob.assumption1_checked = true;
  if (!is_nonnegative(prob.b)) {
    prob.assumption1_holds = false;
    prob.assumption1_note = "B has negative entries";
    return;
  }
  if (!is_nonnegative(-prob.c)) {
    prob.assumption1_holds = false;
    prob.assumption1_note = "C has positive entries";
    return;
  }
  const MatrixClass cls =
      n <= 30 ? classify_m_matrix(tsylv_kron_matrix(prob.d, prob.a)) : classify_tsylv_operator(prob.d, prob.a);
  prob.assumption1_holds = cls.is_nonsingular_m_matrix;
  if (!cls.is_z_matrix)
    prob.assumption1_note = "T-Sylvester operator is not a Z-matrix";
  else if (!cls.is_nonsingular_m_matrix)
    prob.assumption1_note = "T-Sylvester operator is not a nonsingular M-matrix";
}

namespace detail {

inline void validate_problem(const TRiccatiProblem& prob, const char* where) {
  require_square(prob.d, where);
  require_same_shape(prob.d, prob.a, where);
  require_same_shape(prob.d, prob.b, where);
  require_same_shape(prob.d, prob.c, where);
}

/// Checks the solvability conditions when needed; throws unless the caller allowed unverified problems.
inline void require_assumption1(const TRiccatiProblem& prob, SolveReport& report, const char* where) {
  TRiccatiProblem checked = prob;
  if (!checked.assumption1_checked) check_assumption1(checked);
  if (checked.assumption1_checked && checked.assumption1_holds) return;
  const std::string why =
      checked.assumption1_note.empty() ? std::string("solvability conditions do not hold") : checked.assumption1_note;
  if (!prob.allow_unverified) throw Error(std::string(where) + ": " + why + " (set allow_unverified to run anyway)");
  report.warnings.push_back(why);
}

inline double relative_to(double res, double ref) { return ref > 0.0 ? res / ref : res; }

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

inline IterationRecord record(Index k, double res, double c_norm, double step, Index rank) {
  IterationRecord r;
  r.k = k;
  r.residual_norm = res;
  r.relative_residual = relative_to(res, c_norm);
  r.step_size = step;
  r.iterate_rank = rank;
  return r;
}

inline void finish(SolveReport& report, SolveStatus status, const Stopwatch& clock) {
  report.status = status;
  report.wall_time = clock.seconds();
  if (!report.iterations.empty()) report.final_relative_residual = report.iterations.back().relative_residual;
}

}  // namespace detail

/// X_{k+1} solves D X + X^T A = X_k^T B X_k - C, starting from X_0 = 0.
inline DenseSolution solve_fixed_point(const TRiccatiProblem& prob, const DenseSolveOptions& opts) {
  detail::validate_problem(prob, "solve_fixed_point");
  detail::Stopwatch clock;
  DenseSolution out;
  SolveReport& rep = out.report;
  detail::require_assumption1(prob, rep, "solve_fixed_point");
  const Index n = prob.order();
  const int max_iter = opts.max_iter > 0 ? opts.max_iter : 10000;
  const double c_norm = prob.c.norm();

  out.x = DenseMatrix::Zero(n, n);
  if (opts.observer) opts.observer(0, out.x);
  rep.iterations.push_back(detail::record(0, c_norm, c_norm, 1.0, n));
  if (c_norm == 0.0) {
    detail::finish(rep, SolveStatus::Converged, clock);
    return out;
  }

  std::optional<TSylvSolver> solver;
  try {
    solver.emplace(prob.d, prob.a);
  } catch (const Error& e) {
    rep.message = e.what();
    detail::finish(rep, SolveStatus::InnerSolveFailed, clock);
    return out;
  }

  for (int k = 1; k <= max_iter; ++k) {
    const DenseMatrix bx = prob.b * out.x;
    DenseMatrix rhs = out.x.transpose() * bx - prob.c;
    out.x = solver->solve(rhs).x;
    if (opts.observer) opts.observer(k, out.x);
    const double res = residual(prob, out.x).norm();
    rep.iterations.push_back(detail::record(k, res, c_norm, 1.0, n));
    if (!std::isfinite(res)) {
      detail::finish(rep, SolveStatus::Diverged, clock);
      return out;
    }
    if (res <= opts.tol * c_norm) {
      detail::finish(rep, SolveStatus::Converged, clock);
      return out;
    }
  }
  detail::finish(rep, SolveStatus::MaxIterations, clock);
  return out;
}

inline DenseSolution solve_fixed_point(const TRiccatiProblem& prob, double tol = 1e-12, int max_iter = 10000) {
  DenseSolveOptions opts;
  opts.tol = tol;
  opts.max_iter = max_iter;
  return solve_fixed_point(prob, opts);
}

/// Coefficients of ||R_k (1-l) + l L - l^2 Q||_F^2 with R_k = R(X_k), L the
/// Newton-step residual and Q = S_k^T B S_k.
inline LineSearchPoly line_search_poly(const DenseMatrix& r_k, const DenseMatrix& l_next, const DenseMatrix& sbs) {
  detail::require_same_shape(r_k, l_next, "line_search_poly");
  detail::require_same_shape(r_k, sbs, "line_search_poly");
  LineSearchPoly p;
  p.alpha = r_k.squaredNorm();
  p.beta = l_next.squaredNorm();
  p.gamma = (r_k.array() * l_next.array()).sum();
  p.delta = sbs.squaredNorm();
  p.epsilon = (r_k.array() * sbs.array()).sum();
  p.xi = (l_next.array() * sbs.array()).sum();
  return p;
}

namespace detail {

/// Real roots of c3 x^3 + c2 x^2 + c1 x + c0, degrading to lower degree when
/// the leading coefficients vanish relative to the others.
inline std::vector<double> real_roots_cubic(double c3, double c2, double c1, double c0) {
  std::vector<double> roots;
  const double scale = std::max({std::abs(c3), std::abs(c2), std::abs(c1), std::abs(c0)});
  if (scale == 0.0) return roots;
  const double eps = 1e-14 * scale;
  if (std::abs(c3) > eps) {
    const double b = c2 / c3, c = c1 / c3, d = c0 / c3;
    const double p = c - b * b / 3.0;
    const double q = 2.0 * b * b * b / 27.0 - b * c / 3.0 + d;
    const double disc = q * q / 4.0 + p * p * p / 27.0;
    const double shift = -b / 3.0;
    if (disc > 0.0) {
      const double s = std::sqrt(disc);
      roots.push_back(std::cbrt(-q / 2.0 + s) + std::cbrt(-q / 2.0 - s) + shift);
    } else if (p == 0.0) {
      roots.push_back(shift);
    } else {
      const double r = 2.0 * std::sqrt(-p / 3.0);
      const double arg = std::clamp(3.0 * q / (p * r), -1.0, 1.0);
      const double phi = std::acos(arg) / 3.0;
      for (int k = 0; k < 3; ++k) roots.push_back(r * std::cos(phi - 2.0 * std::numbers::pi * k / 3.0) + shift);
    }
  } else if (std::abs(c2) > eps) {
    const double disc = c1 * c1 - 4.0 * c2 * c0;
    if (disc >= 0.0) {
      const double s = std::sqrt(disc);
      const double t = -0.5 * (c1 + std::copysign(s, c1));
      if (t != 0.0) roots.push_back(c0 / t);
      roots.push_back(t / c2);
    }
  } else if (std::abs(c1) > eps) {
    roots.push_back(-c0 / c1);
  }
  return roots;
}

}  // namespace detail

/// Minimizer of p over (0, interval_end]: real roots of p' in closed form,
/// polished by Newton steps, compared with the endpoint. Ties go to the
/// smaller step; a minimizer within 1e-8 of 1 is returned as exactly 1.
inline double minimize_quartic(const LineSearchPoly& poly, double interval_end) {
  if (!(interval_end > 0.0)) throw Error("minimize_quartic: interval_end must be positive");
  const auto c = poly.coefficients();
  std::vector<double> candidates = detail::real_roots_cubic(4.0 * c[4], 3.0 * c[3], 2.0 * c[2], c[1]);
  for (double& r : candidates) {
    for (int it = 0; it < 3; ++it) {
      const double curv = (12.0 * c[4] * r + 6.0 * c[3]) * r + 2.0 * c[2];
      if (curv == 0.0) break;
      const double next = r - poly.derivative(r) / curv;
      if (!std::isfinite(next)) break;
      r = next;
    }
  }
  candidates.push_back(interval_end);

  double best = interval_end;
  double best_val = poly(interval_end);
  const double scale = std::max({std::abs(c[0]), std::abs(c[4]), 1e-300});
  for (double r : candidates) {
    if (!(r > 0.0) || r > interval_end) continue;
    const double v = poly(r);
    const double tie = 1e-14 * scale;
    if (v < best_val - tie || (std::abs(v - best_val) <= tie && r < best)) {
      best = r;
      best_val = v;
    }
  }
  if (std::abs(best - 1.0) < 1e-8 && interval_end >= 1.0) best = 1.0;
  return best;
}

/// Newton-Kleinman iteration from X_0 = 0; each step solves
/// (D - X_k^T B) Y + Y^T (A - B X_k) = -X_k^T B X_k - C.
/// With exact line search, X_{k+1} = X_k + l (Y - X_k) with l minimizing
/// the residual norm over (0, 2].
inline DenseSolution solve_newton(const TRiccatiProblem& prob, const DenseSolveOptions& opts) {
  detail::validate_problem(prob, "solve_newton");
  detail::Stopwatch clock;
  DenseSolution out;
  SolveReport& rep = out.report;
  detail::require_assumption1(prob, rep, "solve_newton");
  const Index n = prob.order();
  const int max_iter = opts.max_iter > 0 ? opts.max_iter : 50;
  const double c_norm = prob.c.norm();

  out.x = DenseMatrix::Zero(n, n);
  if (opts.observer) opts.observer(0, out.x);
  DenseMatrix r_k = prob.c;
  rep.iterations.push_back(detail::record(0, c_norm, c_norm, 1.0, n));
  if (c_norm == 0.0) {
    detail::finish(rep, SolveStatus::Converged, clock);
    return out;
  }

  for (int k = 1; k <= max_iter; ++k) {
    const DenseMatrix& x = out.x;
    const DenseMatrix xtb = x.transpose() * prob.b;
    const DenseMatrix bx = prob.b * x;
    const DenseMatrix ds = prob.d - xtb;
    const DenseMatrix as = prob.a - bx;
    const DenseMatrix rhs = -(xtb * x) - prob.c;
    DenseMatrix next;
    try {
      next = TSylvSolver(ds, as).solve(rhs).x;
    } catch (const Error& e) {
      rep.message = e.what();
      detail::finish(rep, SolveStatus::InnerSolveFailed, clock);
      return out;
    }

    double step = 1.0;
    if (opts.line_search == LineSearch::Exact) {
      const DenseMatrix s = next - x;
      const DenseMatrix l_next = tsylv_apply(ds, as, next) - rhs;
      const DenseMatrix sbs = s.transpose() * prob.b * s;
      step = minimize_quartic(line_search_poly(r_k, l_next, sbs), 2.0);
      if (step != 1.0) next = x + step * s;
    }
    out.x = std::move(next);
    if (opts.observer) opts.observer(k, out.x);
    r_k = residual(prob, out.x);
    const double res = r_k.norm();
    rep.iterations.push_back(detail::record(k, res, c_norm, step, n));
    if (!std::isfinite(res)) {
      detail::finish(rep, SolveStatus::Diverged, clock);
      return out;
    }
    if (res <= opts.tol * c_norm) {
      detail::finish(rep, SolveStatus::Converged, clock);
      return out;
    }
  }
  detail::finish(rep, SolveStatus::MaxIterations, clock);
  return out;
}

inline DenseSolution solve_newton(const TRiccatiProblem& prob, double tol = 1e-12, int max_iter = 50,
                                  LineSearch line_search = LineSearch::Off) {
  DenseSolveOptions opts;
  opts.tol = tol;
  opts.max_iter = max_iter;
  opts.line_search = line_search;
  return solve_newton(prob, opts);
}

/// True when X >= 0 and X <= Y elementwise, Y being the fixed-point limit
/// computed with at most `trials` iterations; tolerance 1e-8 relative to max|Y|.
inline bool verify_minimality(const TRiccatiProblem& prob, const DenseMatrix& x, int trials = 10000) {
  detail::validate_problem(prob, "verify_minimality");
  detail::require_same_shape(prob.d, x, "verify_minimality");
  TRiccatiProblem p = prob;
  p.allow_unverified = true;
  DenseSolution fp;
  try {
    fp = solve_fixed_point(p, 1e-13, std::max(trials, 1));
  } catch (const Error&) {
    return false;
  }
  if (fp.report.status == SolveStatus::InnerSolveFailed || fp.report.status == SolveStatus::Diverged) return false;
  const double tol = 1e-8 * std::max(1.0, fp.x.cwiseAbs().maxCoeff());
  return is_nonnegative(x, tol) && elementwise_leq(x, fp.x, tol);
}

}  // namespace tric
