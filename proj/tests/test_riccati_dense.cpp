#include <gtest/gtest.h>

#include <cmath>

#include "support/instances.hpp"
#include "tric/riccati_dense.hpp"

using namespace tric;
using tric::fixtures::rel_diff;
using tric::fixtures::Rng;
using tric::fixtures::uniform;

namespace {

const double kXmin = (3.0 - std::sqrt(5.0)) / 2.0;

TRiccatiProblem scalar_problem() {
  TRiccatiProblem p;
  p.d = DenseMatrix::Constant(1, 1, 2.0);
  p.a = DenseMatrix::Constant(1, 1, 1.0);
  p.b = DenseMatrix::Constant(1, 1, 1.0);
  p.c = DenseMatrix::Constant(1, 1, -1.0);
  return p;
}

TRiccatiProblem random_problem(Index n, Rng& rng, double strength = 0.5) {
  auto inst = fixtures::assumption1_instance(n, rng, strength);
  TRiccatiProblem p;
  p.a = inst.a;
  p.b = inst.b;
  p.c = inst.c;
  p.d = inst.d;
  return p;
}

DenseMatrix scalar(double v) { return DenseMatrix::Constant(1, 1, v); }

}  // namespace

TEST(Residual, Examples) {
  const auto p = scalar_problem();
  EXPECT_EQ(residual(p, scalar(0.0)), p.c);
  EXPECT_NEAR(residual(p, scalar(kXmin))(0, 0), 0.0, 1e-14);
  EXPECT_NEAR(residual(p, scalar(1.0 / 3.0))(0, 0), -1.0 / 9.0, 1e-15);
  EXPECT_THROW(residual(p, DenseMatrix::Zero(2, 2)), ShapeError);
}

TEST(Residual, MatchesEntrywiseLoops) {
  Rng rng(30);
  for (Index n = 1; n <= 7; ++n) {
    auto inst = fixtures::assumption1_instance(n, rng);
    TRiccatiProblem p{inst.a, inst.b, inst.c, inst.d};
    const DenseMatrix x = uniform(n, n, rng, -1, 1);
    EXPECT_LE(rel_diff(residual(p, x), fixtures::riccati_residual_loops(inst, x)), 1e-13);
  }
}

TEST(CheckAssumption1, Flags) {
  auto p = scalar_problem();
  check_assumption1(p);
  EXPECT_TRUE(p.assumption1_checked);
  EXPECT_TRUE(p.assumption1_holds);

  Rng rng(31);
  auto q = random_problem(5, rng);
  check_assumption1(q);
  EXPECT_TRUE(q.assumption1_holds);
  q.c(0, 0) = 1.0;
  check_assumption1(q);
  EXPECT_FALSE(q.assumption1_holds);

  auto r = random_problem(5, rng);
  r.a(1, 2) = 0.3;  // positive entry of A breaks the Z-sign pattern
  check_assumption1(r);
  EXPECT_FALSE(r.assumption1_holds);
  EXPECT_THROW(solve_newton(r), Error);
  r.allow_unverified = true;
  auto sol = solve_newton(r);
  EXPECT_FALSE(sol.report.warnings.empty());
}

TEST(FixedPoint, ScalarExamples) {
  const auto p = scalar_problem();
  auto one = solve_fixed_point(p, 1e-12, 1);
  EXPECT_NEAR(one.x(0, 0), 1.0 / 3.0, 1e-15);
  EXPECT_EQ(one.report.status, SolveStatus::MaxIterations);
  auto full = solve_fixed_point(p);
  EXPECT_EQ(full.report.status, SolveStatus::Converged);
  EXPECT_NEAR(full.x(0, 0), kXmin, 1e-12);
  EXPECT_LE(full.report.final_relative_residual, 1e-12);
}

TEST(FixedPoint, ZeroConstantTerm) {
  Rng rng(32);
  auto p = random_problem(4, rng);
  p.c.setZero();
  auto sol = solve_fixed_point(p);
  EXPECT_EQ(sol.report.status, SolveStatus::Converged);
  EXPECT_LE(sol.report.iteration_count(), 1);
  EXPECT_EQ(sol.x, DenseMatrix::Zero(4, 4));
}

TEST(FixedPoint, MonotoneNonnegativeSequenceProperty) {
  Rng rng(33);
  for (int trial = 0; trial < 20; ++trial) {
    const Index n = 2 + trial % 8;
    auto p = random_problem(n, rng, 0.9);
    DenseSolveOptions opts;
    DenseMatrix prev;
    bool ok = true;
    opts.observer = [&](Index k, const DenseMatrix& x) {
      const double tol = 1e-12 * std::max(1.0, x.norm());
      ok = ok && is_nonnegative(x, tol);
      if (k > 0) ok = ok && elementwise_leq(prev, x, tol);
      prev = x;
    };
    auto sol = solve_fixed_point(p, opts);
    EXPECT_EQ(sol.report.status, SolveStatus::Converged) << "trial " << trial;
    EXPECT_TRUE(ok) << "trial " << trial;
  }
}

TEST(Newton, ScalarSteps) {
  const auto p = scalar_problem();
  std::vector<double> xs;
  DenseSolveOptions opts;
  opts.observer = [&](Index, const DenseMatrix& x) { xs.push_back(x(0, 0)); };
  auto sol = solve_newton(p, opts);
  ASSERT_GE(xs.size(), 3u);
  EXPECT_NEAR(xs[1], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(xs[2], 8.0 / 21.0, 1e-15);
  for (std::size_t i = 1; i < xs.size(); ++i) {
    EXPECT_LE(xs[i - 1], xs[i] + 1e-15);
    EXPECT_LE(xs[i], kXmin + 1e-15);
  }
  EXPECT_EQ(sol.report.status, SolveStatus::Converged);
  EXPECT_NEAR(sol.x(0, 0), kXmin, 1e-12);
  for (const auto& rec : sol.report.iterations) EXPECT_EQ(rec.step_size, 1.0);
}

TEST(Newton, SandwichAndAgreementWithFixedPointProperty) {
  Rng rng(34);
  for (int trial = 0; trial < 16; ++trial) {
    const Index n = 2 + (trial * 7) % 49;
    auto p = random_problem(n, rng, 0.9);
    const auto fp = solve_fixed_point(p);
    ASSERT_EQ(fp.report.status, SolveStatus::Converged);
    DenseSolveOptions opts;
    DenseMatrix prev;
    bool ok = true;
    opts.observer = [&](Index k, const DenseMatrix& x) {
      const double tol = 1e-10 * std::max(1.0, fp.x.norm());
      if (k > 0) ok = ok && elementwise_leq(prev, x, tol);
      ok = ok && elementwise_leq(x, fp.x, tol);
      prev = x;
    };
    const auto nw = solve_newton(p, opts);
    EXPECT_EQ(nw.report.status, SolveStatus::Converged);
    EXPECT_TRUE(ok) << "trial " << trial << " n=" << n;
    EXPECT_LE(rel_diff(nw.x, fp.x), 1e-8) << "trial " << trial;
  }
}

TEST(Newton, ShiftedOperatorStaysMMatrixProperty) {
  Rng rng(35);
  for (int trial = 0; trial < 12; ++trial) {
    const Index n = 1 + trial % 10;
    auto p = random_problem(n, rng, 0.95);
    DenseSolveOptions opts;
    bool ok = true;
    opts.observer = [&](Index, const DenseMatrix& x) {
      const DenseMatrix k = tsylv_kron_matrix(p.d - x.transpose() * p.b, p.a - p.b * x);
      ok = ok && classify_m_matrix(k).is_nonsingular_m_matrix;
    };
    solve_newton(p, opts);
    EXPECT_TRUE(ok) << "trial " << trial;
  }
}

TEST(Newton, ExactLineSearchMonotoneResidualProperty) {
  Rng rng(36);
  for (int trial = 0; trial < 12; ++trial) {
    const Index n = 2 + trial % 10;
    auto p = random_problem(n, rng, 0.95);
    const auto sol = solve_newton(p, 1e-12, 50, LineSearch::Exact);
    EXPECT_EQ(sol.report.status, SolveStatus::Converged);
    const auto& it = sol.report.iterations;
    for (std::size_t i = 1; i < it.size(); ++i) {
      EXPECT_LE(it[i].relative_residual, it[i - 1].relative_residual * (1 + 1e-12)) << "trial " << trial;
      EXPECT_GT(it[i].step_size, 0.0);
      EXPECT_LE(it[i].step_size, 2.0);
    }
    EXPECT_TRUE(verify_minimality(p, sol.x));
  }
}

TEST(LineSearchPoly, ScalarStepCoefficients) {
  // From x0 = 0: R = c = -1, exact step s = 1/3, L = 0, S^T B S = 1/9.
  const auto poly = line_search_poly(scalar(-1.0), scalar(0.0), scalar(1.0 / 9.0));
  EXPECT_DOUBLE_EQ(poly.alpha, 1.0);
  EXPECT_DOUBLE_EQ(poly.beta, 0.0);
  EXPECT_DOUBLE_EQ(poly.gamma, 0.0);
  EXPECT_DOUBLE_EQ(poly.xi, 0.0);
  EXPECT_NEAR(poly.delta, 1.0 / 81.0, 1e-17);
  EXPECT_NEAR(poly.epsilon, -1.0 / 9.0, 1e-17);
  EXPECT_NEAR(poly(1.0), 1.0 / 81.0, 1e-16);
  EXPECT_EQ(poly(0.0), poly.alpha);
  // Directly: R(l/3) = l - 1 - l^2/9.
  for (double l : {0.25, 0.5, 1.5, 2.0}) {
    const double r = l - 1.0 - l * l / 9.0;
    EXPECT_NEAR(poly(l), r * r, 1e-14);
  }
}

TEST(LineSearchPoly, LinearProblem) {
  Rng rng(37);
  const DenseMatrix r = uniform(4, 4, rng, -1, 1);
  const DenseMatrix z = DenseMatrix::Zero(4, 4);
  const auto poly = line_search_poly(r, z, z);
  for (double l : {0.0, 0.3, 1.0, 1.7}) EXPECT_NEAR(poly(l), (1 - l) * (1 - l) * poly.alpha, 1e-13);
  EXPECT_EQ(minimize_quartic(poly, 2.0), 1.0);
}

TEST(LineSearchPoly, MatchesDirectResidualProperty) {
  Rng rng(38);
  for (int trial = 0; trial < 20; ++trial) {
    const Index n = 2 + trial % 9;
    auto p = random_problem(n, rng, 0.9);
    p.allow_unverified = true;
    // An arbitrary iterate, not necessarily nonnegative.
    const DenseMatrix x = 0.3 * uniform(n, n, rng, -1, 1);
    const DenseMatrix ds = p.d - x.transpose() * p.b, as = p.a - p.b * x;
    const DenseMatrix rhs = -(x.transpose() * p.b * x) - p.c;
    const DenseMatrix next = solve_tsylv_dense(TSylvEquation{ds, as, rhs}).x;
    const DenseMatrix s = next - x;
    const DenseMatrix rk = residual(p, x);
    const DenseMatrix l_next = tsylv_apply(ds, as, next) - rhs;
    const auto poly = line_search_poly(rk, l_next, s.transpose() * p.b * s);
    for (int i = 1; i <= 20; ++i) {
      const double l = 0.1 * i;
      const double direct = residual(p, x + l * s).squaredNorm();
      EXPECT_LE(std::abs(poly(l) - direct), 1e-10 * std::max(direct, poly.alpha * 1e-6)) << "l=" << l;
    }
  }
}

TEST(LineSearchPoly, InexactStepResidualIncluded) {
  // Perturbed step: L != 0 enters through beta, gamma and xi.
  Rng rng(39);
  auto p = random_problem(5, rng);
  const DenseMatrix x = 0.1 * uniform(5, 5, rng);
  const DenseMatrix ds = p.d - x.transpose() * p.b, as = p.a - p.b * x;
  const DenseMatrix rhs = -(x.transpose() * p.b * x) - p.c;
  const DenseMatrix next = solve_tsylv_dense(TSylvEquation{ds, as, rhs}).x + 1e-3 * uniform(5, 5, rng, -1, 1);
  const DenseMatrix s = next - x;
  const DenseMatrix l_next = tsylv_apply(ds, as, next) - rhs;
  const auto poly = line_search_poly(residual(p, x), l_next, s.transpose() * p.b * s);
  EXPECT_GT(poly.beta, 0.0);
  for (double l : {0.2, 0.9, 1.4, 2.0})
    EXPECT_NEAR(poly(l), residual(p, x + l * s).squaredNorm(), 1e-10 * poly.alpha);
}

namespace {

double grid_min(const LineSearchPoly& p, double end, int points) {
  double best = std::numeric_limits<double>::infinity();
  for (int i = 1; i <= points; ++i) best = std::min(best, p(end * double(i) / points));
  return best;
}

}  // namespace

TEST(MinimizeQuartic, Examples) {
  LineSearchPoly p;
  p.alpha = 1.0;
  EXPECT_EQ(minimize_quartic(p, 2.0), 1.0);
  EXPECT_EQ(minimize_quartic(p, 0.5), 0.5);
  EXPECT_THROW(minimize_quartic(p, 0.0), Error);
}

TEST(MinimizeQuartic, ScalarStepAgainstGrid) {
  // p(l) = (l - 1 - l^2/9)^2 from the scalar Newton step.
  const auto poly = line_search_poly(scalar(-1.0), scalar(0.0), scalar(1.0 / 9.0));
  const double l = minimize_quartic(poly, 2.0);
  EXPECT_GT(l, 1.0);
  EXPECT_LE(l, 2.0);
  EXPECT_LE(poly(l), grid_min(poly, 2.0, 1000000) + 1e-15);
  // The exact minimizer is the root of l^2/9 - l + 1 in (0, 2].
  EXPECT_NEAR(l, (9.0 - std::sqrt(45.0)) / 2.0, 1e-8);
}

TEST(MinimizeQuartic, GridOracleAndDescentProperty) {
  Rng rng(40);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 300; ++trial) {
    // Build a polynomial from random matrices so that it is a true squared norm.
    const Index n = 3;
    const DenseMatrix r = uniform(n, n, rng, -1, 1);
    const double eta = 0.9 * std::abs(u(rng));
    DenseMatrix l_next = uniform(n, n, rng, -1, 1);
    l_next *= eta * r.norm() / l_next.norm();
    const DenseMatrix q = std::pow(10.0, 2.0 * u(rng)) * uniform(n, n, rng, -1, 1);
    const auto poly = line_search_poly(r, l_next, q);
    const double end = trial % 3 == 0 ? 2.0 : 0.1 + 1.9 * std::abs(u(rng));
    const double l = minimize_quartic(poly, end);
    ASSERT_GT(l, 0.0);
    ASSERT_LE(l, end);
    EXPECT_LE(poly(l), grid_min(poly, end, 20000) + 1e-12 * poly.alpha) << "trial " << trial;
    EXPECT_LT(poly(l), poly(0.0)) << "trial " << trial;
  }
}

TEST(VerifyMinimality, Examples) {
  const auto p = scalar_problem();
  EXPECT_TRUE(verify_minimality(p, scalar(kXmin), 200));
  EXPECT_FALSE(verify_minimality(p, scalar((3.0 + std::sqrt(5.0)) / 2.0), 200));
  EXPECT_FALSE(verify_minimality(p, scalar(-0.1), 200));

  Rng rng(41);
  auto z = random_problem(3, rng);
  z.c.setZero();
  EXPECT_TRUE(verify_minimality(z, DenseMatrix::Zero(3, 3), 10));
}

TEST(VerifyMinimality, NewtonSolutionOnRandomInstance) {
  Rng rng(42);
  auto p = random_problem(6, rng, 0.9);
  const auto nw = solve_newton(p);
  const auto fp = solve_fixed_point(p);
  EXPECT_LE(rel_diff(nw.x, fp.x), 1e-8);
  EXPECT_TRUE(verify_minimality(p, nw.x));
}
