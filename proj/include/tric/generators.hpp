#pragma once

// Problem generators for the two benchmark families.
//
// Ex1: convection-diffusion operators on the unit square,
//   D ~ -u_xx - u_yy + y(1-x) u_x + gamma u,   A ~ -u_xx - u_yy,
// discretized with the 5-point Laplacian and centered differences for u_x
// on the k x k interior grid (h = 1/(k+1), homogeneous Dirichlet data).
// Ex2: D, A from a random singular M-matrix W = diag(R 1) - R (dense case),
// or shifted sparse random matrices (large case).

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "tric/dense_core.hpp"
#include "tric/lowrank_core.hpp"
#include "tric/riccati_dense.hpp"
#include "tric/types.hpp"

namespace tric {

enum class Family { Ex1Dense, Ex1LowRank, Ex2Dense, Ex2LowRank, File };

inline const char* to_string(Family f) {
  switch (f) {
    case Family::Ex1Dense: return "ex1-dense";
    case Family::Ex1LowRank: return "ex1-lowrank";
    case Family::Ex2Dense: return "ex2-dense";
    case Family::Ex2LowRank: return "ex2-lowrank";
    case Family::File: return "file";
  }
  return "unknown";
}

inline Family family_from_string(const std::string& s) {
  for (Family f : {Family::Ex1Dense, Family::Ex1LowRank, Family::Ex2Dense, Family::Ex2LowRank, Family::File})
    if (s == to_string(f)) return f;
  throw Error("unknown problem family '" + s + "'");
}

inline bool is_lowrank(Family f) { return f == Family::Ex1LowRank || f == Family::Ex2LowRank; }

struct ProblemSpec {
  Family family = Family::Ex2Dense;
  Index n = 0;
  /// Ranks of B = B1 B2^T and C = C1^T C2 (low-rank families).
  Index p = 1, q = 1;
  double gamma = 1e4;
  std::uint64_t seed = 0;
  /// Low-rank families: make C2 <= 0 so that B >= 0 and C <= 0.
  bool sign_consistency = true;
  /// Manifest path for Family::File.
  std::string file;

  void validate() const;
  bool operator==(const ProblemSpec&) const = default;
};

/// Grid size k with k*k == n, or nothing when n is not a perfect square.
inline std::optional<Index> grid_size(Index n) {
  if (n < 1) return std::nullopt;
  Index k = static_cast<Index>(std::llround(std::sqrt(static_cast<double>(n))));
  while (k * k > n) --k;
  while ((k + 1) * (k + 1) <= n) ++k;
  if (k * k != n) return std::nullopt;
  return k;
}

inline void ProblemSpec::validate() const {
  if (family == Family::File) {
    if (file.empty()) throw Error("problem spec: a manifest file is required");
    return;
  }
  if (n < 1) throw Error("problem spec: n must be positive");
  if ((family == Family::Ex1Dense || family == Family::Ex1LowRank) && !grid_size(n))
    throw Error("problem spec: ex1 requires n = k^2, got n = " + std::to_string(n));
  if (is_lowrank(family) && (p < 1 || q < 1)) throw Error("problem spec: p and q must be positive");
}

using Rng = std::mt19937_64;

namespace detail {

inline DenseMatrix draw_uniform(Index rows, Index cols, Rng& rng) {
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  DenseMatrix m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
  return m;
}

inline DenseMatrix draw_unit_norm(Index rows, Index cols, Rng& rng) {
  DenseMatrix m = draw_uniform(rows, cols, rng);
  const double nrm = m.norm();
  if (nrm > 0.0) m /= nrm;
  return m;
}

/// n x n sparse matrix with about `count` uniform entries at uniform positions;
/// repeated positions keep the first draw.
inline SparseMatrix draw_sparse(Index n, Index count, Rng& rng) {
  std::uniform_int_distribution<Index> pos(0, n - 1);
  std::uniform_real_distribution<double> val(0.0, 1.0);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(count));
  for (Index e = 0; e < count; ++e) {
    const Index i = pos(rng), j = pos(rng);
    trip.emplace_back(i, j, val(rng));
  }
  SparseMatrix m(n, n);
  m.setFromTriplets(trip.begin(), trip.end(), [](double first, double) { return first; });
  return m;
}

inline SparseMatrix shifted(const SparseMatrix& m, double shift) {
  SparseMatrix id(m.rows(), m.cols());
  id.setIdentity();
  SparseMatrix out = m + shift * id;
  out.makeCompressed();
  return out;
}

}  // namespace detail

struct Ex1Operators {
  SparseMatrix a, d;
};

/// Ex1 operators on the k x k interior grid; unknown (i, j) at x = (i+1)h,
/// y = (j+1)h has index i + j k.
inline Ex1Operators ex1_operators(Index k, double gamma) {
  if (k < 1) throw Error("ex1_operators: grid size must be positive");
  const Index n = k * k;
  const double h = 1.0 / static_cast<double>(k + 1);
  const double lap = 1.0 / (h * h);
  std::vector<Eigen::Triplet<double>> ta, td;
  ta.reserve(static_cast<std::size_t>(5 * n));
  td.reserve(static_cast<std::size_t>(5 * n));
  for (Index j = 0; j < k; ++j) {
    for (Index i = 0; i < k; ++i) {
      const Index row = i + j * k;
      const double x = static_cast<double>(i + 1) * h, y = static_cast<double>(j + 1) * h;
      const double conv = y * (1.0 - x) / (2.0 * h);
      ta.emplace_back(row, row, 4.0 * lap);
      td.emplace_back(row, row, 4.0 * lap + gamma);
      if (i > 0) {
        ta.emplace_back(row, row - 1, -lap);
        td.emplace_back(row, row - 1, -lap - conv);
      }
      if (i + 1 < k) {
        ta.emplace_back(row, row + 1, -lap);
        td.emplace_back(row, row + 1, -lap + conv);
      }
      if (j > 0) {
        ta.emplace_back(row, row - k, -lap);
        td.emplace_back(row, row - k, -lap);
      }
      if (j + 1 < k) {
        ta.emplace_back(row, row + k, -lap);
        td.emplace_back(row, row + k, -lap);
      }
    }
  }
  Ex1Operators ops{SparseMatrix(n, n), SparseMatrix(n, n)};
  ops.a.setFromTriplets(ta.begin(), ta.end());
  ops.d.setFromTriplets(td.begin(), td.end());
  ops.a.makeCompressed();
  ops.d.makeCompressed();
  return ops;
}

/// Result of a generator: exactly one of `dense` and `lowrank` is set.
struct GeneratedProblem {
  std::optional<TRiccatiProblem> dense;
  std::optional<LowRankTRiccatiProblem> lowrank;
  /// Manufactured solution (Ex2 dense).
  std::optional<DenseMatrix> x_exact;
  /// Solvability audit outcome; empty when not audited (n > 200).
  std::string assumption1;
  /// Short description of the construction, stored with reports.
  std::string note;

  Index order() const { return dense ? dense->order() : (lowrank ? lowrank->order() : 0); }
};

namespace detail {

inline void audit(GeneratedProblem& g) {
  if (g.order() > 200) return;
  TRiccatiProblem p = g.dense ? *g.dense : g.lowrank->to_dense();
  check_assumption1(p);
  g.assumption1 = p.assumption1_holds ? "holds" : "fails: " + p.assumption1_note;
  if (g.dense) {
    g.dense->assumption1_checked = p.assumption1_checked;
    g.dense->assumption1_holds = p.assumption1_holds;
    g.dense->assumption1_note = p.assumption1_note;
  }
}

inline LowRankTRiccatiProblem lowrank_from(SparseMatrix a, SparseMatrix d, Index p, Index q, bool sign_consistency,
                                           Rng& rng) {
  const Index n = d.rows();
  DenseMatrix b1 = draw_unit_norm(n, p, rng);
  DenseMatrix b2 = draw_unit_norm(n, p, rng);
  DenseMatrix c1 = draw_unit_norm(q, n, rng);
  DenseMatrix c2 = draw_unit_norm(q, n, rng);
  if (sign_consistency) c2 = -c2;
  return LowRankTRiccatiProblem(std::move(a), std::move(d), std::move(b1), std::move(b2), std::move(c1),
                                std::move(c2));
}

}  // namespace detail

/// Ex1 with full random B, C (entries uniform in [0,1)) when `lowrank` is
/// false, otherwise unit-norm random factors of ranks p and q.
inline GeneratedProblem generate_ex1(Index n, double gamma, bool lowrank, Index p, Index q, std::uint64_t seed,
                                     bool sign_consistency = true) {
  const auto k = grid_size(n);
  if (!k) throw Error("generate_ex1: n = " + std::to_string(n) + " is not a perfect square");
  Ex1Operators ops = ex1_operators(*k, gamma);
  Rng rng(seed);
  GeneratedProblem g;
  g.note = "5-point Laplacian, centered convection, h = 1/(k+1), k = " + std::to_string(*k);
  if (lowrank) {
    g.lowrank = detail::lowrank_from(std::move(ops.a), std::move(ops.d), p, q, sign_consistency, rng);
  } else {
    TRiccatiProblem prob;
    prob.a = DenseMatrix(ops.a);
    prob.d = DenseMatrix(ops.d);
    prob.b = detail::draw_uniform(n, n, rng);
    prob.c = detail::draw_uniform(n, n, rng);
    prob.allow_unverified = true;
    g.dense = std::move(prob);
  }
  detail::audit(g);
  return g;
}

/// Ex2 dense: W = diag(R 1) - R for R uniform 2n x 2n, partitioned as
/// [D M; N A]; B = -N / ||N||_F; X_exact uniform with unit norm and
/// C = -(D X + X^T A - X^T B X), so that X_exact is a solution.
/// W = diag(R 1) - R for R uniform 2n x 2n, a singular M-matrix with W 1 = 0.
inline DenseMatrix ex2_w_matrix(Index n, Rng& rng) {
  DenseMatrix w = -detail::draw_uniform(2 * n, 2 * n, rng);
  w.diagonal() -= w.rowwise().sum();
  return w;
}

inline GeneratedProblem generate_ex2_dense(Index n, std::uint64_t seed) {
  if (n < 1) throw Error("generate_ex2_dense: n must be positive");
  Rng rng(seed);
  const DenseMatrix w = ex2_w_matrix(n, rng);
  TRiccatiProblem prob;
  prob.d = w.topLeftCorner(n, n);
  prob.a = w.bottomRightCorner(n, n);
  const DenseMatrix nblk = w.bottomLeftCorner(n, n);
  prob.b = -nblk / nblk.norm();
  DenseMatrix x = detail::draw_unit_norm(n, n, rng);
  prob.c = -(prob.d * x + x.transpose() * prob.a - x.transpose() * prob.b * x);
  prob.allow_unverified = true;
  GeneratedProblem g;
  g.dense = std::move(prob);
  g.x_exact = std::move(x);
  g.note = "W = diag(R 1) - R, B = -N/||N||_F, manufactured X_exact";
  detail::audit(g);
  return g;
}

/// Ex2 large: D = F + (rho(F) + 1) I, A = G + (rho(G) + 20) I with F, G
/// sparse uniform at density 1/n; rho is the Perron upper bound.
inline GeneratedProblem generate_ex2_lowrank(Index n, Index p, Index q, std::uint64_t seed,
                                             bool sign_consistency = true) {
  if (n < 1) throw Error("generate_ex2_lowrank: n must be positive");
  Rng rng(seed);
  const SparseMatrix f = detail::draw_sparse(n, n, rng);
  const SparseMatrix gm = detail::draw_sparse(n, n, rng);
  const double rho_f = spectral_radius_upper(f, 2000, 1e-6);
  const double rho_g = spectral_radius_upper(gm, 2000, 1e-6);
  GeneratedProblem g;
  g.lowrank = detail::lowrank_from(detail::shifted(gm, rho_g + 20.0), detail::shifted(f, rho_f + 1.0), p, q,
                                   sign_consistency, rng);
  g.note = "F, G sparse uniform at density 1/n; D = F + (rho(F)+1) I, A = G + (rho(G)+20) I";
  detail::audit(g);
  return g;
}

}  // namespace tric
