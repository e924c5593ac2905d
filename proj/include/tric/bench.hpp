#pragma once

// Benchmark grids over the four problem families, run cell by cell.

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "tric/report.hpp"

namespace tric {

struct BenchCell {
  ProblemSpec spec;
  SolverKind solver = SolverKind::DenseNewton;
  RunConfig config;
};

/// Grid 1: Ex1 dense; 2: Ex2 dense (both with and without exact line search,
/// tol 1e-12); 3: Ex1 low-rank; 4: Ex2 low-rank (p, q in {(1,1),(1,5),(5,10)},
/// tol 1e-6). `sizes` replaces the default sizes when non-empty.
inline std::vector<BenchCell> bench_cells(int table, std::vector<Index> sizes, Index seeds = 1,
                                          std::uint64_t first_seed = 1) {
  if (seeds < 1) throw Error("bench: at least one seed is required");
  Family family;
  switch (table) {
    case 1: family = Family::Ex1Dense; break;
    case 2: family = Family::Ex2Dense; break;
    case 3: family = Family::Ex1LowRank; break;
    case 4: family = Family::Ex2LowRank; break;
    default: throw Error("bench: table must be 1, 2, 3 or 4");
  }
  if (sizes.empty()) {
    static const std::vector<Index> defaults[] = {
        {324, 784}, {500, 1000}, {10000, 22500, 32400}, {10000, 50000, 100000}};
    sizes = defaults[table - 1];
  }
  std::vector<BenchCell> cells;
  for (Index n : sizes) {
    for (Index s = 0; s < seeds; ++s) {
      ProblemSpec spec;
      spec.family = family;
      spec.n = n;
      spec.seed = first_seed + static_cast<std::uint64_t>(s);
      if (is_lowrank(family)) {
        for (auto [p, q] : {std::pair<Index, Index>{1, 1}, {1, 5}, {5, 10}}) {
          spec.p = p;
          spec.q = q;
          cells.push_back({spec, SolverKind::LowRankNewton, RunConfig::defaults(SolverKind::LowRankNewton)});
        }
      } else {
        for (const char* ls : {"none", "exact"}) {
          RunConfig c = RunConfig::defaults(SolverKind::DenseNewton);
          c.line_search = ls;
          cells.push_back({spec, SolverKind::DenseNewton, c});
        }
      }
    }
  }
  return cells;
}

/// Runs the cells on `jobs` threads; each run is independent and reports keep
/// the cell order. Reports are written to `out_dir` when it is non-empty.
inline std::vector<RunReport> run_bench(const std::vector<BenchCell>& cells, int jobs = 1,
                                        const std::string& out_dir = "", ReportFormat format = ReportFormat::Json) {
  for (const auto& c : cells) validate_run(c.spec, c.solver, c.config);
  std::vector<RunReport> reports(cells.size());
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::string first_error;
  const auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      try {
        reports[i] = run_experiment(cells[i].spec, cells[i].solver, cells[i].config, out_dir, format);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (first_error.empty()) first_error = e.what();
      }
    }
  };
  const int threads = std::max(1, std::min<int>(jobs, static_cast<int>(cells.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (!first_error.empty()) throw IoError(first_error);
  return reports;
}

/// One row per run with the table columns (Its, average inner, Mem, rank,
/// relative residual, error, time).
inline std::string bench_summary_csv(const std::vector<RunReport>& reports) {
  std::ostringstream out;
  out << "family,n,p,q,seed,line_search,status,its,avg_inner,mem,rank,rel_res,rel_error,time_s\n";
  for (const auto& r : reports) {
    out << to_string(r.spec.family) << ',' << r.spec.n << ',' << r.spec.p << ',' << r.spec.q << ',' << r.spec.seed
        << ',' << r.config.line_search << ',' << r.status << ','
        << (r.trace.empty() ? 0 : static_cast<Index>(r.trace.size()) - 1) << ',' << detail::fmt_double(r.avg_inner)
        << ',' << r.mem_dim << ',' << r.solution_rank << ',' << detail::fmt_double(r.final_rel_res()) << ','
        << (r.rel_error ? detail::fmt_double(*r.rel_error) : std::string()) << ','
        << detail::fmt_double(r.wall_time_s) << '\n';
  }
  return out.str();
}

}  // namespace tric
