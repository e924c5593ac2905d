// tric: generate T-Riccati test problems, solve them and run benchmark grids.
//
// Exit codes: 0 when every solve converged, 2 when a solve did not converge,
// 1 on usage or I/O errors.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tric/tric.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitNotConverged = 2;

struct ProblemArgs {
  std::string family;
  tric::Index n = 0, p = 1, q = 1;
  double gamma = 1e4;
  std::uint64_t seed = 1;
  bool no_sign_consistency = false;
  std::string problem;

  tric::ProblemSpec spec(const std::string& default_family) const {
    tric::ProblemSpec s;
    if (!problem.empty()) {
      s.family = tric::Family::File;
      s.file = problem;
      return s;
    }
    s.family = tric::family_from_string(family.empty() ? default_family : family);
    s.n = n;
    s.p = p;
    s.q = q;
    s.gamma = gamma;
    s.seed = seed;
    s.sign_consistency = !no_sign_consistency;
    return s;
  }
};

struct SolverArgs {
  tric::RunConfig config;
  std::string format = "json";
  std::string out;
};

const std::vector<std::string> kFamilies = {"ex1-dense", "ex1-lowrank", "ex2-dense", "ex2-lowrank"};

void add_problem_options(CLI::App* app, ProblemArgs& a, bool allow_file) {
  app->add_option("--family", a.family, "Problem family")->check(CLI::IsMember(kFamilies));
  app->add_option("--n", a.n, "Problem size (ex1 needs a perfect square)")->check(CLI::PositiveNumber);
  app->add_option("--p", a.p, "Rank of B (low-rank families)")->check(CLI::PositiveNumber);
  app->add_option("--q", a.q, "Rank of C (low-rank families)")->check(CLI::PositiveNumber);
  app->add_option("--gamma", a.gamma, "Reaction coefficient of the ex1 operator D");
  app->add_option("--seed", a.seed, "Random seed");
  app->add_flag("--no-sign-consistency", a.no_sign_consistency,
                "Keep C2 >= 0 instead of negating it (low-rank families)");
  if (allow_file) app->add_option("--problem", a.problem, "Problem manifest (JSON naming Matrix Market files)");
}

void add_solver_options(CLI::App* app, SolverArgs& s, bool lowrank) {
  auto& c = s.config;
  app->add_option("--tol", c.tol, "Relative residual tolerance")->check(CLI::PositiveNumber);
  app->add_option("--max-outer", c.max_outer, "Maximum Newton iterations")->check(CLI::PositiveNumber);
  const std::vector<std::string> rules =
      lowrank ? std::vector<std::string>{"none", "inexact", "exact"} : std::vector<std::string>{"none", "exact"};
  app->add_option("--line-search", c.line_search, "Step-size rule")->check(CLI::IsMember(rules));
  if (lowrank) {
    app->add_option("--max-inner", c.max_inner, "Maximum extended Krylov iterations per step")
        ->check(CLI::PositiveNumber);
    app->add_option("--eta-bar", c.eta_bar, "Upper bound of the forcing terms");
    app->add_option("--alpha", c.alpha, "Sufficient-decrease constant");
    app->add_option("--trunc-tol", c.trunc_tol, "Relative singular-value truncation tolerance");
  }
  app->add_option("--format", s.format, "Report format")->check(CLI::IsMember({"json", "csv"}));
  app->add_option("--out", s.out, "Output directory (default: print the report)");
}

void print_summary(const tric::RunReport& r, std::FILE* to) {
  std::fprintf(to, "%s n=%lld %s: %s, its=%lld, rel_res=%.3e, rank=%lld, mem=%lld, time=%.2fs", to_string(r.spec.family),
               static_cast<long long>(r.spec.n), r.config.line_search.c_str(), r.status.c_str(),
               static_cast<long long>(r.trace.empty() ? 0 : r.trace.size() - 1), r.final_rel_res(),
               static_cast<long long>(r.solution_rank), static_cast<long long>(r.mem_dim), r.wall_time_s);
  if (r.rel_error) std::fprintf(to, ", rel_err=%.3e", *r.rel_error);
  if (!r.message.empty()) std::fprintf(to, " (%s)", r.message.c_str());
  std::fprintf(to, "\n");
}

int solve(const ProblemArgs& pa, const SolverArgs& sa, tric::SolverKind kind, const std::string& default_family) {
  const tric::ProblemSpec spec = pa.spec(default_family);
  const tric::ReportFormat format = tric::format_from_string(sa.format);
  const tric::RunReport r = tric::run_experiment(spec, kind, sa.config, sa.out, format);
  if (sa.out.empty()) {
    std::cout << (format == tric::ReportFormat::Json ? tric::report_to_json(r) + "\n" : tric::report_to_csv(r));
    print_summary(r, stderr);
  } else {
    print_summary(r, stdout);
  }
  return r.converged() ? kExitOk : kExitNotConverged;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"T-Riccati solvers: problem generators, dense and low-rank Newton solvers, benchmarks"};
  app.require_subcommand(1);

  ProblemArgs gen;
  std::string gen_out, gen_name;
  auto* generate = app.add_subcommand("generate", "Write a generated problem as Matrix Market files plus a manifest");
  add_problem_options(generate, gen, false);
  generate->add_option("--out", gen_out, "Output directory")->required();
  generate->add_option("--name", gen_name, "File stem (default: family and size)");

  ProblemArgs dense_problem;
  SolverArgs dense_solver;
  dense_solver.config = tric::RunConfig::defaults(tric::SolverKind::DenseNewton);
  auto* solve_dense = app.add_subcommand("solve-dense", "Newton-Kleinman with dense T-Sylvester solves");
  add_problem_options(solve_dense, dense_problem, true);
  add_solver_options(solve_dense, dense_solver, false);

  ProblemArgs lr_problem;
  SolverArgs lr_solver;
  lr_solver.config = tric::RunConfig::defaults(tric::SolverKind::LowRankNewton);
  auto* solve_lowrank = app.add_subcommand("solve-lowrank", "Inexact low-rank Newton-Kleinman with extended Krylov inner solves");
  add_problem_options(solve_lowrank, lr_problem, true);
  add_solver_options(solve_lowrank, lr_solver, true);

  int table = 0;
  std::vector<tric::Index> sizes;
  tric::Index seeds = 1;
  std::uint64_t first_seed = 1;
  int jobs = 1;
  std::string bench_out, bench_format = "json";
  int bench_max_outer = 0, bench_max_inner = 0;
  auto* bench = app.add_subcommand("bench", "Run a benchmark grid and write one report per run plus a summary");
  bench->add_option("--table", table, "Grid to run (1: ex1 dense, 2: ex2 dense, 3: ex1 low-rank, 4: ex2 low-rank)")
      ->required()
      ->check(CLI::Range(1, 4));
  bench->add_option("--n", sizes, "Problem sizes replacing the grid defaults");
  bench->add_option("--seeds", seeds, "Number of seeds per size")->check(CLI::PositiveNumber);
  bench->add_option("--seed", first_seed, "First seed");
  bench->add_option("--jobs", jobs, "Runs executed in parallel")->check(CLI::PositiveNumber);
  bench->add_option("--max-outer", bench_max_outer, "Maximum Newton iterations")->check(CLI::PositiveNumber);
  bench->add_option("--max-inner", bench_max_inner, "Maximum inner iterations")->check(CLI::PositiveNumber);
  bench->add_option("--format", bench_format, "Report format")->check(CLI::IsMember({"json", "csv"}));
  bench->add_option("--out", bench_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*generate) {
      const tric::ProblemSpec spec = gen.spec("ex2-dense");
      const tric::GeneratedProblem g = tric::generate(spec);
      std::string stem = gen_name;
      if (stem.empty()) {
        stem = std::string(tric::to_string(spec.family)) + "_n" + std::to_string(spec.n);
        if (tric::is_lowrank(spec.family)) stem += "_p" + std::to_string(spec.p) + "_q" + std::to_string(spec.q);
        stem += "_seed" + std::to_string(spec.seed);
      }
      std::cout << tric::save_problem(g, gen_out, stem) << "\n";
      if (!g.assumption1.empty()) std::cout << "solvability: " << g.assumption1 << "\n";
      return kExitOk;
    }
    if (*solve_dense) return solve(dense_problem, dense_solver, tric::SolverKind::DenseNewton, "ex2-dense");
    if (*solve_lowrank) return solve(lr_problem, lr_solver, tric::SolverKind::LowRankNewton, "ex2-lowrank");
    if (*bench) {
      auto cells = tric::bench_cells(table, sizes, seeds, first_seed);
      for (auto& c : cells) {
        if (bench_max_outer > 0) c.config.max_outer = bench_max_outer;
        if (bench_max_inner > 0) c.config.max_inner = bench_max_inner;
      }
      const auto reports = tric::run_bench(cells, jobs, bench_out, tric::format_from_string(bench_format));
      const std::string summary = (std::filesystem::path(bench_out) / ("table" + std::to_string(table) + "_summary.csv")).string();
      {
        auto out = tric::detail::open_out(summary);
        out << tric::bench_summary_csv(reports);
      }
      bool all = true;
      for (const auto& r : reports) {
        print_summary(r, stdout);
        all = all && r.converged();
      }
      std::cout << "summary: " << summary << "\n";
      return all ? kExitOk : kExitNotConverged;
    }
  } catch (const tric::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
