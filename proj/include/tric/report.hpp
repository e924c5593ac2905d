#pragma once

// Experiment runner and JSON/CSV run reports.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/QR>

#include "json.hpp"
#include "tric/generators.hpp"
#include "tric/io.hpp"
#include "tric/riccati_dense.hpp"
#include "tric/riccati_lowrank.hpp"

namespace tric {

enum class SolverKind { DenseNewton, LowRankNewton };

inline const char* to_string(SolverKind s) {
  return s == SolverKind::DenseNewton ? "dense-newton" : "lowrank-inexact-newton";
}

inline SolverKind solver_from_string(const std::string& s) {
  if (s == to_string(SolverKind::DenseNewton)) return SolverKind::DenseNewton;
  if (s == to_string(SolverKind::LowRankNewton)) return SolverKind::LowRankNewton;
  throw Error("unknown solver '" + s + "'");
}

/// Solver settings shared by both solvers; fields a solver does not use are
/// ignored by it but kept in the report.
struct RunConfig {
  double tol = 1e-12;
  int max_outer = 50;
  int max_inner = 50;
  double eta_bar = 0.5;
  double alpha = 1e-4;
  /// "none" or "exact" (dense); "none", "inexact" or "exact" (low-rank).
  std::string line_search = "none";
  double trunc_tol = 1e-12;

  /// Defaults used by the benchmark tables: tol 1e-12 without line search for
  /// the dense solver, tol 1e-6 with the theta-bounded line search otherwise.
  static RunConfig defaults(SolverKind s) {
    RunConfig c;
    if (s == SolverKind::LowRankNewton) {
      c.tol = 1e-6;
      c.line_search = "inexact";
    }
    return c;
  }

  bool operator==(const RunConfig&) const = default;
};

struct TraceRow {
  Index k = 0;
  double res = 0.0;
  double rel_res = 0.0;
  double lambda = 1.0;
  Index inner_its = 0;
  Index rank = 0;

  bool operator==(const TraceRow&) const = default;
};

struct RunReport {
  ProblemSpec spec;
  std::string solver;
  RunConfig config;
  std::vector<TraceRow> trace;
  /// A SolveStatus name, or "Error" when the run raised an exception.
  std::string status;
  double wall_time_s = 0.0;
  /// Largest dim(V) + dim(W) of the inner solves; 0 for dense runs.
  Index mem_dim = 0;
  Index solution_rank = 0;
  double avg_inner = 0.0;
  /// ||X - X_exact||_F / ||X_exact||_F when a manufactured solution exists.
  std::optional<double> rel_error;
  std::string message;
  std::vector<std::string> warnings;
  /// Solvability audit outcome (n <= 200) and problem construction note.
  std::string assumption1;
  std::string problem_note;
  /// Residual history and target of a failed inner solve.
  std::vector<double> failed_inner_residuals;
  double failed_inner_tolerance = 0.0;

  bool converged() const { return status == to_string(SolveStatus::Converged); }
  double final_rel_res() const { return trace.empty() ? 0.0 : trace.back().rel_res; }

  bool operator==(const RunReport&) const = default;
};

// JSON conversion.

inline void to_json(nlohmann::json& j, const ProblemSpec& s) {
  j = {{"family", to_string(s.family)}, {"n", s.n},         {"p", s.p},
       {"q", s.q},                      {"gamma", s.gamma}, {"seed", s.seed},
       {"sign_consistency", s.sign_consistency},            {"file", s.file}};
}

inline void from_json(const nlohmann::json& j, ProblemSpec& s) {
  s.family = family_from_string(j.at("family").get<std::string>());
  j.at("n").get_to(s.n);
  j.at("p").get_to(s.p);
  j.at("q").get_to(s.q);
  j.at("gamma").get_to(s.gamma);
  j.at("seed").get_to(s.seed);
  j.at("sign_consistency").get_to(s.sign_consistency);
  j.at("file").get_to(s.file);
}

inline void to_json(nlohmann::json& j, const RunConfig& c) {
  j = {{"tol", c.tol},         {"max_outer", c.max_outer},     {"max_inner", c.max_inner},
       {"eta_bar", c.eta_bar}, {"alpha", c.alpha},             {"line_search", c.line_search},
       {"trunc_tol", c.trunc_tol}};
}

inline void from_json(const nlohmann::json& j, RunConfig& c) {
  j.at("tol").get_to(c.tol);
  j.at("max_outer").get_to(c.max_outer);
  j.at("max_inner").get_to(c.max_inner);
  j.at("eta_bar").get_to(c.eta_bar);
  j.at("alpha").get_to(c.alpha);
  j.at("line_search").get_to(c.line_search);
  j.at("trunc_tol").get_to(c.trunc_tol);
}

inline void to_json(nlohmann::json& j, const TraceRow& r) {
  j = {{"k", r.k},         {"res", r.res},           {"rel_res", r.rel_res},
       {"lambda", r.lambda}, {"inner_its", r.inner_its}, {"rank", r.rank}};
}

inline void from_json(const nlohmann::json& j, TraceRow& r) {
  j.at("k").get_to(r.k);
  j.at("res").get_to(r.res);
  j.at("rel_res").get_to(r.rel_res);
  j.at("lambda").get_to(r.lambda);
  j.at("inner_its").get_to(r.inner_its);
  j.at("rank").get_to(r.rank);
}

inline void to_json(nlohmann::json& j, const RunReport& r) {
  j = {{"spec", r.spec},
       {"solver", r.solver},
       {"config", r.config},
       {"trace", r.trace},
       {"status", r.status},
       {"wall_time_s", r.wall_time_s},
       {"mem_dim", r.mem_dim},
       {"solution_rank", r.solution_rank},
       {"avg_inner", r.avg_inner},
       {"rel_error", r.rel_error ? nlohmann::json(*r.rel_error) : nlohmann::json(nullptr)},
       {"message", r.message},
       {"warnings", r.warnings},
       {"assumption1", r.assumption1},
       {"problem_note", r.problem_note},
       {"failed_inner_residuals", r.failed_inner_residuals},
       {"failed_inner_tolerance", r.failed_inner_tolerance}};
}

inline void from_json(const nlohmann::json& j, RunReport& r) {
  j.at("spec").get_to(r.spec);
  j.at("solver").get_to(r.solver);
  j.at("config").get_to(r.config);
  j.at("trace").get_to(r.trace);
  j.at("status").get_to(r.status);
  j.at("wall_time_s").get_to(r.wall_time_s);
  j.at("mem_dim").get_to(r.mem_dim);
  j.at("solution_rank").get_to(r.solution_rank);
  j.at("avg_inner").get_to(r.avg_inner);
  if (j.at("rel_error").is_null()) r.rel_error.reset();
  else r.rel_error = j.at("rel_error").get<double>();
  j.at("message").get_to(r.message);
  j.at("warnings").get_to(r.warnings);
  j.at("assumption1").get_to(r.assumption1);
  j.at("problem_note").get_to(r.problem_note);
  j.at("failed_inner_residuals").get_to(r.failed_inner_residuals);
  j.at("failed_inner_tolerance").get_to(r.failed_inner_tolerance);
}

enum class ReportFormat { Json, Csv };

inline ReportFormat format_from_string(const std::string& s) {
  if (s == "json") return ReportFormat::Json;
  if (s == "csv") return ReportFormat::Csv;
  throw Error("unknown report format '" + s + "'");
}

namespace detail {

inline std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline std::string report_to_json(const RunReport& r) { return nlohmann::json(r).dump(2); }

inline RunReport report_from_json(const std::string& text) {
  try {
    return nlohmann::json::parse(text).get<RunReport>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("invalid report JSON: ") + e.what());
  } catch (const Error& e) {
    throw IoError(std::string("invalid report JSON: ") + e.what());
  }
}

/// One row per trace record: k,res,rel_res,lambda,inner_its,rank.
inline std::string report_to_csv(const RunReport& r) {
  std::ostringstream out;
  out << "k,res,rel_res,lambda,inner_its,rank\n";
  for (const auto& t : r.trace)
    out << t.k << ',' << detail::fmt_double(t.res) << ',' << detail::fmt_double(t.rel_res) << ','
        << detail::fmt_double(t.lambda) << ',' << t.inner_its << ',' << t.rank << '\n';
  return out.str();
}

/// Inner residual history of a failed inner solve: m,res,rel_res,threshold,
/// where rel_res is relative to the first entry.
inline std::string failed_inner_to_csv(const RunReport& r) {
  std::ostringstream out;
  out << "m,res,rel_res,threshold\n";
  const auto& h = r.failed_inner_residuals;
  const double ref = h.empty() || h.front() == 0.0 ? 1.0 : h.front();
  for (std::size_t m = 0; m < h.size(); ++m)
    out << m + 1 << ',' << detail::fmt_double(h[m]) << ',' << detail::fmt_double(h[m] / ref) << ','
        << detail::fmt_double(r.failed_inner_tolerance) << '\n';
  return out.str();
}

/// File stem identifying a run: family, sizes, seed, solver and line search.
inline std::string report_stem(const RunReport& r) {
  std::string s = std::string(to_string(r.spec.family)) + "_n" + std::to_string(r.spec.n);
  if (is_lowrank(r.spec.family)) s += "_p" + std::to_string(r.spec.p) + "_q" + std::to_string(r.spec.q);
  s += "_seed" + std::to_string(r.spec.seed) + "_" + r.solver + "_" + r.config.line_search;
  return s;
}

/// Writes the report to `dir` as <stem>.json or <stem>.csv (plus
/// <stem>_inner.csv when an inner solve failed); returns the main path.
inline std::string emit_report(const RunReport& r, ReportFormat format, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
  const std::string stem = report_stem(r);
  const auto write = [](const std::string& path, const std::string& text) {
    auto out = detail::open_out(path);
    out << text;
    if (!out) throw IoError("write failed for '" + path + "'");
  };
  if (format == ReportFormat::Json) {
    const std::string path = (fs::path(dir) / (stem + ".json")).string();
    write(path, report_to_json(r) + "\n");
    return path;
  }
  const std::string path = (fs::path(dir) / (stem + ".csv")).string();
  write(path, report_to_csv(r));
  if (!r.failed_inner_residuals.empty()) write((fs::path(dir) / (stem + "_inner.csv")).string(), failed_inner_to_csv(r));
  return path;
}

inline RunReport read_report(const std::string& path) {
  auto in = detail::open_in(path);
  std::stringstream buf;
  buf << in.rdbuf();
  return report_from_json(buf.str());
}

inline GeneratedProblem generate(const ProblemSpec& spec) {
  spec.validate();
  switch (spec.family) {
    case Family::Ex1Dense: return generate_ex1(spec.n, spec.gamma, false, spec.p, spec.q, spec.seed);
    case Family::Ex1LowRank:
      return generate_ex1(spec.n, spec.gamma, true, spec.p, spec.q, spec.seed, spec.sign_consistency);
    case Family::Ex2Dense: return generate_ex2_dense(spec.n, spec.seed);
    case Family::Ex2LowRank: return generate_ex2_lowrank(spec.n, spec.p, spec.q, spec.seed, spec.sign_consistency);
    case Family::File: return load_problem(spec.file);
  }
  throw Error("generate: unknown family");
}

namespace detail {

inline LineSearch dense_line_search(const std::string& s) {
  if (s == "none") return LineSearch::Off;
  if (s == "exact") return LineSearch::Exact;
  throw Error("dense solver: line search must be 'none' or 'exact', got '" + s + "'");
}

inline StepRule lowrank_line_search(const std::string& s) {
  if (s == "none") return StepRule::Unit;
  if (s == "inexact") return StepRule::Theta;
  if (s == "exact") return StepRule::Exact;
  throw Error("low-rank solver: line search must be 'none', 'inexact' or 'exact', got '" + s + "'");
}

inline void validate_config(const RunConfig& c, SolverKind solver) {
  if (!(c.tol > 0.0)) throw Error("tol must be positive");
  if (c.max_outer < 1) throw Error("max-outer must be at least 1");
  if (solver == SolverKind::DenseNewton) {
    dense_line_search(c.line_search);
    return;
  }
  lowrank_line_search(c.line_search);
  if (c.max_inner < 1) throw Error("max-inner must be at least 1");
  InexactNewtonConfig probe;
  probe.eps = c.tol;
  probe.eta_bar = c.eta_bar;
  probe.alpha = c.alpha;
  probe.trunc_tol = c.trunc_tol;
  probe.validate();
}

inline void fill_trace(RunReport& r, const SolveReport& rep) {
  for (const auto& it : rep.iterations)
    r.trace.push_back({it.k, it.residual_norm, it.relative_residual, it.step_size, it.inner_iterations, it.iterate_rank});
  r.status = to_string(rep.status);
  r.wall_time_s = rep.wall_time;
  r.mem_dim = rep.memory_dim;
  r.message = rep.message;
  r.warnings.insert(r.warnings.end(), rep.warnings.begin(), rep.warnings.end());
  r.failed_inner_residuals = rep.failed_inner_residuals;
  r.failed_inner_tolerance = rep.failed_inner_tolerance;
}

}  // namespace detail

/// Checks spec and config; throws Error on invalid input.
inline void validate_run(const ProblemSpec& spec, SolverKind solver, const RunConfig& config) {
  spec.validate();
  detail::validate_config(config, solver);
  if (solver == SolverKind::LowRankNewton && (spec.family == Family::Ex1Dense || spec.family == Family::Ex2Dense))
    throw Error("the low-rank solver needs a low-rank problem family");
}

/// Generates (or loads) the problem, runs the solver and returns the report.
/// Solver failures and exceptions are recorded in the status; the report is
/// written to `out_dir` when it is non-empty. Invalid input throws Error and
/// unreadable problem files throw IoError.
inline RunReport run_experiment(const ProblemSpec& spec, SolverKind solver, const RunConfig& config,
                                const std::string& out_dir = "", ReportFormat format = ReportFormat::Json) {
  validate_run(spec, solver, config);
  RunReport r;
  r.spec = spec;
  r.solver = to_string(solver);
  r.config = config;
  const auto started = std::chrono::steady_clock::now();
  try {
    GeneratedProblem g = generate(spec);
    if (spec.family == Family::File) r.spec.n = g.order();
    r.assumption1 = g.assumption1;
    r.problem_note = g.note;
    if (solver == SolverKind::DenseNewton) {
      if (!g.dense) {
        if (g.order() > 5000) throw Error("dense solver: problem too large to densify (n > 5000)");
        TRiccatiProblem p = g.lowrank->to_dense();
        p.allow_unverified = true;
        g.dense = std::move(p);
      }
      DenseSolveOptions opts;
      opts.tol = config.tol;
      opts.max_iter = config.max_outer;
      opts.line_search = detail::dense_line_search(config.line_search);
      const DenseSolution sol = solve_newton(*g.dense, opts);
      detail::fill_trace(r, sol.report);
      r.solution_rank = Eigen::ColPivHouseholderQR<DenseMatrix>(sol.x).rank();
      if (!r.trace.empty()) r.trace.back().rank = r.solution_rank;
      if (g.x_exact) r.rel_error = (sol.x - *g.x_exact).norm() / g.x_exact->norm();
    } else {
      if (!g.lowrank) throw Error("the low-rank solver needs a low-rank problem");
      InexactNewtonConfig cfg;
      cfg.eps = config.tol;
      cfg.eta_bar = config.eta_bar;
      cfg.alpha = config.alpha;
      cfg.max_outer = config.max_outer;
      cfg.m_max = config.max_inner;
      cfg.trunc_tol = config.trunc_tol;
      cfg.step_rule = detail::lowrank_line_search(config.line_search);
      const LowRankSolution sol = solve_inexact_newton(*g.lowrank, cfg);
      detail::fill_trace(r, sol.report);
      r.solution_rank = sol.x.rank();
      r.avg_inner = average_inner_iterations(sol.report);
    }
  } catch (const IoError&) {
    throw;
  } catch (const Error& e) {
    r.status = "Error";
    r.message = e.what();
    r.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  } catch (const std::exception& e) {
    r.status = "Error";
    r.message = std::string("unexpected failure: ") + e.what();
    r.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  }
  if (!out_dir.empty()) emit_report(r, format, out_dir);
  return r;
}

}  // namespace tric
