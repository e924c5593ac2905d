#pragma once

// Matrix Market reading and writing, and problem manifests.
//
// A manifest is a JSON object naming Matrix Market files relative to the
// manifest's directory:
//   {"kind": "lowrank", "A": ..., "D": ..., "B1": ..., "B2": ..., "C1": ..., "C2": ...}
//     with B = B1 B2^T and C = C1 C2^T (all factors n x p or n x q), or
//   {"kind": "dense", "A": ..., "D": ..., "B": ..., "C": ..., "X_exact": ... (optional)}.

#include <cctype>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "tric/generators.hpp"
#include "tric/lowrank_core.hpp"
#include "tric/riccati_dense.hpp"
#include "tric/types.hpp"

namespace tric {

namespace detail {

enum class MmSymmetry { General, Symmetric, SkewSymmetric };

struct MmHeader {
  bool coordinate = true;
  bool pattern = false;
  MmSymmetry symmetry = MmSymmetry::General;
  Index rows = 0, cols = 0, entries = 0;
};

inline std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

inline MmHeader read_mm_header(std::istream& in, const std::string& path) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("matrix market: empty file " + path);
  std::istringstream banner(line);
  std::string tag, object, format, field, symmetry;
  banner >> tag >> object >> format >> field >> symmetry;
  if (tag != "%%MatrixMarket" || lower(object) != "matrix")
    throw IoError("matrix market: missing '%%MatrixMarket matrix' banner in " + path);
  MmHeader h;
  format = lower(format);
  field = lower(field);
  symmetry = lower(symmetry);
  if (format == "coordinate") h.coordinate = true;
  else if (format == "array") h.coordinate = false;
  else throw IoError("matrix market: unsupported format '" + format + "' in " + path);
  if (field == "pattern") h.pattern = true;
  else if (field != "real" && field != "integer" && field != "double")
    throw IoError("matrix market: unsupported field '" + field + "' in " + path);
  if (h.pattern && !h.coordinate) throw IoError("matrix market: pattern requires coordinate format in " + path);
  if (symmetry == "general") h.symmetry = MmSymmetry::General;
  else if (symmetry == "symmetric") h.symmetry = MmSymmetry::Symmetric;
  else if (symmetry == "skew-symmetric") h.symmetry = MmSymmetry::SkewSymmetric;
  else throw IoError("matrix market: unsupported symmetry '" + symmetry + "' in " + path);

  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '%') continue;
    std::istringstream size(line);
    if (h.coordinate) size >> h.rows >> h.cols >> h.entries;
    else size >> h.rows >> h.cols;
    if (!size || h.rows < 0 || h.cols < 0 || h.entries < 0)
      throw IoError("matrix market: malformed size line in " + path);
    if (h.symmetry != MmSymmetry::General && h.rows != h.cols)
      throw IoError("matrix market: symmetric storage of a non-square matrix in " + path);
    return h;
  }
  throw IoError("matrix market: missing size line in " + path);
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return in;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  return out;
}

inline std::vector<Eigen::Triplet<double>> read_mm_entries(std::istream& in, const MmHeader& h,
                                                           const std::string& path) {
  std::vector<Eigen::Triplet<double>> trip;
  const auto add = [&](Index i, Index j, double v) {
    trip.emplace_back(i, j, v);
    if (i != j && h.symmetry == MmSymmetry::Symmetric) trip.emplace_back(j, i, v);
    if (i != j && h.symmetry == MmSymmetry::SkewSymmetric) trip.emplace_back(j, i, -v);
  };
  if (h.coordinate) {
    trip.reserve(static_cast<std::size_t>(h.entries));
    for (Index e = 0; e < h.entries; ++e) {
      Index i = 0, j = 0;
      double v = 1.0;
      if (!(in >> i >> j) || (!h.pattern && !(in >> v)))
        throw IoError("matrix market: expected " + std::to_string(h.entries) + " entries in " + path);
      if (i < 1 || j < 1 || i > h.rows || j > h.cols) throw IoError("matrix market: index out of range in " + path);
      add(i - 1, j - 1, v);
    }
  } else {
    // Column-major; symmetric storage lists the lower triangle only.
    for (Index j = 0; j < h.cols; ++j) {
      const Index first = h.symmetry == MmSymmetry::General ? 0 : (h.symmetry == MmSymmetry::Symmetric ? j : j + 1);
      for (Index i = first; i < h.rows; ++i) {
        double v = 0.0;
        if (!(in >> v)) throw IoError("matrix market: too few array entries in " + path);
        if (v != 0.0) add(i, j, v);
      }
    }
  }
  return trip;
}

}  // namespace detail

/// Reads a real Matrix Market file (coordinate or array; general, symmetric or
/// skew-symmetric). Repeated coordinate entries are summed.
inline SparseMatrix read_matrix_market_sparse(const std::string& path) {
  auto in = detail::open_in(path);
  const auto h = detail::read_mm_header(in, path);
  const auto trip = detail::read_mm_entries(in, h, path);
  SparseMatrix m(h.rows, h.cols);
  m.setFromTriplets(trip.begin(), trip.end());
  m.makeCompressed();
  return m;
}

inline DenseMatrix read_matrix_market_dense(const std::string& path) {
  return DenseMatrix(read_matrix_market_sparse(path));
}

/// Coordinate general format, full double precision.
inline void write_matrix_market(const std::string& path, const SparseMatrix& m) {
  auto out = detail::open_out(path);
  out << "%%MatrixMarket matrix coordinate real general\n" << m.rows() << ' ' << m.cols() << ' ' << m.nonZeros()
      << '\n';
  for (Index j = 0; j < m.outerSize(); ++j)
    for (SparseMatrix::InnerIterator it(m, j); it; ++it) out << it.row() + 1 << ' ' << it.col() + 1 << ' ' << it.value() << '\n';
  if (!out) throw IoError("write failed for '" + path + "'");
}

/// Array general format (column-major), full double precision.
inline void write_matrix_market(const std::string& path, const DenseMatrix& m) {
  auto out = detail::open_out(path);
  out << "%%MatrixMarket matrix array real general\n" << m.rows() << ' ' << m.cols() << '\n';
  for (Index j = 0; j < m.cols(); ++j)
    for (Index i = 0; i < m.rows(); ++i) out << m(i, j) << '\n';
  if (!out) throw IoError("write failed for '" + path + "'");
}

namespace detail {

inline nlohmann::json read_json_file(const std::string& path) {
  auto in = open_in(path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("invalid JSON in '" + path + "': " + e.what());
  }
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed for '" + path + "'");
}

inline std::string manifest_entry(const nlohmann::json& m, const char* key, const std::filesystem::path& dir,
                                  const std::string& path) {
  if (!m.contains(key) || !m[key].is_string())
    throw IoError("manifest '" + path + "' lacks the string entry '" + key + "'");
  return (dir / m[key].get<std::string>()).string();
}

}  // namespace detail

/// Loads the problem named by a manifest; the solvability audit runs for n <= 200.
inline GeneratedProblem load_problem(const std::string& manifest_path) {
  const nlohmann::json m = detail::read_json_file(manifest_path);
  if (!m.is_object()) throw IoError("manifest '" + manifest_path + "' is not a JSON object");
  const std::filesystem::path dir = std::filesystem::path(manifest_path).parent_path();
  const auto file = [&](const char* key) { return detail::manifest_entry(m, key, dir, manifest_path); };
  const std::string kind = m.value("kind", "");
  GeneratedProblem g;
  g.note = "loaded from " + manifest_path;
  try {
    if (kind == "lowrank") {
      g.lowrank = LowRankTRiccatiProblem(read_matrix_market_sparse(file("A")), read_matrix_market_sparse(file("D")),
                                         read_matrix_market_dense(file("B1")), read_matrix_market_dense(file("B2")),
                                         read_matrix_market_dense(file("C1")).transpose(),
                                         read_matrix_market_dense(file("C2")).transpose());
    } else if (kind == "dense") {
      TRiccatiProblem p;
      p.a = read_matrix_market_dense(file("A"));
      p.d = read_matrix_market_dense(file("D"));
      p.b = read_matrix_market_dense(file("B"));
      p.c = read_matrix_market_dense(file("C"));
      p.allow_unverified = true;
      detail::validate_problem(p, "load_problem");
      g.dense = std::move(p);
      if (m.contains("X_exact")) g.x_exact = read_matrix_market_dense(file("X_exact"));
    } else {
      throw IoError("manifest '" + manifest_path + "': kind must be \"dense\" or \"lowrank\"");
    }
  } catch (const ShapeError& e) {
    throw IoError("manifest '" + manifest_path + "': " + e.what());
  }
  detail::audit(g);
  return g;
}

/// Writes the problem's matrices and a manifest named `stem`.json into `dir`;
/// returns the manifest path.
inline std::string save_problem(const GeneratedProblem& g, const std::string& dir, const std::string& stem) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
  nlohmann::json m;
  const auto put = [&](const char* key, const auto& mat) {
    const std::string name = stem + "_" + key + ".mtx";
    write_matrix_market((fs::path(dir) / name).string(), mat);
    m[key] = name;
  };
  if (g.lowrank) {
    m["kind"] = "lowrank";
    put("A", g.lowrank->a());
    put("D", g.lowrank->d());
    put("B1", g.lowrank->b1());
    put("B2", g.lowrank->b2());
    put("C1", DenseMatrix(g.lowrank->c1().transpose()));
    put("C2", DenseMatrix(g.lowrank->c2().transpose()));
  } else if (g.dense) {
    m["kind"] = "dense";
    put("A", g.dense->a);
    put("D", g.dense->d);
    put("B", g.dense->b);
    put("C", g.dense->c);
    if (g.x_exact) put("X_exact", *g.x_exact);
  } else {
    throw Error("save_problem: empty problem");
  }
  m["note"] = g.note;
  const std::string path = (fs::path(dir) / (stem + ".json")).string();
  detail::write_json_file(path, m);
  return path;
}

}  // namespace tric
