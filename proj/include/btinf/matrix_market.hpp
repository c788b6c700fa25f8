#ifndef BTINF_MATRIX_MARKET_HPP
#define BTINF_MATRIX_MARKET_HPP

// Dense reader/writer for Matrix Market files: coordinate or array layout,
// real or integer field, general or symmetric symmetry. Coordinate
// duplicates are summed. Writes always use array general at %.17g.

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <string>

#include "btinf/inference.hpp"
#include "btinf/linalg.hpp"

namespace btinf {

namespace detail {

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

}  // namespace detail

inline Matrix read_matrix_market(std::istream& in, const std::string& name = "<stream>") {
  std::string line;
  int lineno = 0;
  auto where = [&] { return name + ":" + std::to_string(lineno); };
  if (!std::getline(in, line)) fail(ErrorCode::parse_error, name + ": empty file");
  ++lineno;
  std::istringstream banner(line);
  std::string tag, object, layout, field, symmetry;
  banner >> tag >> object >> layout >> field >> symmetry;
  if (tag != "%%MatrixMarket" || detail::lower(object) != "matrix") {
    fail(ErrorCode::parse_error, where() + ": missing %%MatrixMarket matrix banner");
  }
  layout = detail::lower(layout);
  field = detail::lower(field);
  symmetry = detail::lower(symmetry);
  if (layout != "coordinate" && layout != "array") fail(ErrorCode::parse_error, where() + ": unknown layout " + layout);
  if (field != "real" && field != "integer" && field != "double") {
    fail(ErrorCode::parse_error, where() + ": unsupported field " + field);
  }
  if (symmetry != "general" && symmetry != "symmetric") {
    fail(ErrorCode::parse_error, where() + ": unsupported symmetry " + symmetry);
  }
  const bool sym = symmetry == "symmetric";

  auto next_data_line = [&](std::string& out) {
    while (std::getline(in, out)) {
      ++lineno;
      const std::string t = detail::trim(out);
      if (t.empty() || t[0] == '%') continue;
      out = t;
      return true;
    }
    return false;
  };

  if (!next_data_line(line)) fail(ErrorCode::parse_error, where() + ": missing size line");
  std::istringstream size_line(line);
  long rows = -1, cols = -1, nnz = -1;
  size_line >> rows >> cols;
  if (layout == "coordinate") size_line >> nnz;
  if (size_line.fail() || rows <= 0 || cols <= 0 || (layout == "coordinate" && nnz < 0)) {
    fail(ErrorCode::parse_error, where() + ": bad size line '" + line + "'");
  }
  if (sym && rows != cols) fail(ErrorCode::parse_error, where() + ": symmetric matrix must be square");

  Matrix M = Matrix::Zero(rows, cols);
  auto value = [&](const std::string& tok) { return detail::parse_double(tok, where()); };

  if (layout == "coordinate") {
    for (long e = 0; e < nnz; ++e) {
      if (!next_data_line(line)) fail(ErrorCode::parse_error, where() + ": expected " + std::to_string(nnz) + " entries");
      std::istringstream ls(line);
      long i = 0, j = 0;
      std::string tok;
      ls >> i >> j >> tok;
      if (ls.fail() || i < 1 || i > rows || j < 1 || j > cols) {
        fail(ErrorCode::parse_error, where() + ": bad entry '" + line + "'");
      }
      const double v = value(tok);
      M(i - 1, j - 1) += v;
      if (sym && i != j) M(j - 1, i - 1) += v;
    }
  } else {
    for (long j = 0; j < cols; ++j) {
      for (long i = sym ? j : 0; i < rows; ++i) {
        if (!next_data_line(line)) fail(ErrorCode::parse_error, where() + ": too few array entries");
        const double v = value(line);
        M(i, j) = v;
        if (sym) M(j, i) = v;
      }
    }
  }
  if (next_data_line(line)) fail(ErrorCode::parse_error, where() + ": trailing data '" + line + "'");
  if (!M.allFinite()) fail(ErrorCode::non_finite, name + ": non-finite entries");
  return M;
}

inline Matrix read_matrix_market(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io_error, "cannot open " + path);
  return read_matrix_market(in, path);
}

inline void write_matrix_market(std::ostream& out, const Matrix& M) {
  out << "%%MatrixMarket matrix array real general\n";
  out << M.rows() << ' ' << M.cols() << '\n';
  for (Eigen::Index j = 0; j < M.cols(); ++j)
    for (Eigen::Index i = 0; i < M.rows(); ++i) out << detail::fmt17(M(i, j)) << '\n';
}

inline void write_matrix_market(const std::string& path, const Matrix& M) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::io_error, "cannot write " + path);
  write_matrix_market(out, M);
  if (!out) fail(ErrorCode::io_error, "write failed for " + path);
}

}  // namespace btinf

#endif  // BTINF_MATRIX_MARKET_HPP
