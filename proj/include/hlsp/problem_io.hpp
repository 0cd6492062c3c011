#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "hlsp/types.hpp"

namespace hlsp {

namespace detail {

/// 17 significant digits uniquely identify a double, so text round-trips are exact.
inline std::string format_decimal(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::vector<double> parse_decimal_line(const std::string& line, const char* what) {
  std::istringstream ss(line);
  std::vector<double> out;
  std::string tok;
  while (ss >> tok) {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      throw Error(Error::Code::parse_error, std::string("bad number in ") + what + ": " + tok);
    }
    if (used != tok.size())
      throw Error(Error::Code::parse_error, std::string("bad number in ") + what + ": " + tok);
    out.push_back(v);
  }
  return out;
}

inline std::string next_content_line(std::istream& in, const char* what) {
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") != std::string::npos) return line;
  }
  throw Error(Error::Code::parse_error, std::string("unexpected end of file, expected ") + what);
}

}  // namespace detail

inline void save_problem(const HlspProblem& problem, std::ostream& out) {
  out << problem.num_levels() << ' ' << problem.n_x << '\n';
  for (const auto& lv : problem.levels) {
    out << lv.rows() << '\n';
    for (Index i = 0; i < lv.rows(); ++i) {
      for (Index j = 0; j < problem.n_x; ++j) {
        if (j) out << ' ';
        out << detail::format_decimal(lv.A(i, j));
      }
      out << '\n';
    }
    for (Index i = 0; i < lv.rows(); ++i) {
      if (i) out << ' ';
      out << detail::format_decimal(lv.b[i]);
    }
    out << '\n';
  }
}

inline void save_problem(const HlspProblem& problem, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(Error::Code::io_error, "cannot open for writing: " + path);
  save_problem(problem, out);
  if (!out) throw Error(Error::Code::io_error, "write failed: " + path);
}

inline HlspProblem load_problem(std::istream& in) {
  const std::string header = detail::next_content_line(in, "header 'p n_x'");
  const auto head = detail::parse_decimal_line(header, "header");
  if (head.size() != 2)
    throw Error(Error::Code::parse_error, "header must contain exactly 'p n_x'");
  const Index p = static_cast<Index>(head[0]);
  const Index n_x = static_cast<Index>(head[1]);
  if (p < 1 || n_x < 1) throw Error(Error::Code::parse_error, "non-positive dimensions in header");

  HlspProblem problem;
  problem.n_x = n_x;
  problem.levels.resize(static_cast<std::size_t>(p));
  for (Index l = 0; l < p; ++l) {
    const auto mline = detail::parse_decimal_line(detail::next_content_line(in, "level row count"),
                                                  "level row count");
    if (mline.size() != 1) throw Error(Error::Code::parse_error, "level row count line malformed");
    const Index m = static_cast<Index>(mline[0]);
    if (m < 1) throw Error(Error::Code::parse_error, "level row count must be positive");

    Matrix A(m, n_x);
    for (Index i = 0; i < m; ++i) {
      const auto row = detail::parse_decimal_line(detail::next_content_line(in, "matrix row"),
                                                  "matrix row");
      if (static_cast<Index>(row.size()) != n_x)
        throw Error(Error::Code::dimension_mismatch,
                    "matrix row has " + std::to_string(row.size()) + " entries, expected " +
                        std::to_string(n_x));
      for (Index j = 0; j < n_x; ++j) A(i, j) = row[static_cast<std::size_t>(j)];
    }
    const auto bl =
        detail::parse_decimal_line(detail::next_content_line(in, "right-hand side"), "right-hand side");
    if (static_cast<Index>(bl.size()) != m)
      throw Error(Error::Code::dimension_mismatch,
                  "right-hand side has " + std::to_string(bl.size()) + " entries, expected " +
                      std::to_string(m));
    problem.levels[static_cast<std::size_t>(l)].A = A;
    problem.levels[static_cast<std::size_t>(l)].b =
        Eigen::Map<const Vector>(bl.data(), static_cast<Index>(bl.size()));
  }

  Validation v = validate_problem(problem);
  if (!v.ok) throw Error(v.code, v.message);
  return problem;
}

inline HlspProblem load_problem(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Error::Code::io_error, "cannot open for reading: " + path);
  return load_problem(in);
}

}  // namespace hlsp
