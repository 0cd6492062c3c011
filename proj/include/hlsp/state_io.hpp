#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include "hlsp/admm.hpp"
#include "hlsp/problem_io.hpp"

namespace hlsp {

namespace detail {

inline void write_vec(std::ostream& out, const Vector& v) {
  out << v.size();
  for (Index i = 0; i < v.size(); ++i) out << ' ' << format_decimal(v[i]);
  out << '\n';
}

inline Vector read_vec(std::istream& in) {
  const auto vals = parse_decimal_line(next_content_line(in, "state vector"), "state vector");
  if (vals.empty()) throw Error(Error::Code::parse_error, "state vector line malformed");
  const Index n = static_cast<Index>(vals[0]);
  if (static_cast<Index>(vals.size()) != n + 1)
    throw Error(Error::Code::parse_error, "state vector length mismatch");
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = vals[static_cast<std::size_t>(i) + 1];
  return v;
}

}  // namespace detail

/// Warm-start state serialization using the same decimal-text conventions as
/// problem files.
inline void save_admm_state(const AdmmState& s, std::ostream& out) {
  out << s.v.size() << ' ' << detail::format_decimal(s.rho) << ' ' << s.iter << '\n';
  detail::write_vec(out, s.x);
  detail::write_vec(out, s.x_tilde);
  auto group = [&](const std::vector<Vector>& g) {
    for (const auto& v : g) detail::write_vec(out, v);
  };
  group(s.v);
  group(s.lambda);
  group(s.z);
  group(s.lambda_tilde);
  group(s.mu);
  group(s.eta);
  group(s.phi);
  group(s.nu);
  out << s.theta.size();
  for (double t : s.theta) out << ' ' << detail::format_decimal(t);
  out << '\n';
}

inline void save_admm_state(const AdmmState& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(Error::Code::io_error, "cannot open for writing: " + path);
  save_admm_state(s, out);
}

inline AdmmState load_admm_state(std::istream& in) {
  const auto head =
      detail::parse_decimal_line(detail::next_content_line(in, "state header"), "state header");
  if (head.size() != 3) throw Error(Error::Code::parse_error, "state header malformed");
  const auto p = static_cast<std::size_t>(head[0]);
  AdmmState s;
  s.rho = head[1];
  s.iter = static_cast<long>(head[2]);
  s.x = detail::read_vec(in);
  s.x_tilde = detail::read_vec(in);
  auto group = [&](std::vector<Vector>& g) {
    g.resize(p);
    for (auto& v : g) v = detail::read_vec(in);
  };
  group(s.v);
  group(s.lambda);
  group(s.z);
  group(s.lambda_tilde);
  group(s.mu);
  group(s.eta);
  group(s.phi);
  group(s.nu);
  const Vector th = detail::read_vec(in);
  s.theta.assign(th.data(), th.data() + th.size());
  return s;
}

inline AdmmState load_admm_state(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Error::Code::io_error, "cannot open for reading: " + path);
  return load_admm_state(in);
}

}  // namespace hlsp
