#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace hlsp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Library-wide exception carrying a machine-checkable failure code.
class Error : public std::runtime_error {
public:
  enum class Code {
    dimension_mismatch,
    non_finite_entry,
    empty_hierarchy,
    invalid_argument,
    io_error,
    parse_error,
    not_positive_definite,
    schur_not_invertible,
    all_coefficients_zero,
    no_feasible_root,
    solve_failure,
    singular_kkt,
    singular_system,
    point_not_converged,
    max_iters_exceeded,
  };

  Error(Code code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
  Code code() const { return code_; }

private:
  Code code_;
};

/// One priority level: dense constraints A x - b = v.
struct LevelData {
  Matrix A;
  Vector b;

  Index rows() const { return A.rows(); }

  /// Half right-hand side, the center offset of the level's quadratic dual constraint.
  Vector b_hat() const { return 0.5 * b; }
};

/// An ordered hierarchy of least-squares levels over shared variables.
struct HlspProblem {
  std::vector<LevelData> levels;
  Index n_x = 0;

  Index num_levels() const { return static_cast<Index>(levels.size()); }

  Index level_rows(Index l) const { return levels[static_cast<std::size_t>(l)].rows(); }

  /// Rows accumulated by levels 0..l-1 (the dual dimension of level l's coupling block).
  Index dual_dim(Index l) const {
    Index n = 0;
    for (Index k = 0; k < l; ++k) n += level_rows(k);
    return n;
  }

  Index total_rows() const { return dual_dim(num_levels()); }

  /// All level matrices stacked top to bottom.
  Matrix stacked_matrix() const {
    Matrix S(total_rows(), n_x);
    Index r = 0;
    for (const auto& lv : levels) {
      S.middleRows(r, lv.rows()) = lv.A;
      r += lv.rows();
    }
    return S;
  }

  Vector stacked_b() const {
    Vector s(total_rows());
    Index r = 0;
    for (const auto& lv : levels) {
      s.segment(r, lv.rows()) = lv.b;
      r += lv.rows();
    }
    return s;
  }

  /// Stack of the matrices of levels 0..l-1 (empty for l = 0).
  Matrix prefix_matrix(Index l) const {
    Matrix S(dual_dim(l), n_x);
    Index r = 0;
    for (Index k = 0; k < l; ++k) {
      S.middleRows(r, level_rows(k)) = levels[static_cast<std::size_t>(k)].A;
      r += level_rows(k);
    }
    return S;
  }

  Vector prefix_b(Index l) const {
    Vector s(dual_dim(l));
    Index r = 0;
    for (Index k = 0; k < l; ++k) {
      s.segment(r, level_rows(k)) = levels[static_cast<std::size_t>(k)].b;
      r += level_rows(k);
    }
    return s;
  }
};

/// Outcome of structural validation; `ok` iff every invariant holds.
struct Validation {
  bool ok = true;
  Error::Code code = Error::Code::invalid_argument;
  std::string message;
};

inline Validation validate_problem(const HlspProblem& problem) {
  if (problem.levels.empty())
    return {false, Error::Code::empty_hierarchy, "hierarchy has no levels"};
  if (problem.n_x < 1)
    return {false, Error::Code::dimension_mismatch, "variable count must be positive"};
  for (Index l = 0; l < problem.num_levels(); ++l) {
    const auto& lv = problem.levels[static_cast<std::size_t>(l)];
    if (lv.A.rows() < 1)
      return {false, Error::Code::dimension_mismatch,
              "level " + std::to_string(l + 1) + " has no rows"};
    if (lv.A.cols() != problem.n_x)
      return {false, Error::Code::dimension_mismatch,
              "level " + std::to_string(l + 1) + " has " + std::to_string(lv.A.cols()) +
                  " columns, expected " + std::to_string(problem.n_x)};
    if (lv.b.size() != lv.A.rows())
      return {false, Error::Code::dimension_mismatch,
              "level " + std::to_string(l + 1) + " right-hand side length mismatch"};
    if (!lv.A.allFinite() || !lv.b.allFinite())
      return {false, Error::Code::non_finite_entry,
              "level " + std::to_string(l + 1) + " contains a non-finite entry"};
  }
  return {};
}

inline void require_valid(const HlspProblem& problem) {
  Validation v = validate_problem(problem);
  if (!v.ok) throw Error(v.code, v.message);
}

/// Per-level objective values [0.5 * ||A_l x - b_l||^2]_l.
inline Vector objective_per_level(const HlspProblem& problem, const Vector& x) {
  if (x.size() != problem.n_x)
    throw Error(Error::Code::dimension_mismatch, "objective_per_level: x has wrong size");
  Vector obj(problem.num_levels());
  for (Index l = 0; l < problem.num_levels(); ++l) {
    const auto& lv = problem.levels[static_cast<std::size_t>(l)];
    obj[l] = 0.5 * (lv.A * x - lv.b).squaredNorm();
  }
  return obj;
}

/// Converged primal/primal-dual point of a hierarchy.
///
/// `lambda[l]` is the coupling multiplier of level l against all earlier levels
/// (length dual_dim(l)); it is empty for l = 0 and for the last level.
struct HlspSolution {
  Vector x;
  std::vector<Vector> v;
  std::vector<Vector> lambda;
  Vector per_level_objective;
  double kkt_residual = 0.0;
};

}  // namespace hlsp
