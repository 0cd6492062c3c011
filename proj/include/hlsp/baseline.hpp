#pragma once

#include <Eigen/SVD>

#include "hlsp/report.hpp"
#include "hlsp/types.hpp"

namespace hlsp {

/// Orthonormal basis of the numerical nullspace of a stacked constraint matrix.
struct NullspaceBasis {
  Matrix N;    ///< n_x columns-of-basis matrix (n_x x n_r)
  Index rank;  ///< numerical rank of the stacked matrix
};

/// SVD-based nullspace at relative singular-value threshold `tol`.
/// An empty or zero matrix yields the identity basis.
inline NullspaceBasis nullspace_basis(const Matrix& stacked, double tol = 1e-10) {
  const Index n = stacked.cols();
  if (stacked.rows() == 0 || stacked.cwiseAbs().maxCoeff() == 0.0)
    return {Matrix::Identity(n, n), 0};
  Eigen::JacobiSVD<Matrix> svd(stacked, Eigen::ComputeFullV);
  const Vector sv = svd.singularValues();
  Index rank = 0;
  for (Index i = 0; i < sv.size(); ++i)
    if (sv[i] > tol * sv[0]) ++rank;
  return {svd.matrixV().rightCols(n - rank), rank};
}

/// Minimum-norm least-squares solve via SVD with relative rank threshold.
inline Vector svd_least_squares(const Matrix& A, const Vector& rhs, double tol = 1e-10) {
  if (A.rows() == 0 || A.cols() == 0) return Vector::Zero(A.cols());
  Eigen::JacobiSVD<Matrix> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector sv = svd.singularValues();
  const double cut = sv.size() ? tol * sv[0] : 0.0;
  Vector y = svd.matrixU().transpose() * rhs;
  for (Index i = 0; i < sv.size(); ++i) y[i] = sv[i] > cut ? y[i] / sv[i] : 0.0;
  return svd.matrixV() * y;
}

struct BaselineOptions {
  double rank_tol = 1e-10;
};

/// Sequential solver: each level is minimized inside the nullspace of all
/// previously processed constraint rows, so higher-priority optima are frozen
/// exactly. Rank-revealing steps stop the descent once the accumulated rows
/// span the variable space. Coupling multipliers are recovered afterwards from
/// per-level stationarity by least squares.
inline HlspSolution solve_sequential(const HlspProblem& problem, const BaselineOptions& opts = {}) {
  require_valid(problem);
  const Index p = problem.num_levels();
  const Index n = problem.n_x;

  HlspSolution sol;
  sol.x = Vector::Zero(n);
  sol.v.resize(static_cast<std::size_t>(p));
  sol.lambda.resize(static_cast<std::size_t>(p));

  Matrix basis = Matrix::Identity(n, n);
  Matrix processed(0, n);
  for (Index l = 0; l < p; ++l) {
    const auto& lv = problem.levels[static_cast<std::size_t>(l)];
    if (basis.cols() > 0) {
      const Matrix Ar = lv.A * basis;
      const Vector rhs = lv.b - lv.A * sol.x;
      sol.x += basis * svd_least_squares(Ar, rhs, opts.rank_tol);

      Matrix grown(processed.rows() + lv.rows(), n);
      grown << processed, lv.A;
      processed = std::move(grown);
      basis = nullspace_basis(processed, opts.rank_tol).N;
    }
  }
  for (Index l = 0; l < p; ++l) {
    const auto& lv = problem.levels[static_cast<std::size_t>(l)];
    sol.v[static_cast<std::size_t>(l)] = lv.A * sol.x - lv.b;
  }

  double kkt_sq = 0.0;
  for (Index l = 0; l < p - 1; ++l) {
    const auto& lv = problem.levels[static_cast<std::size_t>(l)];
    const Vector g = lv.A.transpose() * sol.v[static_cast<std::size_t>(l)];
    if (l >= 1 && l <= p - 2) {
      const Matrix prefix_t = problem.prefix_matrix(l).transpose();
      sol.lambda[static_cast<std::size_t>(l)] = svd_least_squares(prefix_t, -g, opts.rank_tol);
      kkt_sq += (prefix_t * sol.lambda[static_cast<std::size_t>(l)] + g).squaredNorm();
    } else {
      kkt_sq += g.squaredNorm();
    }
  }

  sol.per_level_objective = objective_per_level(problem, sol.x);
  sol.kkt_residual = std::sqrt(kkt_sq);
  return sol;
}

/// Baseline run wrapped in the shared report schema.
inline SolveReport solve_baseline(const HlspProblem& problem, const BaselineOptions& opts = {}) {
  Stopwatch clock;
  HlspSolution sol = solve_sequential(problem, opts);
  SolveReport rep;
  rep.solver = "baseline";
  rep.converged = true;
  rep.x = sol.x;
  rep.v = sol.v;
  rep.lambda = sol.lambda;
  rep.per_level_objective = sol.per_level_objective;
  rep.kkt_residual = sol.kkt_residual;
  rep.iterations = static_cast<int>(problem.num_levels());
  rep.wall_time_ms = clock.elapsed_ms();
  return rep;
}

}  // namespace hlsp
