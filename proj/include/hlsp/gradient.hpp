#pragma once

#include <Eigen/QR>

#include <cmath>
#include <vector>

#include "hlsp/ipm.hpp"
#include "hlsp/types.hpp"

namespace hlsp {

// ============================================================================
// Differential of the hierarchy's KKT system with respect to problem data
// ============================================================================

/// Column/row layout of the differential vector: dx, then per level below the
/// last its (dv, dmu, dtheta, deta) blocks, then the last level's (dv, dmu),
/// then the coupling blocks dlambda.
struct DifferentialLayout {
  Index n_x = 0, p = 0, dim = 0;
  std::vector<Index> m;
  std::vector<Index> v_off, mu_off, theta_off, eta_off, lambda_off, lambda_dim;
  Index x_off = 0, vp_off = 0, mup_off = 0;

  static DifferentialLayout build(const HlspProblem& problem) {
    DifferentialLayout L;
    L.n_x = problem.n_x;
    L.p = problem.num_levels();
    L.m.resize(static_cast<std::size_t>(L.p));
    for (Index l = 0; l < L.p; ++l) L.m[static_cast<std::size_t>(l)] = problem.level_rows(l);
    const auto lower = static_cast<std::size_t>(std::max<Index>(L.p - 1, 0));
    L.v_off.resize(lower);
    L.mu_off.resize(lower);
    L.theta_off.resize(lower);
    L.eta_off.resize(lower);
    L.lambda_off.assign(static_cast<std::size_t>(L.p), -1);
    L.lambda_dim.assign(static_cast<std::size_t>(L.p), 0);

    Index at = 0;
    L.x_off = at;
    at += L.n_x;
    for (Index l = 0; l <= L.p - 2; ++l) {
      const auto sl = static_cast<std::size_t>(l);
      L.v_off[sl] = at;
      at += L.m[sl];
      L.mu_off[sl] = at;
      at += L.m[sl];
      L.theta_off[sl] = at;
      at += 1;
      L.eta_off[sl] = at;
      at += L.n_x;
    }
    L.vp_off = at;
    at += L.m[static_cast<std::size_t>(L.p - 1)];
    L.mup_off = at;
    at += L.m[static_cast<std::size_t>(L.p - 1)];
    for (Index l = 1; l <= L.p - 2; ++l) {
      const auto sl = static_cast<std::size_t>(l);
      L.lambda_off[sl] = at;
      L.lambda_dim[sl] = problem.dual_dim(l);
      at += L.lambda_dim[sl];
    }
    L.dim = at;
    return L;
  }
};

/// KKT residual of an equality-constrained hierarchy point (complementarity in
/// product form), used to validate points before differentiating.
inline double kkt_point_residual(const HlspProblem& problem, const KktPoint& pt) {
  const Index p = problem.num_levels();
  double sq = 0.0;
  Vector kx = Vector::Zero(problem.n_x);
  for (Index l = 0; l < p; ++l)
    kx.noalias() +=
        problem.levels[static_cast<std::size_t>(l)].A.transpose() * pt.mu[static_cast<std::size_t>(l)];
  sq += kx.squaredNorm();
  for (Index l = 0; l <= p - 2; ++l) {
    const auto sl = static_cast<std::size_t>(l);
    const auto& lv = problem.levels[sl];
    sq += (-pt.mu[sl] + pt.theta[sl] * (2.0 * pt.v[sl] + lv.b) + lv.A * pt.eta[sl]).squaredNorm();
    sq += (lv.A * pt.x - lv.b - pt.v[sl]).squaredNorm();
    Vector keta = lv.A.transpose() * pt.v[sl];
    double g = pt.v[sl].dot(pt.v[sl] + lv.b);
    if (l >= 1) {
      keta.noalias() += problem.prefix_matrix(l).transpose() * pt.lambda[sl];
      g += pt.lambda[sl].dot(problem.prefix_b(l));
      sq += (pt.theta[sl] * problem.prefix_b(l) + problem.prefix_matrix(l) * pt.eta[sl])
                .squaredNorm();
    }
    sq += keta.squaredNorm();
    sq += (pt.theta[sl] * g) * (pt.theta[sl] * g);
  }
  const auto slp = static_cast<std::size_t>(p - 1);
  const auto& last = problem.levels[slp];
  sq += (pt.v[slp] - pt.mu[slp]).squaredNorm();
  sq += (last.A * pt.x - last.b - pt.v[slp]).squaredNorm();
  return std::sqrt(sq);
}

/// The assembled differential KKT matrix at a converged point, factorized once
/// for repeated sensitivity solves. Quadratic-constraint multipliers below
/// `theta_tol` are treated as inactive: their differential is pinned to zero,
/// the standard convention for strictly inactive constraints.
struct DifferentialSystem {
  DifferentialLayout layout;
  Matrix K;
  Eigen::CompleteOrthogonalDecomposition<Matrix> solver;
  double theta_tol = 1e-8;
};

inline DifferentialSystem assemble_differential(const HlspProblem& problem, const KktPoint& pt,
                                                double convergence_tol = 1e-6,
                                                double theta_tol = 1e-8) {
  require_valid(problem);
  const double res = kkt_point_residual(problem, pt);
  if (!(res <= convergence_tol))
    throw Error(Error::Code::point_not_converged,
                "point has KKT residual " + std::to_string(res));

  DifferentialSystem sys;
  sys.layout = DifferentialLayout::build(problem);
  sys.theta_tol = theta_tol;
  const auto& L = sys.layout;
  const Index p = L.p;
  Matrix K = Matrix::Zero(L.dim, L.dim);

  for (Index l = 0; l < p; ++l) {
    const auto sl = static_cast<std::size_t>(l);
    const auto& lv = problem.levels[sl];
    const Index mu_at = (l == p - 1) ? L.mup_off : L.mu_off[sl];
    const Index v_at = (l == p - 1) ? L.vp_off : L.v_off[sl];
    K.block(L.x_off, mu_at, L.n_x, lv.rows()) = lv.A.transpose();
    K.block(mu_at, L.x_off, lv.rows(), L.n_x) = lv.A;
    K.block(mu_at, v_at, lv.rows(), lv.rows()) = -Matrix::Identity(lv.rows(), lv.rows());
  }

  for (Index l = 0; l <= p - 2; ++l) {
    const auto sl = static_cast<std::size_t>(l);
    const auto& lv = problem.levels[sl];
    const Index m = lv.rows();
    const double theta = pt.theta[sl];
    const Vector grad = 2.0 * pt.v[sl] + lv.b;

    K.block(L.v_off[sl], L.v_off[sl], m, m) = 2.0 * theta * Matrix::Identity(m, m);
    K.block(L.v_off[sl], L.mu_off[sl], m, m) = -Matrix::Identity(m, m);
    K.block(L.v_off[sl], L.theta_off[sl], m, 1) = grad;
    K.block(L.v_off[sl], L.eta_off[sl], m, L.n_x) = lv.A;

    K.block(L.eta_off[sl], L.v_off[sl], L.n_x, m) = lv.A.transpose();

    double g = pt.v[sl].dot(pt.v[sl] + lv.b);
    if (l >= 1) g += pt.lambda[sl].dot(problem.prefix_b(l));

    if (theta > theta_tol) {
      K.block(L.theta_off[sl], L.v_off[sl], 1, m) = theta * grad.transpose();
      K(L.theta_off[sl], L.theta_off[sl]) = g;
      if (l >= 1)
        K.block(L.theta_off[sl], L.lambda_off[sl], 1, L.lambda_dim[sl]) =
            theta * problem.prefix_b(l).transpose();
    } else {
      K(L.theta_off[sl], L.theta_off[sl]) = 1.0;
    }

    if (l >= 1) {
      const Matrix prev = problem.prefix_matrix(l);
      K.block(L.eta_off[sl], L.lambda_off[sl], L.n_x, L.lambda_dim[sl]) = prev.transpose();
      K.block(L.lambda_off[sl], L.theta_off[sl], L.lambda_dim[sl], 1) = problem.prefix_b(l);
      K.block(L.lambda_off[sl], L.eta_off[sl], L.lambda_dim[sl], L.n_x) = prev;
    }
  }

  const Index mp = L.m[static_cast<std::size_t>(p - 1)];
  K.block(L.vp_off, L.vp_off, mp, mp) = Matrix::Identity(mp, mp);
  K.block(L.vp_off, L.mup_off, mp, mp) = -Matrix::Identity(mp, mp);

  sys.K = K;
  sys.solver.compute(K);
  return sys;
}

namespace detail {

/// Position of (level, row) inside the stacked prefix of level k.
inline Index prefix_position(const HlspProblem& problem, Index level, Index row) {
  return problem.dual_dim(level) + row;
}

}  // namespace detail

/// Right-hand side of the differential system for a unit perturbation of
/// b_level[row].
inline Vector differential_rhs_b(const HlspProblem& problem, const KktPoint& pt,
                                 const DifferentialSystem& sys, Index level, Index row) {
  const auto& L = sys.layout;
  Vector rhs = Vector::Zero(L.dim);
  const auto slv = static_cast<std::size_t>(level);
  if (level <= L.p - 2) {
    rhs[L.v_off[slv] + row] = -pt.theta[slv];
    rhs[L.mu_off[slv] + row] = 1.0;
    if (pt.theta[slv] > sys.theta_tol)
      rhs[L.theta_off[slv]] = -pt.theta[slv] * pt.v[slv][row];
  } else {
    rhs[L.mup_off + row] = 1.0;
  }
  for (Index k = std::max<Index>(level + 1, 1); k <= L.p - 2; ++k) {
    const auto sk = static_cast<std::size_t>(k);
    const Index pos = detail::prefix_position(problem, level, row);
    if (pt.theta[sk] > sys.theta_tol)
      rhs[L.theta_off[sk]] += -pt.theta[sk] * pt.lambda[sk][pos];
    rhs[L.lambda_off[sk] + pos] = -pt.theta[sk];
  }
  return rhs;
}

/// Right-hand side for a unit perturbation of A_level(row, col).
inline Vector differential_rhs_A(const HlspProblem& problem, const KktPoint& pt,
                                 const DifferentialSystem& sys, Index level, Index row,
                                 Index col) {
  const auto& L = sys.layout;
  Vector rhs = Vector::Zero(L.dim);
  const auto slv = static_cast<std::size_t>(level);
  rhs[L.x_off + col] -= pt.mu[slv][row];
  if (level <= L.p - 2) {
    rhs[L.v_off[slv] + row] = -pt.eta[slv][col];
    rhs[L.mu_off[slv] + row] = -pt.x[col];
    rhs[L.eta_off[slv] + col] -= pt.v[slv][row];
  } else {
    rhs[L.mup_off + row] = -pt.x[col];
  }
  for (Index k = std::max<Index>(level + 1, 1); k <= L.p - 2; ++k) {
    const auto sk = static_cast<std::size_t>(k);
    const Index pos = detail::prefix_position(problem, level, row);
    rhs[L.eta_off[sk] + col] -= pt.lambda[sk][pos];
    rhs[L.lambda_off[sk] + pos] = -pt.eta[sk][col];
  }
  return rhs;
}

/// Full sensitivity vector for one right-hand side. The multiplier blocks of
/// the system can be genuinely non-unique, so the minimum-norm solution is
/// taken; an inconsistent system signals a degenerate solution point.
inline Vector solve_differential(const DifferentialSystem& sys, const Vector& rhs) {
  Vector d = sys.solver.solve(rhs);
  if (!d.allFinite() || (sys.K * d - rhs).norm() > 1e-7 * (1.0 + rhs.norm()))
    throw Error(Error::Code::singular_system, "differential system is inconsistent at this point");
  return d;
}

inline Vector jacobian_wrt_b(const HlspProblem& problem, const KktPoint& pt,
                             const DifferentialSystem& sys, Index level, Index row) {
  return solve_differential(sys, differential_rhs_b(problem, pt, sys, level, row));
}

inline Vector jacobian_wrt_A(const HlspProblem& problem, const KktPoint& pt,
                             const DifferentialSystem& sys, Index level, Index row, Index col) {
  return solve_differential(sys, differential_rhs_A(problem, pt, sys, level, row, col));
}

/// Jacobian of the primal solution with respect to every right-hand side
/// entry, columns ordered by stacked row position.
inline Matrix jacobian_x_wrt_b(const HlspProblem& problem, const KktPoint& pt) {
  DifferentialSystem sys = assemble_differential(problem, pt);
  Matrix J(problem.n_x, problem.total_rows());
  Index at = 0;
  for (Index l = 0; l < problem.num_levels(); ++l) {
    for (Index i = 0; i < problem.level_rows(l); ++i) {
      const Vector d = jacobian_wrt_b(problem, pt, sys, l, i);
      J.col(at++) = d.segment(sys.layout.x_off, problem.n_x);
    }
  }
  return J;
}

}  // namespace hlsp
