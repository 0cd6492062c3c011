#pragma once

// Test-only oracles, independent of the library's solution paths.

#include <cmath>
#include <vector>

#include "hlsp/admm.hpp"
#include "hlsp/baseline.hpp"
#include "hlsp/generator.hpp"
#include "hlsp/projection.hpp"
#include "hlsp/types.hpp"

namespace hlsp::test {

// ---------------------------------------------------------------------------
// Projection oracle: bisection on the scalar multiplier
// ---------------------------------------------------------------------------

struct BisectionResult {
  Vector z;
  Vector lambda_tilde;
  double theta = 0.0;
};

/// The constraint value as a function of the multiplier is strictly decreasing,
/// so the projection reduces to a scalar root find.
inline BisectionResult bisection_project(const ProjectionInput& in) {
  auto g = [&](double theta) {
    const double denom = 1.0 + 2.0 * theta;
    double val = in.a1.squaredNorm() / (denom * denom) - in.b_hat.squaredNorm();
    if (in.b_prev.size() > 0) val += (in.a2 - theta * in.b_prev).dot(in.b_prev);
    return val;
  };
  BisectionResult out;
  if (g(0.0) <= 0.0) {
    out.z = in.a1;
    out.lambda_tilde = in.a2;
    out.theta = 0.0;
    return out;
  }
  if (in.b_hat.squaredNorm() == 0.0 &&
      (in.b_prev.size() == 0 || in.b_prev.squaredNorm() == 0.0)) {
    out.z = Vector::Zero(in.a1.size());
    out.lambda_tilde = in.a2;
    out.theta = 0.0;
    return out;
  }
  double lo = 0.0, hi = 1.0;
  while (g(hi) > 0.0) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (g(mid) > 0.0 ? lo : hi) = mid;
  }
  out.theta = 0.5 * (lo + hi);
  out.z = in.a1 / (1.0 + 2.0 * out.theta);
  out.lambda_tilde =
      in.b_prev.size() > 0 ? Vector(in.a2 - out.theta * in.b_prev) : in.a2;
  return out;
}

// ---------------------------------------------------------------------------
// Dense assembly of the unreduced stationarity system (unit row weights)
// ---------------------------------------------------------------------------

struct UnreducedSystem {
  Matrix K;
  Vector rhs;
  Index x_off = 0;
  std::vector<Index> v_off, lambda_off;
  Index dim = 0;

  Vector stack_point(const AdmmState& s, const HlspProblem& problem) const {
    Vector q = Vector::Zero(dim);
    q.segment(x_off, problem.n_x) = s.x;
    const Index p = problem.num_levels();
    for (Index l = 0; l <= p - 2; ++l)
      q.segment(v_off[static_cast<std::size_t>(l)], problem.level_rows(l)) =
          s.v[static_cast<std::size_t>(l)];
    for (Index l = 1; l <= p - 2; ++l)
      q.segment(lambda_off[static_cast<std::size_t>(l)], problem.dual_dim(l)) =
          s.lambda[static_cast<std::size_t>(l)];
    return q;
  }
};

/// The full linear stationarity system over (x, v_below, coupling blocks) with
/// the last level's slack substituted out, assembled block by block from the
/// problem data. Solving or evaluating it is the independent check of the
/// reduced-path updates. The penalty terms carry the same step-size scale the
/// solver configuration selects.
inline UnreducedSystem assemble_unreduced(const HlspProblem& problem, const AdmmState& s,
                                          const AdmmConfig& cfg) {
  const Index p = problem.num_levels();
  const Index n = problem.n_x;
  UnreducedSystem sys;
  sys.v_off.assign(static_cast<std::size_t>(p), -1);
  sys.lambda_off.assign(static_cast<std::size_t>(p), -1);
  Index at = n;
  for (Index l = 0; l <= p - 2; ++l) {
    sys.v_off[static_cast<std::size_t>(l)] = at;
    at += problem.level_rows(l);
  }
  for (Index l = 1; l <= p - 2; ++l) {
    sys.lambda_off[static_cast<std::size_t>(l)] = at;
    at += problem.dual_dim(l);
  }
  sys.dim = at;
  sys.K = Matrix::Zero(at, at);
  sys.rhs = Vector::Zero(at);

  const double rho = s.rho;
  const double pen = cfg.literal_rho ? 1.0 : rho;
  const double reps = cfg.effective_rho_eps();
  const auto& last = problem.levels[static_cast<std::size_t>(p - 1)];

  // primal variable rows
  Matrix Kxx = cfg.sigma * Matrix::Identity(n, n);
  Vector rx = cfg.sigma * s.x_tilde;
  for (Index l = 0; l <= p - 2; ++l) {
    const auto& lv = problem.levels[static_cast<std::size_t>(l)];
    Kxx += pen * cfg.rho_mu * lv.A.transpose() * lv.A;
    rx += pen * cfg.rho_mu * lv.A.transpose() *
          (lv.b - s.mu[static_cast<std::size_t>(l)] / (pen * cfg.rho_mu));
    sys.K.block(0, sys.v_off[static_cast<std::size_t>(l)], n, lv.rows()) =
        -pen * cfg.rho_mu * lv.A.transpose();
  }
  const double wp = pen * cfg.rho_mu / (1.0 + rho * cfg.rho_mu);
  Kxx += wp * last.A.transpose() * last.A;
  rx += wp * last.A.transpose() *
        (last.b - s.mu[static_cast<std::size_t>(p - 1)] / (pen * cfg.rho_mu));
  sys.K.block(0, 0, n, n) = Kxx;
  sys.rhs.segment(0, n) = rx;

  // slack rows of the lower levels
  for (Index l = 0; l <= p - 2; ++l) {
    const auto sl = static_cast<std::size_t>(l);
    const auto& lv = problem.levels[sl];
    const Index m = lv.rows();
    const Index vo = sys.v_off[sl];
    sys.K.block(vo, 0, m, n) = -pen * cfg.rho_mu * lv.A;
    sys.K.block(vo, vo, m, m) = pen * (cfg.rho_mu + cfg.rho_phi) * Matrix::Identity(m, m) +
                                pen * cfg.rho_eta * lv.A * lv.A.transpose();
    if (l >= 1)
      sys.K.block(vo, sys.lambda_off[sl], m, problem.dual_dim(l)) =
          pen * cfg.rho_eta * lv.A * problem.prefix_matrix(l).transpose();
    sys.rhs.segment(vo, m) = pen * cfg.rho_mu * (-lv.b) + s.mu[sl] - lv.A * s.eta[sl] +
                             pen * cfg.rho_phi * (s.z[sl] - lv.b_hat()) - s.phi[sl];
  }

  // coupling rows
  for (Index l = 1; l <= p - 2; ++l) {
    const auto sl = static_cast<std::size_t>(l);
    const auto& lv = problem.levels[sl];
    const Index nd = problem.dual_dim(l);
    const Index lo = sys.lambda_off[sl];
    const Matrix prev = problem.prefix_matrix(l);
    sys.K.block(lo, sys.v_off[sl], nd, lv.rows()) = pen * cfg.rho_eta * prev * lv.A.transpose();
    sys.K.block(lo, lo, nd, nd) =
        pen * (cfg.rho_eta * prev * prev.transpose() + reps * Matrix::Identity(nd, nd));
    sys.rhs.segment(lo, nd) =
        -prev * s.eta[sl] + pen * cfg.rho_nu * s.lambda_tilde[sl] - s.nu[sl];
  }
  return sys;
}

// ---------------------------------------------------------------------------
// Multiplier reconstruction at a solved point
// ---------------------------------------------------------------------------

struct ReconstructedDuals {
  std::vector<Vector> mu, eta, phi, nu;
  std::vector<double> theta;
};

/// Least-squares reconstruction of the stationarity multipliers at a converged
/// primal/coupling point; any solution of the linear system zeroes the dual
/// residual blocks.
inline ReconstructedDuals reconstruct_duals(const HlspProblem& problem, const HlspSolution& sol) {
  const Index p = problem.num_levels();
  const Index n = problem.n_x;
  const Index unknowns = (p - 1) * (n + 1);  // per lower level: eta block + theta

  Index rows = n;
  for (Index l = 1; l <= p - 2; ++l) rows += problem.dual_dim(l);
  Matrix A = Matrix::Zero(rows, unknowns);
  Vector rhs = Vector::Zero(rows);

  auto eta_col = [&](Index l) { return l * (n + 1); };
  auto theta_col = [&](Index l) { return l * (n + 1) + n; };

  const auto& last = problem.levels[static_cast<std::size_t>(p - 1)];
  rhs.segment(0, n) = -last.A.transpose() * sol.v[static_cast<std::size_t>(p - 1)];
  for (Index l = 0; l <= p - 2; ++l) {
    const auto& lv = problem.levels[static_cast<std::size_t>(l)];
    A.block(0, eta_col(l), n, n) = lv.A.transpose() * lv.A;
    A.block(0, theta_col(l), n, 1) =
        lv.A.transpose() * (2.0 * sol.v[static_cast<std::size_t>(l)] + lv.b);
  }
  Index at = n;
  for (Index l = 1; l <= p - 2; ++l) {
    const Index nd = problem.dual_dim(l);
    A.block(at, eta_col(l), nd, n) = problem.prefix_matrix(l);
    A.block(at, theta_col(l), nd, 1) = problem.prefix_b(l);
    at += nd;
  }

  // Least-squares certificate, then alternating projections between the
  // affine multiplier set and the nonnegativity box of the quadratic
  // multipliers (a valid certificate with theta >= 0 exists at any optimum).
  Eigen::JacobiSVD<Matrix> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector sv = svd.singularValues();
  const double cut = sv.size() ? 1e-12 * sv[0] : 0.0;
  auto affine_project = [&](const Vector& t) {
    Vector y = svd.matrixU().transpose() * (rhs - A * t);
    for (Index i = 0; i < sv.size(); ++i) y[i] = sv[i] > cut ? y[i] / sv[i] : 0.0;
    return Vector(t + svd.matrixV() * y);
  };
  Vector t = affine_project(Vector::Zero(unknowns));
  for (int it = 0; it < 5000; ++it) {
    bool clipped = false;
    for (Index l = 0; l <= p - 2; ++l) {
      if (t[theta_col(l)] < 0.0) {
        t[theta_col(l)] = 0.0;
        clipped = true;
      }
    }
    if (!clipped) break;
    t = affine_project(t);
  }

  ReconstructedDuals d;
  d.mu.resize(static_cast<std::size_t>(p));
  d.eta.resize(static_cast<std::size_t>(p));
  d.phi.resize(static_cast<std::size_t>(p));
  d.nu.resize(static_cast<std::size_t>(p));
  d.theta.assign(static_cast<std::size_t>(p), 0.0);
  for (Index l = 0; l <= p - 2; ++l) {
    const auto sl = static_cast<std::size_t>(l);
    const auto& lv = problem.levels[sl];
    d.eta[sl] = t.segment(eta_col(l), n);
    d.theta[sl] = t[theta_col(l)];
    d.mu[sl] = d.theta[sl] * (2.0 * sol.v[sl] + lv.b) + lv.A * d.eta[sl];
    d.phi[sl] = d.theta[sl] * (2.0 * sol.v[sl] + lv.b);
    if (l >= 1) d.nu[sl] = d.theta[sl] * problem.prefix_b(l);
  }
  d.mu[static_cast<std::size_t>(p - 1)] = sol.v[static_cast<std::size_t>(p - 1)];
  return d;
}

/// Injects a solved point plus reconstructed multipliers into a solver state.
inline AdmmState state_from_solution(const HlspProblem& problem, const HlspSolution& sol,
                                     const AdmmConfig& cfg) {
  AdmmState s = zero_state(problem, cfg);
  const Index p = problem.num_levels();
  s.x = sol.x;
  s.x_tilde = sol.x;
  const ReconstructedDuals d = reconstruct_duals(problem, sol);
  for (Index l = 0; l < p; ++l) {
    const auto sl = static_cast<std::size_t>(l);
    s.v[sl] = sol.v[sl];
    s.mu[sl] = d.mu[sl];
    if (l <= p - 2) {
      s.z[sl] = sol.v[sl] + problem.levels[sl].b_hat();
      s.eta[sl] = d.eta[sl];
      s.phi[sl] = d.phi[sl];
      s.theta[sl] = d.theta[sl];
    }
    if (l >= 1 && l <= p - 2) {
      s.lambda[sl] = sol.lambda[sl];
      s.lambda_tilde[sl] = sol.lambda[sl];
      s.nu[sl] = d.nu[sl];
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Randomized states and finite differences
// ---------------------------------------------------------------------------

inline AdmmState random_state(const HlspProblem& problem, const AdmmConfig& cfg,
                              std::uint64_t seed, double rho) {
  NormalSampler rng(seed);
  AdmmState s = zero_state(problem, cfg);
  auto fill = [&](Vector& v) {
    for (Index i = 0; i < v.size(); ++i) v[i] = rng.normal();
  };
  fill(s.x);
  fill(s.x_tilde);
  for (auto* group : {&s.v, &s.lambda, &s.z, &s.lambda_tilde, &s.mu, &s.eta, &s.phi, &s.nu})
    for (auto& v : *group) fill(v);
  s.rho = rho;
  return s;
}

/// Central finite differences of the sequential solver's primal solution with
/// respect to one right-hand-side entry.
inline Vector fd_x_wrt_b(const HlspProblem& problem, Index level, Index row, double h = 1e-6) {
  HlspProblem plus = problem, minus = problem;
  plus.levels[static_cast<std::size_t>(level)].b[row] += h;
  minus.levels[static_cast<std::size_t>(level)].b[row] -= h;
  return (solve_sequential(plus).x - solve_sequential(minus).x) / (2.0 * h);
}

inline Vector fd_x_wrt_A(const HlspProblem& problem, Index level, Index row, Index col,
                         double h = 1e-6) {
  HlspProblem plus = problem, minus = problem;
  plus.levels[static_cast<std::size_t>(level)].A(row, col) += h;
  minus.levels[static_cast<std::size_t>(level)].A(row, col) -= h;
  return (solve_sequential(plus).x - solve_sequential(minus).x) / (2.0 * h);
}

/// Feasible hierarchy: right-hand sides constructed in the row space.
inline HlspProblem feasible_problem(Index p, std::uint64_t seed) {
  GeneratorOptions opts;
  opts.dependent_rows = false;
  HlspProblem problem = generate_random_hierarchy(p, seed, opts);
  NormalSampler rng(mix_seed(seed, 77));
  const Vector xbar = rng.normal_vector(problem.n_x);
  for (auto& lv : problem.levels) lv.b = lv.A * xbar;
  return problem;
}

/// Per-level duality-gap expressions at a solved point (levels below the last).
inline std::vector<double> duality_gaps(const HlspProblem& problem, const HlspSolution& sol) {
  std::vector<double> gaps;
  for (Index l = 0; l + 1 < problem.num_levels(); ++l) {
    const auto sl = static_cast<std::size_t>(l);
    double g = sol.v[sl].dot(sol.v[sl] + problem.levels[sl].b);
    if (l >= 1 && sol.lambda[sl].size() > 0) g += sol.lambda[sl].dot(problem.prefix_b(l));
    gaps.push_back(g);
  }
  return gaps;
}

}  // namespace hlsp::test
