#pragma once

#include <Eigen/LU>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <vector>

#include "hlsp/report.hpp"
#include "hlsp/types.hpp"

namespace hlsp {

// ============================================================================
// Stacked Newton system over all primal, dual and coupling variables
// ============================================================================

/// Variable layout of the interior-point iterate: x first, then per level
/// below the last its slack, constraint multiplier, dual-constraint
/// multiplier, quadratic multiplier and barrier slack, then the last level's
/// slack and multiplier, then the coupling blocks.
struct IpmLayout {
  Index n_x = 0, p = 0, dim = 0;
  std::vector<Index> m;
  std::vector<Index> v_off, mu_off, eta_off, theta_off, w_off, lambda_off, lambda_dim;
  Index x_off = 0, vp_off = 0, mup_off = 0;
  std::vector<Matrix> prefix;   ///< stacked matrices of levels 0..l-1, cached
  std::vector<Vector> prefix_b;

  static IpmLayout build(const HlspProblem& problem) {
    IpmLayout L;
    L.n_x = problem.n_x;
    L.p = problem.num_levels();
    L.m.resize(static_cast<std::size_t>(L.p));
    for (Index l = 0; l < L.p; ++l) L.m[static_cast<std::size_t>(l)] = problem.level_rows(l);
    const auto n_lower = static_cast<std::size_t>(std::max<Index>(L.p - 1, 0));
    L.v_off.resize(n_lower);
    L.mu_off.resize(n_lower);
    L.eta_off.resize(n_lower);
    L.theta_off.resize(n_lower);
    L.w_off.resize(n_lower);
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
      L.eta_off[sl] = at;
      at += L.n_x;
      L.theta_off[sl] = at;
      at += 1;
      L.w_off[sl] = at;
      at += 1;
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
    L.prefix.resize(static_cast<std::size_t>(L.p));
    L.prefix_b.resize(static_cast<std::size_t>(L.p));
    for (Index l = 1; l <= L.p - 2; ++l) {
      L.prefix[static_cast<std::size_t>(l)] = problem.prefix_matrix(l);
      L.prefix_b[static_cast<std::size_t>(l)] = problem.prefix_b(l);
    }
    return L;
  }
};

/// Interior-point iterate: the stacked vector plus the current barrier value.
struct IpmState {
  Vector psi;
  double mu_barrier = 1.0;
};

inline IpmState initial_ipm_state(const IpmLayout& L, double mu_init = 1.0) {
  IpmState s;
  s.psi = Vector::Zero(L.dim);
  for (Index l = 0; l <= L.p - 2; ++l) {
    s.psi[L.theta_off[static_cast<std::size_t>(l)]] = 1.0;
    s.psi[L.w_off[static_cast<std::size_t>(l)]] = 1.0;
  }
  s.mu_barrier = mu_init;
  return s;
}

/// Stationarity residual of the log-barrier reformulation; `barrier` is the
/// product of centering factor and barrier parameter (zero for the true KKT
/// conditions).
inline Vector ipm_residual(const HlspProblem& problem, const IpmLayout& L, const Vector& psi,
                           double barrier) {
  Vector k = Vector::Zero(L.dim);
  const Index p = L.p;
  const auto x = psi.segment(L.x_off, L.n_x);

  Vector kx = Vector::Zero(L.n_x);
  for (Index l = 0; l < p; ++l) {
    const auto& lv = problem.levels[static_cast<std::size_t>(l)];
    const auto sl = static_cast<std::size_t>(l);
    const Index mu_at = (l == p - 1) ? L.mup_off : L.mu_off[sl];
    kx.noalias() += lv.A.transpose() * psi.segment(mu_at, lv.rows());
  }
  k.segment(L.x_off, L.n_x) = kx;

  for (Index l = 0; l <= p - 2; ++l) {
    const auto sl = static_cast<std::size_t>(l);
    const auto& lv = problem.levels[sl];
    const Index m = lv.rows();
    const auto v = psi.segment(L.v_off[sl], m);
    const auto mu = psi.segment(L.mu_off[sl], m);
    const auto eta = psi.segment(L.eta_off[sl], L.n_x);
    const double theta = psi[L.theta_off[sl]];
    const double w = psi[L.w_off[sl]];

    k.segment(L.v_off[sl], m) = -mu + theta * (2.0 * v + lv.b) + lv.A * eta;
    k.segment(L.mu_off[sl], m) = lv.A * x - lv.b - v;
    Vector keta = lv.A.transpose() * v;
    double quad = v.dot(v + lv.b) + w;
    if (l >= 1) {
      const auto lam = psi.segment(L.lambda_off[sl], L.lambda_dim[sl]);
      keta.noalias() += L.prefix[sl].transpose() * lam;
      quad += lam.dot(L.prefix_b[sl]);
    }
    k.segment(L.eta_off[sl], L.n_x) = keta;
    k[L.theta_off[sl]] = quad;
    k[L.w_off[sl]] = theta * w - barrier;
  }

  const auto slp = static_cast<std::size_t>(p - 1);
  const auto& last = problem.levels[slp];
  const auto vp = psi.segment(L.vp_off, last.rows());
  const auto mup = psi.segment(L.mup_off, last.rows());
  k.segment(L.vp_off, last.rows()) = vp - mup;
  k.segment(L.mup_off, last.rows()) = last.A * x - last.b - vp;

  for (Index l = 1; l <= p - 2; ++l) {
    const auto sl = static_cast<std::size_t>(l);
    const double theta = psi[L.theta_off[sl]];
    const auto eta = psi.segment(L.eta_off[sl], L.n_x);
    k.segment(L.lambda_off[sl], L.lambda_dim[sl]) =
        theta * L.prefix_b[sl] + L.prefix[sl] * eta;
  }
  return k;
}

/// Newton matrix of `ipm_residual`. Symmetric apart from the complementarity
/// rows, whose entries are the current multiplier / slack values.
inline Matrix assemble_ipm_kkt(const HlspProblem& problem, const IpmLayout& L, const Vector& psi) {
  Matrix K = Matrix::Zero(L.dim, L.dim);
  const Index p = L.p;

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
    const auto v = psi.segment(L.v_off[sl], m);
    const double theta = psi[L.theta_off[sl]];
    const double w = psi[L.w_off[sl]];
    const Vector grad = 2.0 * v + lv.b;

    K.block(L.v_off[sl], L.v_off[sl], m, m) = 2.0 * theta * Matrix::Identity(m, m);
    K.block(L.v_off[sl], L.mu_off[sl], m, m) = -Matrix::Identity(m, m);
    K.block(L.v_off[sl], L.theta_off[sl], m, 1) = grad;
    K.block(L.v_off[sl], L.eta_off[sl], m, L.n_x) = lv.A;

    K.block(L.eta_off[sl], L.v_off[sl], L.n_x, m) = lv.A.transpose();

    K.block(L.theta_off[sl], L.v_off[sl], 1, m) = grad.transpose();
    K(L.theta_off[sl], L.w_off[sl]) = 1.0;

    K(L.w_off[sl], L.theta_off[sl]) = w;
    K(L.w_off[sl], L.w_off[sl]) = theta;

    if (l >= 1) {
      const Matrix& prev = L.prefix[sl];
      const Vector& bprev = L.prefix_b[sl];
      K.block(L.eta_off[sl], L.lambda_off[sl], L.n_x, L.lambda_dim[sl]) = prev.transpose();
      K.block(L.theta_off[sl], L.lambda_off[sl], 1, L.lambda_dim[sl]) = bprev.transpose();
      K.block(L.lambda_off[sl], L.theta_off[sl], L.lambda_dim[sl], 1) = bprev;
      K.block(L.lambda_off[sl], L.eta_off[sl], L.lambda_dim[sl], L.n_x) = prev;
    }
  }

  const Index mp = L.m[static_cast<std::size_t>(p - 1)];
  K.block(L.vp_off, L.vp_off, mp, mp) = Matrix::Identity(mp, mp);
  K.block(L.vp_off, L.mup_off, mp, mp) = -Matrix::Identity(mp, mp);
  return K;
}

struct IpmConfig {
  double chi = 1e-8;            ///< convergence threshold on the true KKT residual norm
  double sigma_barrier = 0.1;   ///< centering factor
  double mu_init = 1.0;
  double mu_reduction = 0.1;
  double tau = 0.995;           ///< fraction-to-boundary factor
  int max_outer = 40;
  int max_inner = 50;
  long max_iters = 5000;        ///< total Newton step budget
  double step_regularization = 1e-8;  ///< multiplier-block shift of the step matrix
  double stall_factor = 0.97;   ///< an outer counts as stalled above this reduction factor
  int max_stalled_outers = 8;
};

/// A primal-dual point of the full hierarchy, extracted from a converged run.
struct KktPoint {
  Vector x;
  std::vector<Vector> v;
  std::vector<Vector> mu;
  std::vector<Vector> eta;
  std::vector<Vector> lambda;
  std::vector<double> theta;
  std::vector<double> w;
  double kkt_residual = 0.0;
};

namespace detail {

/// Newton step on the (possibly structurally rank-deficient) system. The fast
/// path shifts the dual-constraint and coupling multiplier diagonals so a
/// plain pivoted factorization applies; the residual itself stays exact, so
/// the shift only perturbs the step. When the shifted direction is inaccurate
/// for the true matrix (near-degenerate instances), a rank-truncated complete
/// orthogonal solve takes over: it ignores numerically dead directions instead
/// of amplifying them into the multipliers.
inline Vector ipm_newton_step(const HlspProblem& problem, const IpmLayout& L, const Matrix& K,
                              const Vector& k, double reg) {
  (void)problem;
  Matrix shifted = K;
  const double shift = reg * std::max(1.0, K.cwiseAbs().maxCoeff());
  for (Index l = 0; l <= L.p - 2; ++l) {
    const auto sl = static_cast<std::size_t>(l);
    for (Index i = 0; i < L.n_x; ++i) shifted(L.eta_off[sl] + i, L.eta_off[sl] + i) -= shift;
    if (l >= 1)
      for (Index i = 0; i < L.lambda_dim[sl]; ++i)
        shifted(L.lambda_off[sl] + i, L.lambda_off[sl] + i) -= shift;
  }
  Eigen::PartialPivLU<Matrix> lu(shifted);
  Vector step = lu.solve(-k);
  if (step.allFinite() && (shifted * step + k).norm() <= 1e-8 * std::max(1.0, k.norm()))
    return step;
  return Vector();
}

/// Damped least-squares direction min ||K d + k||^2 + delta^2 ||d||^2, a
/// guaranteed descent direction for the residual norm even when the Jacobian
/// is numerically rank deficient. Empty when the damping is too small for the
/// normal equations to factor.
inline Vector ipm_lm_step(const Matrix& K, const Vector& k, double delta) {
  Matrix normal = K.transpose() * K;
  normal.diagonal().array() += delta * delta;
  const Vector step = Eigen::LDLT<Matrix>(normal).solve(-K.transpose() * k);
  return step.allFinite() ? step : Vector();
}

}  // namespace detail

/// One Newton iteration: assemble, solve, and apply the longest step keeping
/// the quadratic multipliers and barrier slacks strictly positive. Returns
/// false when back-tracking cannot find a non-increasing step (the iteration
/// is stuck at this barrier value).
inline bool ipm_step(const HlspProblem& problem, const IpmLayout& L, IpmState& state,
                     const IpmConfig& config, double barrier) {
  const Vector k = ipm_residual(problem, L, state.psi, barrier);
  const Matrix K = assemble_ipm_kkt(problem, L, state.psi);
  const double base_norm = k.norm();

  auto fraction_to_boundary = [&](const Vector& step) {
    double alpha = 1.0;
    for (Index l = 0; l <= L.p - 2; ++l) {
      const auto sl = static_cast<std::size_t>(l);
      for (Index at : {L.theta_off[sl], L.w_off[sl]}) {
        const double d = step[at];
        if (d < 0.0) alpha = std::min(alpha, -config.tau * state.psi[at] / d);
      }
    }
    return alpha;
  };
  auto try_step = [&](const Vector& step, int backtracks, double accept_factor) {
    double alpha = fraction_to_boundary(step);
    for (int bt = 0; bt < backtracks; ++bt) {
      const Vector trial = state.psi + alpha * step;
      if (ipm_residual(problem, L, trial, barrier).norm() <= accept_factor * base_norm) {
        state.psi = trial;
        return true;
      }
      alpha *= 0.5;
    }
    return false;
  };

  const Vector newton = detail::ipm_newton_step(problem, L, K, k, config.step_regularization);
  if (newton.size() > 0 && try_step(newton, 12, 0.999)) return true;

  // ill-conditioned instance: damped least-squares directions over a damping
  // sweep, fine to coarse
  const double scale = std::max(1.0, K.cwiseAbs().maxCoeff());
  for (double damping : {1e-8, 1e-6, 1e-4, 1e-2}) {
    const Vector lm = detail::ipm_lm_step(K, k, damping * scale);
    if (lm.size() > 0 && try_step(lm, 8, 0.9999)) return true;
  }
  // crawling is still progress when every direction is nearly dead
  if (newton.size() > 0 && try_step(newton, 12, 1.0 + 1e-8)) return true;
  return false;
}

inline KktPoint extract_kkt_point(const HlspProblem& problem, const IpmLayout& L,
                                  const Vector& psi) {
  KktPoint pt;
  const Index p = L.p;
  pt.x = psi.segment(L.x_off, L.n_x);
  pt.v.resize(static_cast<std::size_t>(p));
  pt.mu.resize(static_cast<std::size_t>(p));
  pt.eta.resize(static_cast<std::size_t>(p));
  pt.lambda.resize(static_cast<std::size_t>(p));
  pt.theta.assign(static_cast<std::size_t>(p), 0.0);
  pt.w.assign(static_cast<std::size_t>(p), 0.0);
  for (Index l = 0; l <= p - 2; ++l) {
    const auto sl = static_cast<std::size_t>(l);
    const Index m = L.m[sl];
    pt.v[sl] = psi.segment(L.v_off[sl], m);
    pt.mu[sl] = psi.segment(L.mu_off[sl], m);
    pt.eta[sl] = psi.segment(L.eta_off[sl], L.n_x);
    pt.theta[sl] = psi[L.theta_off[sl]];
    pt.w[sl] = psi[L.w_off[sl]];
    if (l >= 1) pt.lambda[sl] = psi.segment(L.lambda_off[sl], L.lambda_dim[sl]);
  }
  const auto slp = static_cast<std::size_t>(p - 1);
  pt.v[slp] = psi.segment(L.vp_off, L.m[slp]);
  pt.mu[slp] = psi.segment(L.mup_off, L.m[slp]);
  pt.kkt_residual = ipm_residual(problem, L, psi, 0.0).norm();
  return pt;
}

/// Path-following driver: inner Newton iterations at a geometrically
/// decreasing barrier, terminating on the true KKT residual. The right-hand
/// sides are normalized by a single scalar first, which leaves the hierarchy
/// unchanged up to a linear change of variables but makes the unit interior
/// start meaningful for badly scaled instances; the solution is mapped back
/// afterwards.
inline SolveReport solve_dhipm(const HlspProblem& original, const IpmConfig& config = {},
                               KktPoint* point_out = nullptr) {
  Stopwatch total;
  require_valid(original);

  double b_scale = 0.0;
  for (const auto& lv : original.levels)
    b_scale = std::max(b_scale, lv.b.cwiseAbs().maxCoeff());
  if (!(b_scale > 0.0)) b_scale = 1.0;
  HlspProblem problem = original;
  for (auto& lv : problem.levels) lv.b /= b_scale;

  const IpmLayout L = IpmLayout::build(problem);
  IpmState state = initial_ipm_state(L, config.mu_init);

  long steps = 0;
  bool converged = false;
  double prev_true_norm = std::numeric_limits<double>::infinity();
  int stalled_outers = 0;
  Vector best_psi = state.psi;
  double best_norm = ipm_residual(problem, L, state.psi, 0.0).norm();
  Stopwatch phase;
  for (int outer = 0; outer < config.max_outer && !converged; ++outer) {
    const double barrier = config.sigma_barrier * state.mu_barrier;
    const double inner_tol = std::max(10.0 * barrier, 0.1 * config.chi);
    for (int inner = 0; inner < config.max_inner; ++inner) {
      if (ipm_residual(problem, L, state.psi, barrier).norm() <= inner_tol) break;
      if (steps >= config.max_iters) break;
      const bool moved = ipm_step(problem, L, state, config, barrier);
      ++steps;
      const double true_norm = ipm_residual(problem, L, state.psi, 0.0).norm();
      if (true_norm < best_norm) {
        best_norm = true_norm;
        best_psi = state.psi;
      }
      if (!moved) break;
    }
    if (best_norm < config.chi) {
      converged = true;
      break;
    }
    stalled_outers = best_norm > config.stall_factor * prev_true_norm ? stalled_outers + 1 : 0;
    prev_true_norm = best_norm;
    if (stalled_outers >= config.max_stalled_outers || steps >= config.max_iters) break;
    state.mu_barrier *= config.mu_reduction;
  }

  KktPoint pt = extract_kkt_point(problem, L, best_psi);
  const double nrm_residual = pt.kkt_residual;

  // map the point back to the original scaling: the primal and linear
  // multipliers grow linearly, the barrier slacks quadratically, the
  // quadratic multipliers are scale free
  pt.x *= b_scale;
  for (auto& v : pt.v) v *= b_scale;
  for (auto& m : pt.mu) m *= b_scale;
  for (auto& e : pt.eta)
    if (e.size()) e *= b_scale;
  for (auto& lm : pt.lambda)
    if (lm.size()) lm *= b_scale;
  for (auto& w : pt.w) w *= b_scale * b_scale;
  {
    Vector psi_orig = best_psi;
    psi_orig.segment(L.x_off, L.n_x) = pt.x;
    for (Index l = 0; l <= L.p - 2; ++l) {
      const auto sl = static_cast<std::size_t>(l);
      psi_orig.segment(L.v_off[sl], L.m[sl]) = pt.v[sl];
      psi_orig.segment(L.mu_off[sl], L.m[sl]) = pt.mu[sl];
      psi_orig.segment(L.eta_off[sl], L.n_x) = pt.eta[sl];
      psi_orig[L.theta_off[sl]] = pt.theta[sl];
      psi_orig[L.w_off[sl]] = pt.w[sl];
      if (l >= 1) psi_orig.segment(L.lambda_off[sl], L.lambda_dim[sl]) = pt.lambda[sl];
    }
    const auto slp = static_cast<std::size_t>(L.p - 1);
    psi_orig.segment(L.vp_off, L.m[slp]) = pt.v[slp];
    psi_orig.segment(L.mup_off, L.m[slp]) = pt.mu[slp];
    const IpmLayout L_orig = IpmLayout::build(original);
    pt.kkt_residual = ipm_residual(original, L_orig, psi_orig, 0.0).norm();
  }
  if (point_out) *point_out = pt;

  SolveReport rep;
  rep.solver = "dhipm";
  rep.converged = converged;
  rep.status = converged ? "ok" : "max-iters";
  rep.x = pt.x;
  rep.v = pt.v;
  rep.lambda.resize(static_cast<std::size_t>(L.p));
  for (Index l = 1; l <= L.p - 2; ++l)
    rep.lambda[static_cast<std::size_t>(l)] = pt.lambda[static_cast<std::size_t>(l)];
  rep.per_level_objective = objective_per_level(original, pt.x);
  rep.theta = pt.theta;
  rep.kkt_residual = nrm_residual;
  rep.iterations = static_cast<int>(steps);
  rep.timings.kkt_ms = phase.elapsed_ms();
  rep.wall_time_ms = total.elapsed_ms();
  return rep;
}

}  // namespace hlsp
