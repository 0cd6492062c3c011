#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "hlsp/linalg.hpp"
#include "hlsp/preconditioner.hpp"
#include "hlsp/projection.hpp"
#include "hlsp/report.hpp"
#include "hlsp/types.hpp"

namespace hlsp {

// ============================================================================
// Configuration and iterate state
// ============================================================================

struct AdmmConfig {
  double rho_init = 0.1;   ///< initial variable step size
  double sigma = 1e-6;     ///< proximal regularization on x
  double alpha = 1.6;      ///< over-relaxation, in (0, 2)
  double chi = 1e-4;       ///< convergence threshold on the stacked residual norm
  int max_iters = 50000;

  // constant per-constraint-set step-size pre-factors
  double rho_mu = 100.0;
  double rho_eta = 10.0;
  double rho_phi = 1.0;
  double rho_nu = 1.0;
  /// Regularization weight on the dual diagonal blocks; follows rho_nu when unset.
  std::optional<double> rho_eps;

  double refactor_ratio = 5.0;  ///< refactorize once rho drifts past this ratio

  bool precondition = true;
  int ruiz_iterations = 15;
  /// Use the factorization-free interior-point projection instead of the cubic.
  bool projection_ipm = false;

  /// Apply the constant pre-factors without the variable step size inside the
  /// stationarity system (the typeset reading). Its fixed point matches the
  /// optimum only at rho = 1, so the consistent weighting rho * rho_bullet is
  /// the default; the flag exists for experimentation.
  bool literal_rho = false;

  double effective_rho_eps() const { return rho_eps.value_or(rho_nu); }

  void check() const {
    if (!(alpha > 0.0 && alpha < 2.0))
      throw Error(Error::Code::invalid_argument, "alpha must lie in (0, 2)");
    if (!(sigma > 0.0)) throw Error(Error::Code::invalid_argument, "sigma must be positive");
    if (!(chi > 0.0)) throw Error(Error::Code::invalid_argument, "chi must be positive");
    if (!(rho_init > 0.0) || !(rho_mu > 0.0) || !(rho_eta > 0.0) || !(rho_phi > 0.0) ||
        !(rho_nu > 0.0) || !(effective_rho_eps() > 0.0))
      throw Error(Error::Code::invalid_argument, "step-size factors must be positive");
    if (max_iters < 1) throw Error(Error::Code::invalid_argument, "max_iters must be >= 1");
  }
};

/// All iterates of the splitting scheme. Vectors are indexed by level; blocks a
/// level does not own are empty: z/phi/eta exist below the last level, the
/// coupling blocks lambda/lambda_tilde/nu exist for levels 1..p-2.
struct AdmmState {
  Vector x, x_tilde;
  std::vector<Vector> v;
  std::vector<Vector> lambda;
  std::vector<Vector> z;
  std::vector<Vector> lambda_tilde;
  std::vector<Vector> mu;
  std::vector<Vector> eta;
  std::vector<Vector> phi;
  std::vector<Vector> nu;
  std::vector<double> theta;
  double rho = 0.1;
  long iter = 0;
};

inline AdmmState zero_state(const HlspProblem& problem, const AdmmConfig& config) {
  const Index p = problem.num_levels();
  AdmmState s;
  s.x = Vector::Zero(problem.n_x);
  s.x_tilde = Vector::Zero(problem.n_x);
  auto sized = [&](std::vector<Vector>& vec) { vec.resize(static_cast<std::size_t>(p)); };
  sized(s.v);
  sized(s.lambda);
  sized(s.z);
  sized(s.lambda_tilde);
  sized(s.mu);
  sized(s.eta);
  sized(s.phi);
  sized(s.nu);
  s.theta.assign(static_cast<std::size_t>(p), 0.0);
  for (Index l = 0; l < p; ++l) {
    const Index m = problem.level_rows(l);
    const auto sl = static_cast<std::size_t>(l);
    s.v[sl] = Vector::Zero(m);
    s.mu[sl] = Vector::Zero(m);
    if (l <= p - 2) {
      s.z[sl] = Vector::Zero(m);
      s.phi[sl] = Vector::Zero(m);
      s.eta[sl] = Vector::Zero(problem.n_x);
    }
    if (l >= 1 && l <= p - 2) {
      const Index nd = problem.dual_dim(l);
      s.lambda[sl] = Vector::Zero(nd);
      s.lambda_tilde[sl] = Vector::Zero(nd);
      s.nu[sl] = Vector::Zero(nd);
    }
  }
  s.rho = config.rho_init;
  return s;
}

/// Stacked optimality residuals of the splitting scheme.
struct Residuals {
  Vector k_prim;
  Vector k_dual;
  double norm = 0.0;
};

// ============================================================================
// Solver workspace
// ============================================================================

/// Builds the dual block-inverse cache M_l = rho_eta A_cum A_cum^T + rho_eps W^2
/// for cumulative blocks l = 0..p-3, optionally under row weights W.
inline BlockInverseCache build_dual_block_cache(const HlspProblem& problem,
                                                const AdmmConfig& config,
                                                const Vector& row_weights = Vector()) {
  const Index p = problem.num_levels();
  BlockInverseCache cache;
  const double reps = config.effective_rho_eps();
  for (Index j = 0; j + 2 < p; ++j) {
    const auto& Aj = problem.levels[static_cast<std::size_t>(j)].A;
    Matrix U = config.rho_eta * (Aj * Aj.transpose());
    if (row_weights.size() > 0) {
      const Vector wj = row_weights.segment(problem.dual_dim(j), problem.level_rows(j));
      U += (reps * wj.cwiseAbs2()).asDiagonal();
    } else {
      U += reps * Matrix::Identity(Aj.rows(), Aj.rows());
    }
    Matrix T(Aj.rows(), cache.dim());
    if (j >= 1) T = config.rho_eta * (Aj * problem.prefix_matrix(j).transpose());
    cache.extend(T, U);
  }
  return cache;
}

/// Reduced system over the primal variable: the positive-definite matrix, its
/// factor, and the inner per-level elimination inverses.
struct ReducedKkt {
  Matrix K_x;
  SymmetricFactor factor;
  std::vector<Matrix> s_inv;
  double rho_at_factorization = 0.0;
};

/// Shared engine behind the per-iteration updates. Holds everything that is
/// independent of the step size: the block-inverse cache, the inner elimination
/// inverses, cross-level products, and the step-size-independent part of the
/// reduced matrix. Row weights generalize the same formulas to equilibrated
/// hierarchies whose slack blocks carry the row scaling.
class AdmmWorkspace {
public:
  AdmmWorkspace(const HlspProblem& scaled, const HlspProblem& original, const AdmmConfig& config,
                Vector row_weights = Vector())
      : problem_(scaled), config_(config) {
    config_.check();
    require_valid(scaled);
    p_ = scaled.num_levels();
    n_ = scaled.n_x;
    w_total_ = row_weights.size() ? std::move(row_weights) : Vector::Ones(scaled.total_rows());
    if (w_total_.size() != scaled.total_rows())
      throw Error(Error::Code::dimension_mismatch, "row weight vector has wrong length");

    A_.resize(sz(p_));
    b_.resize(sz(p_));
    w_.resize(sz(p_));
    winv_.resize(sz(p_));
    G_.resize(sz(p_));
    b_hat_.resize(sz(p_));
    b_prev_.resize(sz(p_));
    w_prev_.resize(sz(p_));
    A_prev_.resize(sz(p_));
    C_.resize(sz(p_));
    MC_.resize(sz(p_));
    s_inv_.resize(sz(p_));

    for (Index l = 0; l < p_; ++l) {
      const auto& lv = scaled.levels[sz(l)];
      A_[sz(l)] = lv.A;
      b_[sz(l)] = lv.b;
      w_[sz(l)] = w_total_.segment(scaled.dual_dim(l), lv.rows());
      winv_[sz(l)] = w_[sz(l)].cwiseInverse();
      G_[sz(l)] = winv_[sz(l)].asDiagonal() * lv.A;
      b_hat_[sz(l)] = original.levels[sz(l)].b_hat();
      b_prev_[sz(l)] = original.prefix_b(l);
      w_prev_[sz(l)] = w_total_.head(scaled.dual_dim(l));
      if (l >= 1 && l <= p_ - 2) A_prev_[sz(l)] = scaled.prefix_matrix(l);
    }

    cache_ = build_dual_block_cache(scaled, config_, w_total_);
    dual_cache_builds_ = 1;

    for (Index l = 1; l <= p_ - 2; ++l) {
      C_[sz(l)] = A_prev_[sz(l)] * A_[sz(l)].transpose();
      MC_[sz(l)] = cache_.inverse(l - 1) * C_[sz(l)];
    }

    for (Index l = 0; l <= p_ - 2; ++l) {
      Matrix S = config_.rho_eta * (G_[sz(l)] * G_[sz(l)].transpose());
      S += (config_.rho_mu * w_[sz(l)].cwiseAbs2().array() + config_.rho_phi)
               .matrix()
               .asDiagonal();
      if (l >= 1) {
        const Matrix inner = C_[sz(l)].transpose() * MC_[sz(l)];
        S -= config_.rho_eta * config_.rho_eta * winv_[sz(l)].asDiagonal() * inner *
             winv_[sz(l)].asDiagonal();
      }
      S = 0.5 * (S + S.transpose());
      s_inv_[sz(l)] = SymmetricFactor(S).inverse();
    }

    K_lower_ = Matrix::Zero(n_, n_);
    for (Index l = 0; l <= p_ - 2; ++l) {
      Matrix mid = -config_.rho_mu * (w_[sz(l)].asDiagonal() * s_inv_[sz(l)] *
                                      w_[sz(l)].asDiagonal());
      mid.diagonal().array() += 1.0;
      K_lower_ += config_.rho_mu * A_[sz(l)].transpose() * mid * A_[sz(l)];
    }

    factorize(config_.rho_init);
  }

  const HlspProblem& problem() const { return problem_; }
  const AdmmConfig& config() const { return config_; }
  const BlockInverseCache& cache() const { return cache_; }
  const std::vector<Matrix>& inner_inverses() const { return s_inv_; }
  int factorization_count() const { return factorization_count_; }
  int dual_cache_builds() const { return dual_cache_builds_; }
  double rho_at_factorization() const { return rho_at_factorization_; }

  /// (Re)assembles the step-size-dependent parts and factorizes. The lower
  /// levels enter through the cached step-size-free matrix times the penalty
  /// scale, so nothing below the last level is rebuilt.
  void factorize(double rho) {
    const double pen = penalty_scale(rho);
    Matrix K = config_.sigma * Matrix::Identity(n_, n_) + pen * K_lower_;
    const auto& wl = w_[sz(p_ - 1)];
    const Vector d =
        (1.0 + rho * config_.rho_mu * wl.array().square()).inverse().matrix();
    K += pen * config_.rho_mu * A_[sz(p_ - 1)].transpose() * d.asDiagonal() * A_[sz(p_ - 1)];
    K_x_ = 0.5 * (K + K.transpose());
    factor_.factorize(K_x_);
    rho_at_factorization_ = rho;
    ++factorization_count_;
  }

  const Matrix& reduced_matrix() const { return K_x_; }

  /// Right-hand side of the reduced system at the current iterate.
  Vector assemble_rhs(const AdmmState& s) const {
    const double pen = penalty_scale(rho_eff());
    Vector rhs = config_.sigma * s.x_tilde;
    for (Index l = 0; l <= p_ - 2; ++l) {
      const Vector h = level_h(s, l);
      const Vector u = s_inv_[sz(l)] * elimination_rhs(s, l, dual_solve(s, l)) / pen;
      rhs.noalias() +=
          pen * config_.rho_mu * A_[sz(l)].transpose() * (h + w_[sz(l)].cwiseProduct(u));
    }
    const Index lp = p_ - 1;
    const Vector h = level_h(s, lp);
    const Vector d =
        (1.0 + rho_eff() * config_.rho_mu * w_[sz(lp)].array().square()).inverse().matrix();
    rhs.noalias() += pen * config_.rho_mu * A_[sz(lp)].transpose() * d.cwiseProduct(h);
    return rhs;
  }

  /// Solves for x, recovers the slacks of every level and the coupling
  /// multipliers. Timing hooks split the phases for the benchmark breakdown.
  void primal_update(AdmmState& s, PhaseTimings* t = nullptr) const {
    Stopwatch clock;
    const double pen = penalty_scale(rho_eff());
    std::vector<Vector> y(sz(p_)), u(sz(p_));
    Vector rhs = config_.sigma * s.x_tilde;
    for (Index l = 0; l <= p_ - 2; ++l) {
      y[sz(l)] = dual_solve(s, l);
      u[sz(l)] = s_inv_[sz(l)] * elimination_rhs(s, l, y[sz(l)]) / pen;
      rhs.noalias() += pen * config_.rho_mu * A_[sz(l)].transpose() *
                       (level_h(s, l) + w_[sz(l)].cwiseProduct(u[sz(l)]));
    }
    const Index lp = p_ - 1;
    const Vector dp =
        (1.0 + rho_eff() * config_.rho_mu * w_[sz(lp)].array().square()).inverse().matrix();
    rhs.noalias() +=
        pen * config_.rho_mu * A_[sz(lp)].transpose() * dp.cwiseProduct(level_h(s, lp));
    if (t) t->rhs_ms += clock.elapsed_ms();

    clock.restart();
    s.x = factor_.solve(rhs);
    if (!s.x.allFinite()) throw Error(Error::Code::solve_failure, "primal solve diverged");
    for (Index l = 0; l <= p_ - 2; ++l) {
      s.v[sz(l)] =
          s_inv_[sz(l)] * (config_.rho_mu * w_[sz(l)].cwiseProduct(A_[sz(l)] * s.x)) + u[sz(l)];
    }
    s.v[sz(lp)] =
        (rho_eff() * config_.rho_mu * w_[sz(lp)].cwiseProduct(dp))
            .cwiseProduct(A_[sz(lp)] * s.x - b_[sz(lp)] +
                          s.mu[sz(lp)] / (pen * config_.rho_mu));
    if (t) t->solve_ms += clock.elapsed_ms();

    clock.restart();
    for (Index l = 1; l <= p_ - 2; ++l) {
      s.lambda[sz(l)] =
          y[sz(l)] - config_.rho_eta * (MC_[sz(l)] * winv_[sz(l)].cwiseProduct(s.v[sz(l)]));
    }
    if (t) t->lambda_ms += clock.elapsed_ms();
  }

  /// Over-relaxed split update: candidates blend the fresh primal blocks with
  /// the previous split iterates, then each level projects onto its quadratic
  /// dual constraint set. The previous split values are read from the state
  /// before being overwritten.
  void split_update(AdmmState& s, PhaseTimings* t = nullptr) const {
    Stopwatch clock;
    for (Index l = 0; l <= p_ - 2; ++l) {
      ProjectionInput in;
      in.a1 = relaxed_slack_block(s, l, s.z[sz(l)]) + s.phi[sz(l)] / (rho_eff() * config_.rho_phi);
      in.b_hat = b_hat_[sz(l)];
      if (l >= 1) {
        in.a2 = relaxed_coupling_block(s, l, s.lambda_tilde[sz(l)]) +
                s.nu[sz(l)] / (rho_eff() * config_.rho_nu);
        in.b_prev = b_prev_[sz(l)];
      }
      ProjectionResult res;
      if (config_.projection_ipm) {
        res = project_ipm(in);
      } else {
        Stopwatch roots;
        res = project_cubic(in);
        if (t) t->proj_roots_ms += roots.elapsed_ms();
      }
      s.z[sz(l)] = std::move(res.z);
      if (l >= 1) s.lambda_tilde[sz(l)] = std::move(res.lambda_tilde);
      s.theta[sz(l)] = res.theta;
    }
    s.x_tilde = s.x;
    if (t) t->proj_ms += clock.elapsed_ms();
  }

  /// Dual ascent with the same over-relaxed constraint blocks used by the
  /// split update. z_old / lt_old are the split values before that update;
  /// when omitted the current ones are used, which is exact for alpha = 1 and
  /// at fixed points.
  void dual_update(AdmmState& s, const std::vector<Vector>* z_old = nullptr,
                   const std::vector<Vector>* lt_old = nullptr, PhaseTimings* t = nullptr) const {
    Stopwatch clock;
    const double a = config_.alpha;
    const double rho = rho_eff();
    for (Index l = 0; l < p_; ++l) {
      s.mu[sz(l)] += rho * config_.rho_mu * a *
                     (A_[sz(l)] * s.x - w_[sz(l)].cwiseProduct(s.v[sz(l)]) - b_[sz(l)]);
    }
    for (Index l = 0; l <= p_ - 2; ++l) {
      Vector r = A_[sz(l)].transpose() * winv_[sz(l)].cwiseProduct(s.v[sz(l)]);
      if (l >= 1) r.noalias() += A_prev_[sz(l)].transpose() * s.lambda[sz(l)];
      s.eta[sz(l)] += rho * config_.rho_eta * a * r;
      const Vector& zo = z_old ? (*z_old)[sz(l)] : s.z[sz(l)];
      s.phi[sz(l)] +=
          rho * config_.rho_phi * (relaxed_slack_block(s, l, zo) - s.z[sz(l)]);
      if (l >= 1) {
        const Vector& lo = lt_old ? (*lt_old)[sz(l)] : s.lambda_tilde[sz(l)];
        s.nu[sz(l)] += rho * config_.rho_nu *
                       (relaxed_coupling_block(s, l, lo) - s.lambda_tilde[sz(l)]);
      }
    }
    if (t) t->dual_ms += clock.elapsed_ms();
  }

  /// Residual blocks plus everything the step-size rule needs, computed in one
  /// sweep over the constraint families.
  struct IterationStats {
    double norm = 0.0;          ///< Euclidean norm of the stacked residuals
    double prim_inf = 0.0;      ///< infinity norm of the primal residual
    double dual_inf = 0.0;      ///< infinity norm of the dual residual
    double bq_minus_c = 0.0;    ///< infinity norm of the constraint values
    double cs = 0.0;            ///< infinity norm of the split images
    double hq = 0.0;            ///< infinity norm of the objective gradient part
    double btu = 0.0;           ///< infinity norm of the multiplier pullback
  };

  IterationStats iteration_stats(const AdmmState& s) const {
    IterationStats st;
    double sq = 0.0;
    Vector buf;
    for (Index l = 0; l < p_; ++l) {
      buf = A_[sz(l)] * s.x - w_[sz(l)].cwiseProduct(s.v[sz(l)]) - b_[sz(l)];
      sq += buf.squaredNorm();
      const double nrm = inf_norm(buf);
      st.prim_inf = std::max(st.prim_inf, nrm);
      st.bq_minus_c = std::max(st.bq_minus_c, nrm);
    }
    for (Index l = 0; l <= p_ - 2; ++l) {
      buf = A_[sz(l)].transpose() * winv_[sz(l)].cwiseProduct(s.v[sz(l)]);
      if (l >= 1) buf.noalias() += A_prev_[sz(l)].transpose() * s.lambda[sz(l)];
      sq += buf.squaredNorm();
      const double nrm = inf_norm(buf);
      st.prim_inf = std::max(st.prim_inf, nrm);
      st.bq_minus_c = std::max(st.bq_minus_c, nrm);

      buf = s.v[sz(l)] + b_hat_[sz(l)] - s.z[sz(l)];
      sq += buf.squaredNorm();
      st.prim_inf = std::max(st.prim_inf, inf_norm(buf));
      st.bq_minus_c = std::max(st.bq_minus_c, inf_norm(Vector(s.v[sz(l)] + b_hat_[sz(l)])));
      st.cs = std::max(st.cs, inf_norm(s.z[sz(l)]));
      if (l >= 1) {
        buf = w_prev_[sz(l)].cwiseProduct(s.lambda[sz(l)]);
        st.bq_minus_c = std::max(st.bq_minus_c, inf_norm(buf));
        buf -= s.lambda_tilde[sz(l)];
        sq += buf.squaredNorm();
        st.prim_inf = std::max(st.prim_inf, inf_norm(buf));
        st.cs = std::max(st.cs, inf_norm(s.lambda_tilde[sz(l)]));
      }
    }

    Vector kx = Vector::Zero(n_);
    for (Index l = 0; l < p_; ++l) kx.noalias() += A_[sz(l)].transpose() * s.mu[sz(l)];
    sq += kx.squaredNorm();
    st.dual_inf = std::max(st.dual_inf, inf_norm(kx));
    st.btu = std::max(st.btu, inf_norm(kx));
    for (Index l = 0; l <= p_ - 2; ++l) {
      buf = -w_[sz(l)].cwiseProduct(s.mu[sz(l)]) + G_[sz(l)] * s.eta[sz(l)] + s.phi[sz(l)];
      sq += buf.squaredNorm();
      st.dual_inf = std::max(st.dual_inf, inf_norm(buf));
      st.btu = std::max(st.btu, inf_norm(buf));
    }
    buf = -w_[sz(p_ - 1)].cwiseProduct(s.mu[sz(p_ - 1)]);
    st.btu = std::max(st.btu, inf_norm(buf));
    buf += s.v[sz(p_ - 1)];
    sq += buf.squaredNorm();
    st.dual_inf = std::max(st.dual_inf, inf_norm(buf));
    st.hq = inf_norm(s.v[sz(p_ - 1)]);
    for (Index l = 1; l <= p_ - 2; ++l) {
      buf = A_prev_[sz(l)] * s.eta[sz(l)] + w_prev_[sz(l)].cwiseProduct(s.nu[sz(l)]);
      sq += buf.squaredNorm();
      st.dual_inf = std::max(st.dual_inf, inf_norm(buf));
      st.btu = std::max(st.btu, inf_norm(buf));
    }
    st.norm = std::sqrt(sq);
    return st;
  }

  Residuals residuals(const AdmmState& s) const {
    Residuals r;
    std::vector<Vector> prim_blocks;
    for (Index l = 0; l < p_; ++l)
      prim_blocks.push_back(A_[sz(l)] * s.x - w_[sz(l)].cwiseProduct(s.v[sz(l)]) - b_[sz(l)]);
    for (Index l = 0; l <= p_ - 2; ++l) {
      Vector e = A_[sz(l)].transpose() * winv_[sz(l)].cwiseProduct(s.v[sz(l)]);
      if (l >= 1) e.noalias() += A_prev_[sz(l)].transpose() * s.lambda[sz(l)];
      prim_blocks.push_back(std::move(e));
    }
    for (Index l = 0; l <= p_ - 2; ++l)
      prim_blocks.push_back(s.v[sz(l)] + b_hat_[sz(l)] - s.z[sz(l)]);
    for (Index l = 1; l <= p_ - 2; ++l)
      prim_blocks.push_back(w_prev_[sz(l)].cwiseProduct(s.lambda[sz(l)]) - s.lambda_tilde[sz(l)]);

    std::vector<Vector> dual_blocks;
    Vector kx = Vector::Zero(n_);
    for (Index l = 0; l < p_; ++l) kx.noalias() += A_[sz(l)].transpose() * s.mu[sz(l)];
    dual_blocks.push_back(std::move(kx));
    for (Index l = 0; l <= p_ - 2; ++l)
      dual_blocks.push_back(-w_[sz(l)].cwiseProduct(s.mu[sz(l)]) + G_[sz(l)] * s.eta[sz(l)] +
                            s.phi[sz(l)]);
    dual_blocks.push_back(s.v[sz(p_ - 1)] - w_[sz(p_ - 1)].cwiseProduct(s.mu[sz(p_ - 1)]));
    for (Index l = 1; l <= p_ - 2; ++l)
      dual_blocks.push_back(A_prev_[sz(l)] * s.eta[sz(l)] +
                            w_prev_[sz(l)].cwiseProduct(s.nu[sz(l)]));

    auto stack = [](const std::vector<Vector>& blocks) {
      Index total = 0;
      for (const auto& b : blocks) total += b.size();
      Vector out(total);
      Index at = 0;
      for (const auto& b : blocks) {
        out.segment(at, b.size()) = b;
        at += b.size();
      }
      return out;
    };
    r.k_prim = stack(prim_blocks);
    r.k_dual = stack(dual_blocks);
    r.norm = std::sqrt(r.k_prim.squaredNorm() + r.k_dual.squaredNorm());
    return r;
  }

  /// Balances the scaled primal and dual residual reductions; returns true and
  /// refactorizes once the step size drifts past the refactor ratio.
  bool rho_update(AdmmState& s, const IterationStats& st) {
    const double prim_scale = std::max(st.bq_minus_c, st.cs);
    const double dual_scale = std::max(st.hq, st.btu);
    if (prim_scale < 1e-12 || dual_scale < 1e-12) return false;
    const double num = st.prim_inf / prim_scale;
    const double den = st.dual_inf / dual_scale;
    if (den < 1e-12) return false;
    const double ratio = std::clamp(std::sqrt(num / den), 1e-6, 1e6);
    // recommendation relative to the running step size; it does not compound
    // across iterations while the factorization stays put
    return apply_rho_candidate(s, std::clamp(rho_eff() * ratio, 1e-6, 1e6));
  }

  bool rho_update(AdmmState& s, const Residuals& res) {
    IterationStats st = iteration_stats(s);
    st.prim_inf = inf_norm(res.k_prim);
    st.dual_inf = inf_norm(res.k_dual);
    return rho_update(s, st);
  }

  /// Records a step-size candidate; refactorizes (and switches the iteration
  /// to the candidate) once it drifts past the refactor ratio relative to the
  /// step size of the current factorization.
  bool apply_rho_candidate(AdmmState& s, double candidate) {
    s.rho = candidate;
    const double drift = s.rho / rho_at_factorization_;
    if (drift > config_.refactor_ratio || drift < 1.0 / config_.refactor_ratio) {
      factorize(s.rho);
      return true;
    }
    return false;
  }

private:
  static std::size_t sz(Index i) { return static_cast<std::size_t>(i); }
  static double inf_norm(const Vector& v) {
    return v.size() ? v.cwiseAbs().maxCoeff() : 0.0;
  }

  /// Scale applied to the constant pre-factors inside the stationarity
  /// system: the variable step size, unless the typeset placement is chosen.
  double penalty_scale(double rho) const { return config_.literal_rho ? 1.0 : rho; }

  /// Step size the iteration actually runs at: the one of the current
  /// factorization. The candidate in the state drifts between
  /// refactorizations without touching the iteration.
  double rho_eff() const { return rho_at_factorization_; }

  Vector level_h(const AdmmState& s, Index l) const {
    (void)s;
    return b_[sz(l)] - s.mu[sz(l)] / (penalty_scale(rho_eff()) * config_.rho_mu);
  }

  /// alpha-blended slack constraint block of level l, using the supplied
  /// previous split value.
  Vector relaxed_slack_block(const AdmmState& s, Index l, const Vector& z_prev) const {
    const double a = config_.alpha;
    return a * s.v[sz(l)] - (1.0 - a) * (-z_prev + b_hat_[sz(l)]) + b_hat_[sz(l)];
  }

  /// alpha-blended coupling constraint block of level l.
  Vector relaxed_coupling_block(const AdmmState& s, Index l, const Vector& lt_prev) const {
    const double a = config_.alpha;
    return a * w_prev_[sz(l)].cwiseProduct(s.lambda[sz(l)]) + (1.0 - a) * lt_prev;
  }

  /// h_{l,primal}: the slack-row right-hand side of the stationarity system.
  Vector level_h_primal(const AdmmState& s, Index l) const {
    const double pen = penalty_scale(rho_eff());
    Vector hp = -pen * config_.rho_mu * w_[sz(l)].cwiseProduct(b_[sz(l)]) +
                w_[sz(l)].cwiseProduct(s.mu[sz(l)]);
    hp.noalias() -= G_[sz(l)] * s.eta[sz(l)];
    hp += pen * config_.rho_phi * (s.z[sz(l)] - b_hat_[sz(l)]) - s.phi[sz(l)];
    return hp;
  }

  /// h_{l,dual}: the coupling-row right-hand side.
  Vector level_h_dual(const AdmmState& s, Index l) const {
    const double pen = penalty_scale(rho_eff());
    Vector hd = -(A_prev_[sz(l)] * s.eta[sz(l)]);
    hd += pen * config_.rho_nu * w_prev_[sz(l)].cwiseProduct(s.lambda_tilde[sz(l)]) -
          w_prev_[sz(l)].cwiseProduct(s.nu[sz(l)]);
    return hd;
  }

  /// M_{l-1}^{-1} h_{l,dual} with the penalty scale folded in; empty for the
  /// first level. The cached inverse itself never changes with the step size.
  Vector dual_solve(const AdmmState& s, Index l) const {
    if (l < 1) return Vector();
    return cache_.inverse(l - 1) * level_h_dual(s, l) / penalty_scale(rho_eff());
  }

  /// Right-hand side of the eliminated slack system of level l.
  Vector elimination_rhs(const AdmmState& s, Index l, const Vector& y) const {
    Vector g = level_h_primal(s, l);
    if (l >= 1)
      g.noalias() -= penalty_scale(rho_eff()) * config_.rho_eta *
                     winv_[sz(l)].cwiseProduct(C_[sz(l)].transpose() * y);
    return g;
  }

  HlspProblem problem_;
  AdmmConfig config_;
  Index p_ = 0, n_ = 0;
  Vector w_total_;
  std::vector<Matrix> A_, G_, A_prev_, C_, MC_, s_inv_;
  std::vector<Vector> b_, w_, winv_, b_hat_, b_prev_, w_prev_;
  BlockInverseCache cache_;
  Matrix K_lower_, K_x_;
  SymmetricFactor factor_;
  double rho_at_factorization_ = 0.0;
  int factorization_count_ = 0;
  int dual_cache_builds_ = 0;
};

// ============================================================================
// Spec-level operations on unweighted problems (shared by tests and tools)
// ============================================================================

/// Reduced positive-definite system assembled from the provided block-inverse
/// cache: per-level elimination terms plus the step-size weighted last level
/// and the proximal diagonal.
inline ReducedKkt assemble_reduced_kkt(const HlspProblem& problem, const AdmmConfig& config,
                                       const BlockInverseCache& cache, double rho) {
  config.check();
  require_valid(problem);
  const Index p = problem.num_levels();
  const Index n = problem.n_x;

  ReducedKkt out;
  out.K_x = config.sigma * Matrix::Identity(n, n);
  out.s_inv.resize(static_cast<std::size_t>(std::max<Index>(p - 1, 0)));
  for (Index l = 0; l <= p - 2; ++l) {
    const auto& Al = problem.levels[static_cast<std::size_t>(l)].A;
    Matrix S = (config.rho_mu + config.rho_phi) * Matrix::Identity(Al.rows(), Al.rows()) +
               config.rho_eta * (Al * Al.transpose());
    if (l >= 1) {
      const Matrix C = problem.prefix_matrix(l) * Al.transpose();
      S -= config.rho_eta * config.rho_eta * C.transpose() * cache.inverse(l - 1) * C;
    }
    S = 0.5 * (S + S.transpose());
    const Matrix Sinv = SymmetricFactor(S).inverse();
    out.s_inv[static_cast<std::size_t>(l)] = Sinv;
    Matrix mid = -config.rho_mu * Sinv;
    mid.diagonal().array() += 1.0;
    out.K_x += config.rho_mu * Al.transpose() * mid * Al;
  }
  const auto& Ap = problem.levels[static_cast<std::size_t>(p - 1)].A;
  out.K_x += (config.rho_mu / (1.0 + rho * config.rho_mu)) * Ap.transpose() * Ap;
  out.K_x = 0.5 * (out.K_x + out.K_x.transpose());
  out.factor = SymmetricFactor(out.K_x);
  out.rho_at_factorization = rho;
  return out;
}

inline Vector assemble_rhs(const HlspProblem& problem, const AdmmState& state,
                           const AdmmConfig& config) {
  AdmmConfig cfg = config;
  cfg.rho_init = state.rho;
  AdmmWorkspace ws(problem, problem, cfg);
  return ws.assemble_rhs(state);
}

inline void update_primal(const HlspProblem& problem, AdmmState& state, const AdmmConfig& config) {
  AdmmConfig cfg = config;
  cfg.rho_init = state.rho;
  AdmmWorkspace ws(problem, problem, cfg);
  ws.primal_update(state);
}

inline void update_splits(const HlspProblem& problem, AdmmState& state, const AdmmConfig& config) {
  AdmmConfig cfg = config;
  cfg.rho_init = state.rho;
  AdmmWorkspace ws(problem, problem, cfg);
  ws.split_update(state);
}

inline void dual_ascent(const HlspProblem& problem, AdmmState& state, const AdmmConfig& config,
                        const std::vector<Vector>* z_old = nullptr,
                        const std::vector<Vector>* lt_old = nullptr) {
  AdmmConfig cfg = config;
  cfg.rho_init = state.rho;
  AdmmWorkspace ws(problem, problem, cfg);
  ws.dual_update(state, z_old, lt_old);
}

inline Residuals compute_residuals(const HlspProblem& problem, const AdmmState& state,
                                   const AdmmConfig& config = {}) {
  AdmmConfig cfg = config;
  cfg.rho_init = state.rho;
  AdmmWorkspace ws(problem, problem, cfg);
  return ws.residuals(state);
}

// ============================================================================
// Driver
// ============================================================================

/// Full solve: equilibrate, factorize once, iterate primal / split / dual
/// updates with adaptive step size, then map the converged point back to the
/// original problem.
inline SolveReport solve_dhadm(const HlspProblem& problem, const AdmmConfig& config = {},
                               const std::optional<AdmmState>& warm_start = std::nullopt) {
  Stopwatch total;
  config.check();
  require_valid(problem);
  const Index p = problem.num_levels();

  SolveReport rep;
  rep.solver = "dhadm";

  HlspProblem scaled = problem;
  EquilibrationScaling scaling{Vector::Ones(problem.n_x), Vector::Ones(problem.total_rows())};
  if (config.precondition) {
    auto pre = precondition(problem, config.ruiz_iterations);
    scaled = std::move(pre.first);
    scaling = std::move(pre.second);
  }

  Stopwatch setup;
  AdmmWorkspace ws(scaled, problem, config, scaling.V_mu);
  rep.timings.kkt_ms += setup.elapsed_ms();

  AdmmState state = warm_start ? *warm_start : zero_state(scaled, config);
  if (warm_start && state.rho != ws.rho_at_factorization()) ws.factorize(state.rho);

  AdmmWorkspace::IterationStats stats;
  double best_norm = std::numeric_limits<double>::infinity();
  AdmmState best = state;
  bool converged = false;
  int iter = 0;
  std::vector<Vector> z_old, lt_old;
  for (; iter < config.max_iters; ++iter) {
    ws.primal_update(state, &rep.timings);
    z_old = state.z;
    lt_old = state.lambda_tilde;
    ws.split_update(state, &rep.timings);
    ws.dual_update(state, &z_old, &lt_old, &rep.timings);
    stats = ws.iteration_stats(state);
    state.iter = iter + 1;
    if (stats.norm < best_norm) {
      best_norm = stats.norm;
      best = state;
    }
    if (stats.norm < config.chi) {
      converged = true;
      ++iter;
      break;
    }
    Stopwatch rho_clock;
    const bool refactored = ws.rho_update(state, stats);
    if (refactored) rep.timings.kkt_ms += rho_clock.elapsed_ms();
  }

  const AdmmState& final_state = converged ? state : best;
  HlspSolution scaled_sol;
  scaled_sol.x = final_state.x;
  scaled_sol.v = final_state.v;
  scaled_sol.lambda = final_state.lambda;
  scaled_sol.per_level_objective = Vector::Zero(p);
  scaled_sol.kkt_residual = converged ? stats.norm : best_norm;
  HlspSolution sol = unscale_solution(scaled_sol, scaling, problem);

  rep.converged = converged;
  rep.status = converged ? "ok" : "max-iters";
  rep.x = sol.x;
  rep.v = sol.v;
  rep.lambda = sol.lambda;
  rep.per_level_objective = sol.per_level_objective;
  rep.theta = final_state.theta;
  rep.kkt_residual = scaled_sol.kkt_residual;
  rep.iterations = iter;
  rep.rho_refactor_count = ws.factorization_count() - 1;
  rep.factorization_count = ws.factorization_count();
  rep.dual_cache_builds = ws.dual_cache_builds();
  rep.wall_time_ms = total.elapsed_ms();
  return rep;
}

}  // namespace hlsp
