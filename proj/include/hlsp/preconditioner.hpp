#pragma once

#include <utility>

#include "hlsp/linalg.hpp"
#include "hlsp/types.hpp"

namespace hlsp {

/// Diagonal equilibration of a hierarchy. Only the stacked constraint matrix is
/// Ruiz-scaled (A_bar = V_mu A L_x). The dependent blocks are fixed by that
/// choice: slack scaling is identity, coupling-multiplier scaling per level is
/// the matching leading sub-block of V_mu, the multiplier scalings of the split
/// constraints stay identity so the per-level projection keeps its cubic form.
struct EquilibrationScaling {
  Vector L_x;   ///< column scaling, one entry per variable
  Vector V_mu;  ///< row scaling over all stacked constraint rows

  bool identity() const {
    return (L_x.array() == 1.0).all() && (V_mu.array() == 1.0).all();
  }

  /// Rows of V_mu belonging to level l.
  Vector v_mu_level(const HlspProblem& problem, Index l) const {
    return V_mu.segment(problem.dual_dim(l), problem.level_rows(l));
  }

  /// Leading block of V_mu covering levels 0..l-1 (the scaling of level l's
  /// coupling multiplier).
  Vector v_mu_prefix(const HlspProblem& problem, Index l) const {
    return V_mu.head(problem.dual_dim(l));
  }
};

/// Scales the hierarchy for iteration. The returned problem holds
/// V_mu,l A_l L_x and V_mu,l b_l; the scaling object carries everything needed
/// to map a converged point back.
inline std::pair<HlspProblem, EquilibrationScaling> precondition(const HlspProblem& problem,
                                                                 int ruiz_iterations = 15) {
  require_valid(problem);
  const RuizScaling ruiz = ruiz_equilibrate(problem.stacked_matrix(), ruiz_iterations);
  EquilibrationScaling scaling{ruiz.col, ruiz.row};

  HlspProblem scaled = problem;
  Index r = 0;
  for (auto& lv : scaled.levels) {
    const Index m = lv.rows();
    const Vector w = scaling.V_mu.segment(r, m);
    lv.A = w.asDiagonal() * lv.A * scaling.L_x.asDiagonal();
    lv.b = w.cwiseProduct(lv.b);
    r += m;
  }
  return {std::move(scaled), std::move(scaling)};
}

/// Maps a point of the scaled hierarchy back to the original one:
/// x = L_x x_bar, slacks are shared, coupling multipliers pick up their V_mu
/// prefix blocks. Objectives are recomputed from the original data.
inline HlspSolution unscale_solution(const HlspSolution& scaled, const EquilibrationScaling& scaling,
                                     const HlspProblem& original) {
  if (scaled.x.size() != original.n_x || scaling.L_x.size() != original.n_x)
    throw Error(Error::Code::dimension_mismatch, "unscale_solution: variable size mismatch");

  HlspSolution out = scaled;
  out.x = scaling.L_x.cwiseProduct(scaled.x);
  for (std::size_t l = 0; l < out.lambda.size(); ++l) {
    if (out.lambda[l].size() == 0) continue;
    const Vector w = scaling.v_mu_prefix(original, static_cast<Index>(l));
    if (w.size() != out.lambda[l].size())
      throw Error(Error::Code::dimension_mismatch, "unscale_solution: multiplier size mismatch");
    out.lambda[l] = w.cwiseProduct(out.lambda[l]);
  }
  out.per_level_objective = objective_per_level(original, out.x);
  for (Index l = 0; l < original.num_levels(); ++l) {
    const auto& lv = original.levels[static_cast<std::size_t>(l)];
    out.v[static_cast<std::size_t>(l)] = lv.A * out.x - lv.b;
  }
  return out;
}

}  // namespace hlsp
