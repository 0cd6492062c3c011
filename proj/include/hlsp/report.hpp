#pragma once

#include <chrono>
#include <string>
#include <vector>

#include "hlsp/types.hpp"

namespace hlsp {

/// Per-phase wall times of one solve, in milliseconds.
struct PhaseTimings {
  double kkt_ms = 0.0;     ///< reduced system assembly + factorization (incl. refactorizations)
  double rhs_ms = 0.0;     ///< right-hand-side assembly
  double solve_ms = 0.0;   ///< triangular solves and slack recovery
  double lambda_ms = 0.0;  ///< coupling-multiplier updates
  double proj_ms = 0.0;    ///< split-variable projections
  double proj_roots_ms = 0.0;  ///< cubic root-finding portion of proj_ms
  double dual_ms = 0.0;    ///< multiplier ascent
};

/// Result of one solver run, shared by every solver backend.
struct SolveReport {
  std::string solver;
  std::string status = "ok";
  bool converged = false;

  Vector x;
  std::vector<Vector> v;
  std::vector<Vector> lambda;
  Vector per_level_objective;
  std::vector<double> theta;  ///< per-level multipliers of the quadratic dual constraints

  double kkt_residual = 0.0;
  int iterations = 0;
  double wall_time_ms = 0.0;
  PhaseTimings timings;
  int rho_refactor_count = 0;
  int factorization_count = 0;   ///< reduced-system factorizations (1 + refactorizations)
  int dual_cache_builds = 0;     ///< dual block-inverse cache constructions (always 1)

  HlspSolution solution() const {
    HlspSolution s;
    s.x = x;
    s.v = v;
    s.lambda = lambda;
    s.per_level_objective = per_level_objective;
    s.kkt_residual = kkt_residual;
    return s;
  }
};

/// Monotonic millisecond stopwatch for phase accounting.
class Stopwatch {
public:
  Stopwatch() : start_(clock::now()) {}
  double elapsed_ms() const {
    return std::chrono::duration<double, std::milli>(clock::now() - start_).count();
  }
  void restart() { start_ = clock::now(); }

private:
  using clock = std::chrono::steady_clock;
  clock::time_point start_;
};

}  // namespace hlsp
