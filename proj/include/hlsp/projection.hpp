#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include "hlsp/linalg.hpp"
#include "hlsp/types.hpp"

namespace hlsp {

/// Inputs of the per-level projection onto the quadratic dual constraint set
///   { (z, lt) : z^T z - b_hat^T b_hat + lt^T b_prev <= 0 }.
/// a1/a2 are the unconstrained targets for z and the coupling split variable;
/// a2 and b_prev are empty on the first level. Non-empty v_phi / v_nu request
/// the diagonally scaled objective ||diag(v_phi) z - a1||^2 + ... handled by
/// the iterative path.
struct ProjectionInput {
  Vector a1;
  Vector a2;
  Vector b_hat;
  Vector b_prev;
  Vector v_phi;
  Vector v_nu;

  bool scaled() const { return v_phi.size() > 0 || v_nu.size() > 0; }
};

enum class ProjectionPath { cubic, ipm };

struct ProjectionResult {
  Vector z;
  Vector lambda_tilde;
  double theta = 0.0;
  ProjectionPath path = ProjectionPath::cubic;

  /// Constraint value z^T z - b_hat^T b_hat + lt^T b_prev at the result.
  double constraint_value(const ProjectionInput& in) const {
    double g = z.squaredNorm() - in.b_hat.squaredNorm();
    if (in.b_prev.size() > 0) g += lambda_tilde.dot(in.b_prev);
    return g;
  }
};

namespace detail {

inline double proj_constraint(const ProjectionInput& in, double theta) {
  const double d1 = in.b_prev.size() ? in.b_prev.squaredNorm() : 0.0;
  const double a2b = in.b_prev.size() ? in.a2.dot(in.b_prev) : 0.0;
  const double denom = 1.0 + 2.0 * theta;
  return in.a1.squaredNorm() / (denom * denom) - in.b_hat.squaredNorm() + a2b - theta * d1;
}

}  // namespace detail

/// Analytic projection: the multiplier of the quadratic constraint solves a
/// cubic, each candidate root is clamped nonnegative and screened for
/// feasibility, and the feasible candidate closest to the target wins.
inline ProjectionResult project_cubic(const ProjectionInput& in) {
  if (in.scaled())
    throw Error(Error::Code::invalid_argument, "cubic projection requires identity scalings");

  const double d1 = in.b_prev.size() ? in.b_prev.squaredNorm() : 0.0;
  const double d2 = in.b_hat.squaredNorm() - (in.b_prev.size() ? in.a2.dot(in.b_prev) : 0.0);
  const double d3 = in.a1.squaredNorm();
  const double scale = std::max({1.0, d1, std::abs(d2), d3});
  const double feas_tol = 1e-12 * scale;

  ProjectionResult res;
  res.path = ProjectionPath::cubic;

  // unconstrained point already feasible
  if (d3 - d2 <= feas_tol) {
    res.z = in.a1;
    res.lambda_tilde = in.a2;
    res.theta = 0.0;
    return res;
  }

  if (d1 <= 1e-14 * scale) {
    // no coupling term: projection onto the ball ||z|| <= ||b_hat||
    const double radius2 = in.b_hat.squaredNorm();
    res.lambda_tilde = in.a2;
    if (radius2 <= feas_tol) {
      // degenerate set {z = 0}; multiplier is a limit, recorded as zero
      res.z = Vector::Zero(in.a1.size());
      res.theta = 0.0;
      return res;
    }
    const double ratio = std::sqrt(d3 / radius2);
    res.theta = std::max(0.0, 0.5 * (ratio - 1.0));
    res.z = in.a1 / (1.0 + 2.0 * res.theta);
    return res;
  }

  const double e1 = d3 - d2;
  const double e2 = -d1 - 4.0 * d2;
  const double e3 = -4.0 * d1 - 4.0 * d2;
  const double e4 = -4.0 * d1;

  double best_theta = -1.0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (double root : cubic_real_roots(e1, e2, e3, e4)) {
    double theta = std::max(0.0, root);
    // a couple of guarded Newton steps on the true constraint keep the result
    // inside the set to tight absolute tolerance
    for (int it = 0; it < 4; ++it) {
      const double g = detail::proj_constraint(in, theta);
      if (g <= feas_tol) break;
      const double denom = 1.0 + 2.0 * theta;
      const double dg = -4.0 * d3 / (denom * denom * denom) - d1;
      if (dg >= 0.0) break;
      theta = std::max(0.0, theta - g / dg);
    }
    if (detail::proj_constraint(in, theta) > feas_tol) continue;
    const Vector z = in.a1 / (1.0 + 2.0 * theta);
    const Vector lt = in.b_prev.size() ? Vector(in.a2 - theta * in.b_prev) : Vector();
    double dist = (z - in.a1).squaredNorm();
    if (in.b_prev.size()) dist += (lt - in.a2).squaredNorm();
    if (dist < best_dist) {
      best_dist = dist;
      best_theta = theta;
      res.z = z;
      res.lambda_tilde = lt;
    }
  }
  if (best_theta < 0.0)
    throw Error(Error::Code::no_feasible_root, "projection found no feasible multiplier");
  res.theta = best_theta;
  if (in.b_prev.size() == 0) res.lambda_tilde = in.a2;
  return res;
}

struct ProjectionIpmOptions {
  double tol = 1e-10;              ///< termination threshold on the optimality residual
  double barrier_init = 1.0;
  double barrier_reduction = 0.2;
  double fraction_to_boundary = 0.995;
  int max_outer = 80;
  int max_inner = 60;
};

/// Factorization-free interior-point projection. Handles diagonal scalings of
/// the targets; every Newton step reduces to a scalar multiplier update plus
/// three diagonal back-substitutions.
inline ProjectionResult project_ipm(const ProjectionInput& in,
                                    const ProjectionIpmOptions& opts = {}) {
  const Index m = in.a1.size();
  const Index nd = in.a2.size();
  const Vector vphi = in.v_phi.size() ? in.v_phi : Vector::Ones(m);
  const Vector vnu = in.v_nu.size() ? in.v_nu : Vector::Ones(nd);
  const Vector vphi2 = vphi.cwiseAbs2();
  const Vector vnu2 = vnu.cwiseAbs2();

  double theta = 1.0;
  double w = 1.0;
  Vector z = (vphi2.array() + 2.0 * theta).inverse().matrix().asDiagonal() *
             vphi.cwiseProduct(in.a1);
  Vector lt(nd);
  if (nd > 0)
    lt = vnu2.cwiseInverse().cwiseProduct(vnu.cwiseProduct(in.a2) - theta * in.b_prev);

  auto residual = [&](double barrier, Vector& kz, Vector& klt, double& kw, double& kth) {
    kz = vphi2.cwiseProduct(z) + 2.0 * theta * z - vphi.cwiseProduct(in.a1);
    if (nd > 0) klt = vnu2.cwiseProduct(lt) - vnu.cwiseProduct(in.a2) + theta * in.b_prev;
    kw = theta * w - barrier;
    kth = z.squaredNorm() - in.b_hat.squaredNorm() + (nd > 0 ? lt.dot(in.b_prev) : 0.0) + w;
  };
  auto residual_norm = [&](double barrier) {
    Vector kz, klt;
    double kw, kth;
    residual(barrier, kz, klt, kw, kth);
    double s = kz.squaredNorm() + kw * kw + kth * kth;
    if (nd > 0) s += klt.squaredNorm();
    return std::sqrt(s);
  };

  double barrier = opts.barrier_init;
  for (int outer = 0; outer < opts.max_outer; ++outer) {
    if (residual_norm(0.0) <= opts.tol) break;
    for (int inner = 0; inner < opts.max_inner; ++inner) {
      if (residual_norm(barrier) <= std::max(opts.tol, 0.1 * barrier)) break;

      Vector kz, klt;
      double kw, kth;
      residual(barrier, kz, klt, kw, kth);

      const Vector dzdiag = (vphi2.array() + 2.0 * theta).inverse();
      double t1 = 4.0 * z.dot(dzdiag.cwiseProduct(z)) + w / theta;
      double t2 = -2.0 * z.dot(dzdiag.cwiseProduct(kz)) - kw / theta + kth;
      if (nd > 0) {
        t1 += in.b_prev.dot(vnu2.cwiseInverse().cwiseProduct(in.b_prev));
        t2 -= in.b_prev.dot(vnu2.cwiseInverse().cwiseProduct(klt));
      }
      const double dtheta = t2 / t1;
      const Vector dz = dzdiag.cwiseProduct(-2.0 * z * dtheta - kz);
      const double dw = (-w * dtheta - kw) / theta;
      Vector dlt(nd);
      if (nd > 0) dlt = vnu2.cwiseInverse().cwiseProduct(-in.b_prev * dtheta - klt);

      double alpha = 1.0;
      if (dtheta < 0.0) alpha = std::min(alpha, -opts.fraction_to_boundary * theta / dtheta);
      if (dw < 0.0) alpha = std::min(alpha, -opts.fraction_to_boundary * w / dw);

      theta += alpha * dtheta;
      w += alpha * dw;
      z += alpha * dz;
      if (nd > 0) lt += alpha * dlt;
    }
    barrier *= opts.barrier_reduction;
  }

  if (residual_norm(0.0) > opts.tol)
    throw Error(Error::Code::max_iters_exceeded, "projection interior-point did not converge");

  ProjectionResult res;
  res.z = z;
  res.lambda_tilde = lt;
  res.theta = theta <= opts.tol ? 0.0 : theta;
  res.path = ProjectionPath::ipm;
  return res;
}

}  // namespace hlsp
