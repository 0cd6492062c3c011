#include <catch2/catch_amalgamated.hpp>

#include "hlsp/generator.hpp"
#include "hlsp/projection.hpp"
#include "support/oracles.hpp"

using namespace hlsp;

namespace {

ProjectionInput random_input(NormalSampler& rng, Index m, Index nd, double spread = 2.0) {
  ProjectionInput in;
  in.a1 = spread * rng.normal_vector(m);
  in.b_hat = rng.normal_vector(m);
  if (nd > 0) {
    in.a2 = spread * rng.normal_vector(nd);
    in.b_prev = rng.normal_vector(nd);
  }
  return in;
}

void check_against_oracle(const ProjectionInput& in, double tol) {
  const ProjectionResult res = project_cubic(in);
  const auto oracle = test::bisection_project(in);
  CHECK((res.z - oracle.z).norm() <= tol * (1.0 + oracle.z.norm()));
  if (in.b_prev.size() > 0)
    CHECK((res.lambda_tilde - oracle.lambda_tilde).norm() <= tol * (1.0 + oracle.lambda_tilde.norm()));
  CHECK(std::abs(res.theta - oracle.theta) <= tol * (1.0 + oracle.theta));
  CHECK(res.constraint_value(in) <= 1e-10);
  CHECK(res.theta * res.constraint_value(in) >= -1e-8);
  CHECK(res.theta * res.constraint_value(in) <= 1e-8);
}

}  // namespace

TEST_CASE("feasible candidates pass through untouched") {
  ProjectionInput in;
  in.a1 = (Vector(2) << 0.1, 0.1).finished();
  in.b_hat = (Vector(2) << 1.0, 1.0).finished();
  const auto res = project_cubic(in);
  CHECK(res.theta == 0.0);
  CHECK((res.z - in.a1).norm() == 0.0);
}

TEST_CASE("first-level projection is the radial ball projection") {
  ProjectionInput in;
  in.a1 = (Vector(1) << 2.0).finished();
  in.b_hat = (Vector(1) << 1.0).finished();
  const auto res = project_cubic(in);
  CHECK(res.z[0] == Catch::Approx(1.0));
  CHECK(res.theta == Catch::Approx(0.5));
}

TEST_CASE("coupled projection matches the hand-solved instance and the oracle") {
  ProjectionInput in;
  in.a1 = (Vector(1) << 1.0).finished();
  in.a2 = (Vector(1) << 1.0).finished();
  in.b_hat = (Vector(1) << 0.5).finished();
  in.b_prev = (Vector(1) << 2.0).finished();
  const auto res = project_cubic(in);
  CHECK(res.theta == Catch::Approx(0.5).epsilon(1e-8));
  CHECK(res.z[0] == Catch::Approx(0.5).epsilon(1e-8));
  CHECK(res.lambda_tilde[0] == Catch::Approx(0.0).margin(1e-8));
  check_against_oracle(in, 1e-8);
}

TEST_CASE("degenerate set with zero radius collapses to the origin") {
  ProjectionInput in;
  in.a1 = (Vector(2) << 1.0, -2.0).finished();
  in.b_hat = Vector::Zero(2);
  const auto res = project_cubic(in);
  CHECK(res.z.norm() == 0.0);
  CHECK(res.constraint_value(in) <= 1e-10);
}

TEST_CASE("cubic projection agrees with bisection across sizes") {
  NormalSampler rng(909);
  for (Index m = 1; m <= 6; ++m) {
    for (int rep = 0; rep < 200; ++rep) {
      const Index nd = (m == 1) ? 0 : m - 1;
      check_against_oracle(random_input(rng, m, nd), 1e-8);
    }
  }
}

TEST_CASE("projection is idempotent") {
  NormalSampler rng(910);
  for (int rep = 0; rep < 50; ++rep) {
    const auto in = random_input(rng, 3, 2);
    const auto res = project_cubic(in);
    ProjectionInput again = in;
    again.a1 = res.z;
    again.a2 = res.lambda_tilde;
    const auto res2 = project_cubic(again);
    CHECK(res2.theta == 0.0);
    CHECK((res2.z - res.z).norm() == 0.0);
  }
}

TEST_CASE("interior-point projection agrees with the cubic path") {
  NormalSampler rng(911);
  for (int rep = 0; rep < 100; ++rep) {
    const Index m = 1 + rep % 4;
    const Index nd = (m == 1) ? 0 : m;
    const auto in = random_input(rng, m, nd);
    const auto cub = project_cubic(in);
    const auto ipm = project_ipm(in);
    CHECK((cub.z - ipm.z).norm() <= 1e-6 * (1.0 + cub.z.norm()));
    if (nd > 0)
      CHECK((cub.lambda_tilde - ipm.lambda_tilde).norm() <= 1e-6 * (1.0 + cub.lambda_tilde.norm()));
  }
}

TEST_CASE("interior-point projection keeps feasible interior points") {
  ProjectionInput in;
  in.a1 = (Vector(2) << 0.2, -0.1).finished();
  in.b_hat = (Vector(2) << 2.0, 1.0).finished();
  ProjectionIpmOptions opts;
  opts.tol = 1e-8;
  const auto res = project_ipm(in, opts);
  CHECK(res.theta <= opts.tol);
  CHECK((res.z - in.a1).norm() <= opts.tol);
}

TEST_CASE("interior-point projection handles diagonal scalings") {
  // minimize 0.5 (2 z - 3)^2 subject to z^2 <= 1
  ProjectionInput in;
  in.a1 = (Vector(1) << 3.0).finished();
  in.b_hat = (Vector(1) << 1.0).finished();
  in.v_phi = (Vector(1) << 2.0).finished();
  const auto res = project_ipm(in);

  // bisection over the multiplier of the scaled stationarity z = V a / (V^2 + 2 t)
  double lo = 0.0, hi = 8.0;
  auto g = [&](double t) {
    const double z = 2.0 * 3.0 / (4.0 + 2.0 * t);
    return z * z - 1.0;
  };
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (g(mid) > 0 ? lo : hi) = mid;
  }
  const double t_star = 0.5 * (lo + hi);
  CHECK(res.theta == Catch::Approx(t_star).margin(1e-6));
  CHECK(res.z[0] == Catch::Approx(6.0 / (4.0 + 2.0 * t_star)).margin(1e-6));

  CHECK_THROWS_AS(project_cubic(in), Error);  // the cubic path requires identity scalings
}
