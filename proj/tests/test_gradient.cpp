#include <catch2/catch_amalgamated.hpp>

#include "hlsp/baseline.hpp"
#include "hlsp/generator.hpp"
#include "hlsp/gradient.hpp"
#include "hlsp/ipm.hpp"
#include "support/oracles.hpp"

using namespace hlsp;

namespace {

KktPoint converged_point(const HlspProblem& prob) {
  IpmConfig cfg;
  cfg.chi = 1e-10;
  KktPoint pt;
  const auto rep = solve_dhipm(prob, cfg, &pt);
  REQUIRE(rep.converged);
  return pt;
}

}  // namespace

TEST_CASE("single level reduces to the plain least-squares differential") {
  HlspProblem p;
  p.n_x = 1;
  p.levels.resize(1);
  p.levels[0].A = Matrix::Identity(1, 1);
  p.levels[0].b = (Vector(1) << 2.0).finished();
  const KktPoint pt = converged_point(p);
  const auto sys = assemble_differential(p, pt);
  REQUIRE(sys.K.rows() == 3);
  Matrix expected(3, 3);
  expected << 0, 0, 1,  // stationarity row: A^T dmu
      0, 1, -1,         // slack row: dv - dmu
      1, -1, 0;         // constraint row: A dx - dv
  CHECK((sys.K - expected).norm() <= 1e-12);

  const Vector d = jacobian_wrt_b(p, pt, sys, 0, 0);
  CHECK(d[sys.layout.x_off] == Catch::Approx(1.0));
}

TEST_CASE("scalar sensitivity with respect to the matrix entry") {
  HlspProblem p;
  p.n_x = 1;
  p.levels.resize(1);
  p.levels[0].A = (Matrix(1, 1) << 2.0).finished();
  p.levels[0].b = (Vector(1) << 4.0).finished();
  const KktPoint pt = converged_point(p);
  const auto sys = assemble_differential(p, pt);
  const Vector d = jacobian_wrt_A(p, pt, sys, 0, 0, 0);
  CHECK(d[sys.layout.x_off] == Catch::Approx(-1.0).epsilon(1e-8));
}

TEST_CASE("coupling columns carry only the documented blocks") {
  GeneratorOptions g;
  g.dependent_rows = false;
  const auto prob = generate_random_hierarchy(3, 1200, g);
  const KktPoint pt = converged_point(prob);
  const auto sys = assemble_differential(prob, pt);
  const auto& L = sys.layout;
  const Index lo = L.lambda_off[1];
  const Index nd = L.lambda_dim[1];
  REQUIRE(nd > 0);
  for (Index i = 0; i < L.dim; ++i) {
    const double colmax = sys.K.block(i, lo, 1, nd).cwiseAbs().maxCoeff();
    if (colmax == 0.0) continue;
    // only the dual-constraint rows (A_prev^T) and the complementarity row
    // (theta * b_prev^T) of level 1 may touch the coupling columns
    const bool eta_row = (i >= L.eta_off[1] && i < L.eta_off[1] + L.n_x);
    const bool compl_row = (i == L.theta_off[1]);
    CHECK((eta_row || compl_row));
  }
}

TEST_CASE("differential matrix matches finite differences of the optimality map") {
  GeneratorOptions g;
  g.dependent_rows = false;
  const auto prob = generate_random_hierarchy(2, 1210, g);
  const KktPoint pt = converged_point(prob);
  const auto sys = assemble_differential(prob, pt);
  // the assembled system must be consistent at the solution: the minimum-norm
  // sensitivity reproduces every right-hand side
  for (Index l = 0; l < 2; ++l)
    for (Index i = 0; i < prob.level_rows(l); ++i) {
      const Vector rhs = differential_rhs_b(prob, pt, sys, l, i);
      const Vector d = solve_differential(sys, rhs);
      CHECK((sys.K * d - rhs).norm() <= 1e-9 * (1.0 + rhs.norm()));
    }
}

TEST_CASE("sensitivities match central finite differences") {
  GeneratorOptions g;
  g.dependent_rows = false;
  for (Index p = 1; p <= 3; ++p) {
    const auto prob = generate_random_hierarchy(p, 1220 + p, g);
    const KktPoint pt = converged_point(prob);
    const auto sys = assemble_differential(prob, pt);
    for (Index l = 0; l < p; ++l)
      for (Index i = 0; i < prob.level_rows(l); ++i) {
        const Vector d = jacobian_wrt_b(prob, pt, sys, l, i);
        const Vector an = d.segment(sys.layout.x_off, prob.n_x);
        const Vector fd = test::fd_x_wrt_b(prob, l, i);
        for (Index j = 0; j < prob.n_x; ++j)
          CHECK(std::abs(an[j] - fd[j]) <= 1e-5 * (1.0 + std::abs(an[j])));
      }
    // sampled matrix entries
    NormalSampler rng(1230 + p);
    for (int rep = 0; rep < 10; ++rep) {
      const Index l = static_cast<Index>(rng.uniform() * p);
      const Index i = static_cast<Index>(rng.uniform() * prob.level_rows(l));
      const Index j = static_cast<Index>(rng.uniform() * prob.n_x);
      const Vector d = jacobian_wrt_A(prob, pt, sys, l, i, j);
      const Vector an = d.segment(sys.layout.x_off, prob.n_x);
      const Vector fd = test::fd_x_wrt_A(prob, l, i, j);
      for (Index k = 0; k < prob.n_x; ++k)
        CHECK(std::abs(an[k] - fd[k]) <= 1e-5 * (1.0 + std::abs(an[k])));
    }
  }
}

TEST_CASE("right-hand sides are linear in the perturbation") {
  GeneratorOptions g;
  g.dependent_rows = false;
  const auto prob = generate_random_hierarchy(3, 1240, g);
  const KktPoint pt = converged_point(prob);
  const auto sys = assemble_differential(prob, pt);
  const Vector r1 = differential_rhs_b(prob, pt, sys, 1, 0);
  const Vector r2 = differential_rhs_b(prob, pt, sys, 2, 1);
  // the builder is exactly additive; the solved sensitivities are additive up
  // to the conditioning of the differential system
  const Vector d1 = solve_differential(sys, r1);
  const Vector d2 = solve_differential(sys, r2);
  const Vector dsum = solve_differential(sys, r1 + r2);
  CHECK((dsum - d1 - d2).norm() <= 1e-4 * (1.0 + dsum.norm()));
}

TEST_CASE("unconverged points are rejected") {
  const auto prob = generate_random_hierarchy(2, 1250);
  KktPoint garbage;
  garbage.x = Vector::Ones(prob.n_x);
  garbage.v = {Vector::Ones(1), Vector::Ones(2)};
  garbage.mu = {Vector::Ones(1), Vector::Ones(2)};
  garbage.eta = {Vector::Ones(prob.n_x), Vector()};
  garbage.lambda = {Vector(), Vector()};
  garbage.theta = {1.0, 0.0};
  garbage.w = {1.0, 0.0};
  CHECK_THROWS_MATCHES(assemble_differential(prob, garbage), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& e) {
                         return e.code() == Error::Code::point_not_converged;
                       }));
}
