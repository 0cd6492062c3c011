#include <catch2/catch_amalgamated.hpp>

#include "hlsp/generator.hpp"
#include "hlsp/linalg.hpp"

using namespace hlsp;

TEST_CASE("symmetric factorization solves small systems") {
  const SymmetricFactor id(Matrix::Identity(3, 3));
  Vector b(3);
  b << 1, 2, 3;
  CHECK((id.solve(b) - b).norm() == 0.0);

  Matrix D = Matrix::Zero(2, 2);
  D(0, 0) = 4.0;
  D(1, 1) = 9.0;
  Vector rhs(2);
  rhs << 4, 9;
  CHECK((SymmetricFactor(D).solve(rhs) - Vector::Ones(2)).norm() <= 1e-15);

  Matrix K(2, 2);
  K << 2, 1, 1, 2;
  Vector r(2);
  r << 3, 3;
  CHECK((sym_solve(sym_factorize(K), r) - Vector::Ones(2)).norm() <= 1e-14);
}

TEST_CASE("symmetric factorization rejects indefinite matrices") {
  Matrix K(2, 2);
  K << 1, 2, 2, 1;  // eigenvalues 3 and -1
  CHECK_THROWS_MATCHES(sym_factorize(K), Error, Catch::Matchers::Predicate<Error>([](const Error& e) {
                         return e.code() == Error::Code::not_positive_definite;
                       }));
}

TEST_CASE("factorization accuracy on random positive-definite matrices") {
  NormalSampler rng(5);
  for (Index n : {5, 20, 50}) {
    Matrix G(n, n);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) G(i, j) = rng.normal();
    Matrix K = G * G.transpose() + 0.5 * Matrix::Identity(n, n);
    const SymmetricFactor f(K);
    CHECK((f.reconstruct() - K).norm() <= 1e-10 * K.norm());
    const Vector b = rng.normal_vector(n);
    CHECK((K * f.solve(b) - b).norm() <= 1e-9 * b.norm());
  }
}

TEST_CASE("block-inverse extension matches hand values") {
  BlockInverseCache cache;
  Matrix U1(1, 1);
  U1 << 2.0;
  cache.extend(Matrix(1, 0), U1);
  CHECK(cache.inverse(0)(0, 0) == Catch::Approx(0.5));

  Matrix T2(1, 1), U2(1, 1);
  T2 << 1.0;
  U2 << 2.0;
  extend_block_inverse(cache, T2, U2);
  Matrix expected(2, 2);
  expected << 2.0 / 3.0, -1.0 / 3.0, -1.0 / 3.0, 2.0 / 3.0;
  CHECK((cache.inverse(1) - expected).norm() <= 1e-14);

  // zero coupling appends an independent diagonal block
  BlockInverseCache diag;
  diag.extend(Matrix(2, 0), Matrix::Identity(2, 2) * 4.0);
  diag.extend(Matrix::Zero(2, 2), Matrix::Identity(2, 2));
  CHECK((diag.inverse(1).bottomRightCorner(2, 2) - Matrix::Identity(2, 2)).norm() <= 1e-14);
  CHECK(diag.inverse(1).topRightCorner(2, 2).norm() == 0.0);
}

TEST_CASE("block-inverse recursion equals direct inversion on random cascades") {
  NormalSampler rng(77);
  for (int rep = 0; rep < 3; ++rep) {
    const Index p = 10;
    std::vector<Matrix> blocks;
    Index total = 0;
    for (Index l = 0; l < p; ++l) {
      const Index m = 1 + static_cast<Index>(std::floor(3.0 * rng.uniform()));
      Matrix B(m, 2 * p);
      for (Index i = 0; i < m; ++i)
        for (Index j = 0; j < 2 * p; ++j) B(i, j) = rng.normal();
      blocks.push_back(B);
      total += m;
    }
    Matrix stacked(total, 2 * p);
    Index at = 0;
    for (const auto& B : blocks) {
      stacked.middleRows(at, B.rows()) = B;
      at += B.rows();
    }
    const Matrix full = stacked * stacked.transpose() + Matrix::Identity(total, total);

    BlockInverseCache cache;
    at = 0;
    for (const auto& B : blocks) {
      const Index m = B.rows();
      const Matrix U = full.block(at, at, m, m);
      const Matrix T = full.block(at, 0, m, at);
      cache.extend(T, U);
      at += m;
      const Matrix direct = full.topLeftCorner(at, at).inverse();
      CHECK((cache.inverse(cache.levels() - 1) - direct).norm() <= 1e-9 * direct.norm());
    }
  }
}

TEST_CASE("block-inverse extension dimension and rank errors") {
  BlockInverseCache cache;
  cache.extend(Matrix(1, 0), Matrix::Identity(1, 1));
  CHECK_THROWS_AS(cache.extend(Matrix(1, 2), Matrix::Identity(1, 1)), Error);

  Matrix T(1, 1), U(1, 1);
  T << 1.0;
  U << 1.0;  // Schur complement 1 - 1*1*1 = 0
  CHECK_THROWS_MATCHES(cache.extend(T, U), Error, Catch::Matchers::Predicate<Error>([](const Error& e) {
                         return e.code() == Error::Code::schur_not_invertible;
                       }));
}

TEST_CASE("equilibration normalizes rows and columns") {
  {
    Matrix A(2, 2);
    A << 1, -1, 0.5, 1;  // all rows and columns already unit infinity norm
    const auto s = ruiz_equilibrate(A);
    CHECK((s.row - Vector::Ones(2)).norm() == 0.0);
    CHECK((s.col - Vector::Ones(2)).norm() == 0.0);
  }
  {
    Matrix A = Matrix::Zero(2, 2);
    A(0, 0) = 4.0;
    A(1, 1) = 0.25;
    const auto s = ruiz_equilibrate(A);
    CHECK(s.row[0] == Catch::Approx(0.5));
    CHECK(s.row[1] == Catch::Approx(2.0));
    CHECK((s.row - s.col).norm() <= 1e-15);
    const Matrix scaled = s.row.asDiagonal() * A * s.col.asDiagonal();
    CHECK((scaled - Matrix::Identity(2, 2)).norm() <= 1e-12);
  }
  {
    Matrix A = Matrix::Zero(3, 2);
    A << 2, 0, 0, 0, 0, 8;  // middle row is zero
    const auto s = ruiz_equilibrate(A);
    CHECK(s.row[1] == 1.0);
    const Matrix scaled = s.row.asDiagonal() * A * s.col.asDiagonal();
    CHECK(std::abs(scaled(0, 0)) == Catch::Approx(1.0).margin(0.1));
    CHECK(std::abs(scaled(2, 1)) == Catch::Approx(1.0).margin(0.1));
  }
  NormalSampler rng(31);
  for (int rep = 0; rep < 20; ++rep) {
    Matrix A(6, 4);
    for (Index i = 0; i < 6; ++i)
      for (Index j = 0; j < 4; ++j) A(i, j) = rng.normal() * std::exp(3.0 * rng.normal());
    const auto s = ruiz_equilibrate(A);
    const Matrix scaled = s.row.asDiagonal() * A * s.col.asDiagonal();
    for (Index i = 0; i < 6; ++i) {
      const double nrm = scaled.row(i).cwiseAbs().maxCoeff();
      CHECK(nrm >= 0.9);
      CHECK(nrm <= 1.0 + 1e-9);
    }
    for (Index j = 0; j < 4; ++j) {
      const double nrm = scaled.col(j).cwiseAbs().maxCoeff();
      CHECK(nrm >= 0.9);
      CHECK(nrm <= 1.0 + 1e-9);
    }
  }
}

TEST_CASE("cubic roots on factored polynomials") {
  {
    const auto r = cubic_real_roots(0, -1, 0, 1);  // t^3 - t
    REQUIRE(r.size() == 3);
    CHECK(r[0] == Catch::Approx(-1.0));
    CHECK(r[1] == Catch::Approx(0.0).margin(1e-12));
    CHECK(r[2] == Catch::Approx(1.0));
  }
  {
    const auto r = cubic_real_roots(-6, 11, -6, 1);  // (t-1)(t-2)(t-3)
    REQUIRE(r.size() == 3);
    CHECK(r[0] == Catch::Approx(1.0));
    CHECK(r[1] == Catch::Approx(2.0));
    CHECK(r[2] == Catch::Approx(3.0));
  }
  {
    const auto r = cubic_real_roots(1, 0, 0, 1);  // t^3 = -1
    REQUIRE(r.size() == 1);
    CHECK(r[0] == Catch::Approx(-1.0));
  }
  CHECK_THROWS_MATCHES(cubic_real_roots(0, 0, 0, 0), Error,
                       Catch::Matchers::Predicate<Error>([](const Error& e) {
                         return e.code() == Error::Code::all_coefficients_zero;
                       }));
}

TEST_CASE("cubic degrades to quadratic and linear") {
  const auto quad = cubic_real_roots(-2, 1, 1, 0);  // (t+2)(t-1)
  REQUIRE(quad.size() == 2);
  CHECK(quad[0] == Catch::Approx(-2.0));
  CHECK(quad[1] == Catch::Approx(1.0));

  const auto lin = cubic_real_roots(3, -1.5, 0, 0);
  REQUIRE(lin.size() == 1);
  CHECK(lin[0] == Catch::Approx(2.0));

  CHECK(cubic_real_roots(1, 0, 1, 0).empty());  // t^2 = -1
  CHECK(cubic_real_roots(1, 0, 0, 0).empty());  // constant
}

TEST_CASE("cubic roots satisfy the residual bound on random coefficients") {
  NormalSampler rng(404);
  int three = 0, one = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    const double e1 = rng.normal(), e2 = rng.normal(), e3 = rng.normal(), e4 = rng.normal();
    const double maxc = std::max({std::abs(e1), std::abs(e2), std::abs(e3), std::abs(e4)});
    const auto roots = cubic_real_roots(e1, e2, e3, e4);
    for (double t : roots) {
      const double val = e1 + t * (e2 + t * (e3 + t * e4));
      const double bound = 1e-8 * maxc * std::pow(std::max(1.0, std::abs(t)), 3);
      CHECK(std::abs(val) <= bound);
    }
    // discriminant sign analysis for true cubics away from degeneracy
    if (std::abs(e4) > 1e-3 * maxc) {
      const double a = e4, b = e3, c = e2, d = e1;
      const double disc = 18 * a * b * c * d - 4 * b * b * b * d + b * b * c * c -
                          4 * a * c * c * c - 27 * a * a * d * d;
      if (std::abs(disc) > 1e-6 * std::pow(maxc, 4)) {
        if (disc > 0) {
          CHECK(roots.size() == 3);
          ++three;
        } else {
          CHECK(roots.size() == 1);
          ++one;
        }
      }
    }
  }
  CHECK(three > 0);
  CHECK(one > 0);
}
