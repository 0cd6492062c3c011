#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "hlsp/types.hpp"

namespace hlsp {

// ============================================================================
// Symmetric factorization
// ============================================================================

/// Unpivoted LDL^T factor of a symmetric positive-definite matrix.
/// The strict lower triangle holds L, the diagonal holds D.
class SymmetricFactor {
public:
  SymmetricFactor() = default;

  explicit SymmetricFactor(const Matrix& K, double pivot_tol = 1e-13) { factorize(K, pivot_tol); }

  void factorize(const Matrix& K, double pivot_tol = 1e-13) {
    if (K.rows() != K.cols())
      throw Error(Error::Code::dimension_mismatch, "factorize: matrix not square");
    const Index n = K.rows();
    const double scale = K.cwiseAbs().maxCoeff();
    ld_ = K;
    for (Index j = 0; j < n; ++j) {
      double d = ld_(j, j);
      for (Index k = 0; k < j; ++k) d -= ld_(j, k) * ld_(j, k) * ld_(k, k);
      if (!(d > pivot_tol * scale))
        throw Error(Error::Code::not_positive_definite,
                    "pivot " + std::to_string(d) + " at column " + std::to_string(j));
      ld_(j, j) = d;
      for (Index i = j + 1; i < n; ++i) {
        double s = ld_(i, j);
        for (Index k = 0; k < j; ++k) s -= ld_(i, k) * ld_(j, k) * ld_(k, k);
        ld_(i, j) = s / d;
      }
    }
  }

  Index dim() const { return ld_.rows(); }

  Vector solve(const Vector& rhs) const {
    if (rhs.size() != dim())
      throw Error(Error::Code::dimension_mismatch, "solve: rhs has wrong size");
    Vector x = rhs;
    const Index n = dim();
    for (Index i = 0; i < n; ++i)
      for (Index k = 0; k < i; ++k) x[i] -= ld_(i, k) * x[k];
    for (Index i = 0; i < n; ++i) x[i] /= ld_(i, i);
    for (Index i = n; i-- > 0;)
      for (Index k = i + 1; k < n; ++k) x[i] -= ld_(k, i) * x[k];
    return x;
  }

  Matrix solve(const Matrix& rhs) const {
    Matrix out(rhs.rows(), rhs.cols());
    for (Index c = 0; c < rhs.cols(); ++c) out.col(c) = solve(Vector(rhs.col(c)));
    return out;
  }

  Matrix inverse() const { return solve(Matrix(Matrix::Identity(dim(), dim()))); }

  /// L D L^T from the packed factor.
  Matrix reconstruct() const {
    const Index n = dim();
    Matrix L = Matrix::Identity(n, n);
    Vector d(n);
    for (Index j = 0; j < n; ++j) {
      d[j] = ld_(j, j);
      for (Index i = j + 1; i < n; ++i) L(i, j) = ld_(i, j);
    }
    return L * d.asDiagonal() * L.transpose();
  }

private:
  Matrix ld_;
};

inline SymmetricFactor sym_factorize(const Matrix& K) { return SymmetricFactor(K); }

inline Vector sym_solve(const SymmetricFactor& factor, const Vector& rhs) {
  return factor.solve(rhs);
}

// ============================================================================
// Recursive block inverses of the dual diagonal blocks
// ============================================================================

/// Explicit inverses of a nested family of symmetric blocks
///   M_l = [[M_{l-1}, T_l^T], [T_l, U_l]],
/// extended one level at a time. Only the Schur complement U - T M^{-1} T^T is
/// ever inverted, so the factorization cost per level is cubic in the new block
/// size rather than in the accumulated dimension.
class BlockInverseCache {
public:
  Index levels() const { return static_cast<Index>(inverses_.size()); }

  Index dim() const { return levels() == 0 ? 0 : inverses_.back().rows(); }

  /// M_l^{-1} covering blocks 0..l.
  const Matrix& inverse(Index l) const { return inverses_[static_cast<std::size_t>(l)]; }

  /// Appends the next diagonal block. T must have `dim()` columns; for the
  /// first level T is empty and the cache starts from U alone.
  void extend(const Matrix& T, const Matrix& U) {
    const Index nd = dim();
    const Index m = U.rows();
    if (U.cols() != m)
      throw Error(Error::Code::dimension_mismatch, "extend: diagonal block not square");
    if (T.rows() != m || T.cols() != nd)
      throw Error(Error::Code::dimension_mismatch, "extend: coupling block has wrong shape");

    Matrix schur = U;
    if (nd > 0) schur -= T * inverses_.back() * T.transpose();
    schur = 0.5 * (schur + schur.transpose());

    Matrix schur_inv;
    try {
      schur_inv = SymmetricFactor(schur).inverse();
    } catch (const Error&) {
      throw Error(Error::Code::schur_not_invertible,
                  "dual block extension has a non-invertible Schur complement");
    }

    Matrix next(nd + m, nd + m);
    if (nd > 0) {
      const Matrix& prev = inverses_.back();
      const Matrix W = prev * T.transpose();  // nd x m
      next.topLeftCorner(nd, nd) = prev + W * schur_inv * W.transpose();
      next.topRightCorner(nd, m) = -W * schur_inv;
      next.bottomLeftCorner(m, nd) = next.topRightCorner(nd, m).transpose();
    }
    next.bottomRightCorner(m, m) = schur_inv;
    inverses_.push_back(std::move(next));
  }

private:
  std::vector<Matrix> inverses_;
};

inline void extend_block_inverse(BlockInverseCache& cache, const Matrix& T, const Matrix& U) {
  cache.extend(T, U);
}

// ============================================================================
// Ruiz equilibration
// ============================================================================

struct RuizScaling {
  Vector row;  ///< D_r diagonal
  Vector col;  ///< D_c diagonal
};

/// Iterative row/column scaling driving every row and column of D_r A D_c to
/// unit infinity norm. Zero rows and columns keep scaling 1.
inline RuizScaling ruiz_equilibrate(const Matrix& A, int iterations = 15,
                                    double deviation_tol = 1e-3) {
  RuizScaling s{Vector::Ones(A.rows()), Vector::Ones(A.cols())};
  for (int it = 0; it < iterations; ++it) {
    const Matrix scaled = s.row.asDiagonal() * A * s.col.asDiagonal();
    double deviation = 0.0;
    Vector r(A.rows()), c(A.cols());
    for (Index i = 0; i < A.rows(); ++i) {
      const double nrm = scaled.row(i).cwiseAbs().maxCoeff();
      r[i] = nrm > 0.0 ? 1.0 / std::sqrt(nrm) : 1.0;
      deviation = std::max(deviation, nrm > 0.0 ? std::abs(1.0 - nrm) : 0.0);
    }
    for (Index j = 0; j < A.cols(); ++j) {
      const double nrm = scaled.col(j).cwiseAbs().maxCoeff();
      c[j] = nrm > 0.0 ? 1.0 / std::sqrt(nrm) : 1.0;
      deviation = std::max(deviation, nrm > 0.0 ? std::abs(1.0 - nrm) : 0.0);
    }
    if (deviation <= deviation_tol) break;
    s.row = s.row.cwiseProduct(r);
    s.col = s.col.cwiseProduct(c);
  }
  return s;
}

// ============================================================================
// Cubic real roots
// ============================================================================

namespace detail {

inline double poly_eval(double e1, double e2, double e3, double e4, double t) {
  return e1 + t * (e2 + t * (e3 + t * e4));
}

inline double poly_deriv(double e2, double e3, double e4, double t) {
  return e2 + t * (2.0 * e3 + t * 3.0 * e4);
}

inline void polish_and_insert(std::vector<double>& roots, double e1, double e2, double e3,
                              double e4, double t) {
  for (int i = 0; i < 2; ++i) {
    const double d = poly_deriv(e2, e3, e4, t);
    if (d == 0.0) break;
    const double step = poly_eval(e1, e2, e3, e4, t) / d;
    if (!std::isfinite(step)) break;
    t -= step;
  }
  for (double r : roots)
    if (std::abs(r - t) <= 1e-9 * std::max(1.0, std::abs(r))) return;
  roots.push_back(t);
}

}  // namespace detail

/// Real roots of e1 + e2 t + e3 t^2 + e4 t^3, closed form plus a Newton polish.
/// Degenerates to the quadratic / linear problem when leading coefficients
/// vanish relative to the coefficient scale.
inline std::vector<double> cubic_real_roots(double e1, double e2, double e3, double e4) {
  const double scale =
      std::max(std::max(std::abs(e1), std::abs(e2)), std::max(std::abs(e3), std::abs(e4)));
  if (scale == 0.0)
    throw Error(Error::Code::all_coefficients_zero, "cubic solve: zero polynomial");
  const double tiny = 1e-14 * scale;

  std::vector<double> roots;
  if (std::abs(e4) <= tiny) {
    if (std::abs(e3) <= tiny) {
      if (std::abs(e2) <= tiny) return roots;  // nonzero constant: no roots
      roots.push_back(-e1 / e2);
      return roots;
    }
    const double disc = e2 * e2 - 4.0 * e3 * e1;
    if (disc < 0.0) return roots;
    const double sq = std::sqrt(disc);
    const double q = -0.5 * (e2 + (e2 >= 0.0 ? sq : -sq));
    detail::polish_and_insert(roots, e1, e2, e3, 0.0, q / e3);
    if (q != 0.0) detail::polish_and_insert(roots, e1, e2, e3, 0.0, e1 / q);
    std::sort(roots.begin(), roots.end());
    return roots;
  }

  // normal form t^3 + a t^2 + b t + c
  const double a = e3 / e4;
  const double b = e2 / e4;
  const double c = e1 / e4;
  const double q = (a * a - 3.0 * b) / 9.0;
  const double r = (a * (2.0 * a * a - 9.0 * b) + 27.0 * c) / 54.0;
  const double q3 = q * q * q;

  if (r * r < q3) {
    // three real roots, trigonometric branch
    const double t = std::acos(std::clamp(r / std::sqrt(q3), -1.0, 1.0));
    const double f = -2.0 * std::sqrt(q);
    detail::polish_and_insert(roots, e1, e2, e3, e4, f * std::cos(t / 3.0) - a / 3.0);
    detail::polish_and_insert(roots, e1, e2, e3, e4, f * std::cos((t + 2.0 * M_PI) / 3.0) - a / 3.0);
    detail::polish_and_insert(roots, e1, e2, e3, e4, f * std::cos((t - 2.0 * M_PI) / 3.0) - a / 3.0);
  } else {
    const double u3 = -r - std::copysign(std::sqrt(r * r - q3), r);
    const double u = std::cbrt(u3);
    const double v = (u == 0.0) ? 0.0 : q / u;
    detail::polish_and_insert(roots, e1, e2, e3, e4, (u + v) - a / 3.0);
    const double imag = 0.5 * std::sqrt(3.0) * (u - v);
    if (std::abs(imag) <= 1e-12 * std::max(1.0, std::abs(u) + std::abs(v)))
      detail::polish_and_insert(roots, e1, e2, e3, e4, -0.5 * (u + v) - a / 3.0);
  }
  std::sort(roots.begin(), roots.end());
  return roots;
}

}  // namespace hlsp
