#pragma once

#include <cstdint>
#include <random>

#include "hlsp/types.hpp"

namespace hlsp {

/// Deterministic normal sampler. std::normal_distribution is implementation
/// defined, so Box-Muller on top of the fully specified mt19937_64 keeps
/// generated problems bit-identical across standard libraries.
class NormalSampler {
public:
  explicit NormalSampler(std::uint64_t seed) : eng_(seed) {}

  double uniform() {
    // 53-bit mantissa in [0, 1)
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  Vector normal_vector(Index n) {
    Vector v(n);
    for (Index i = 0; i < n; ++i) v[i] = normal();
    return v;
  }

private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// splitmix64 mixer, used to derive independent per-cell seeds.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1) + 0xbf58476d1ce4e5b9ULL * (c + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

struct GeneratorOptions {
  /// Replace ceil(m_l / 2) rows of each level by in-level linear combinations
  /// plus additive noise of relative magnitude 1e-12.
  bool dependent_rows = true;
  double noise_magnitude = 1e-12;
};

/// Randomized test hierarchy: n_x = p variables, level l has l rows, all
/// entries standard normal. With `dependent_rows`, the trailing ceil(m_l/2)
/// rows of each level are combinations of that level's leading rows (levels
/// with a single row are left untouched).
inline HlspProblem generate_random_hierarchy(Index p, std::uint64_t seed,
                                             const GeneratorOptions& opts = {}) {
  if (p < 1) throw Error(Error::Code::invalid_argument, "level count must be >= 1");

  NormalSampler rng(seed);
  HlspProblem problem;
  problem.n_x = p;
  problem.levels.resize(static_cast<std::size_t>(p));

  for (Index l = 0; l < p; ++l) {
    const Index m = l + 1;
    Matrix A(m, p);
    for (Index i = 0; i < m; ++i)
      for (Index j = 0; j < p; ++j) A(i, j) = rng.normal();

    if (opts.dependent_rows && m >= 2) {
      const Index dep = (m + 1) / 2;
      const Index base = m - dep;
      for (Index i = base; i < m; ++i) {
        Vector combo = Vector::Zero(p);
        for (Index k = 0; k < base; ++k) combo += rng.normal() * A.row(k).transpose();
        Vector dir = rng.normal_vector(p);
        const double dn = dir.norm();
        if (dn > 1.0) dir /= dn;  // ||dir|| <= 1 bounds the off-span distance
        A.row(i) = combo + opts.noise_magnitude * combo.norm() * dir;
      }
    }

    problem.levels[static_cast<std::size_t>(l)].A = A;
    problem.levels[static_cast<std::size_t>(l)].b = rng.normal_vector(m);
  }
  return problem;
}

}  // namespace hlsp
