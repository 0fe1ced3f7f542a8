#pragma once

#include <cmath>
#include <cstring>
#include <functional>

#include <doctest.h>

#include "vmm/errors.hpp"
#include "vmm/moments.hpp"
#include "vmm/rng.hpp"

#define CHECK_CODE(expr, expected)                        \
  do {                                                    \
    bool thrown_ = false;                                 \
    try {                                                 \
      (void)(expr);                                       \
    } catch (const ::vmm::Error& e_) {                    \
      thrown_ = true;                                     \
      CHECK(e_.code() == (expected));                     \
    }                                                     \
    CHECK_MESSAGE(thrown_, "expected a vmm::Error");      \
  } while (0)

namespace vmm::test {

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b))); }

inline double strict_rel(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

inline Matrix random_matrix(SplitMix64& rng, Index rows, Index cols) {
  Matrix m(rows, cols);
  for (Index j = 0; j < cols; ++j) {
    for (Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
  }
  return m;
}

inline Vector random_vector(SplitMix64& rng, Index n) { return random_matrix(rng, n, 1).col(0); }

/// Central difference of a scalar function along each coordinate.
inline Vector central_difference(const std::function<double(const Vector&)>& f, const Vector& x, double h) {
  Vector g(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    Vector p = x;
    Vector q = x;
    p(i) += h;
    q(i) -= h;
    g(i) = (f(p) - f(q)) / (2.0 * h);
  }
  return g;
}

/// Records [z (dz), t (dt), y] for y = theta^T t + noise * e with T = a Z + 0.5 U + nu.
inline Dataset linear_iv_data(const MomentProblem& problem, Index n, const Vector& theta, double noise,
                              std::uint64_t seed, double a = 1.0) {
  SplitMix64 rng(seed);
  const Index b = theta.size();
  RecordMatrix rec(n, 2 * b + 1);
  for (Index i = 0; i < n; ++i) {
    const double u = rng.normal();
    double y = 0.0;
    for (Index l = 0; l < b; ++l) {
      const double z = rng.normal();
      const double t = a * z + 0.5 * u + 0.5 * rng.normal();
      rec(i, l) = z;
      rec(i, b + l) = t;
      y += theta(l) * t;
    }
    rec(i, 2 * b) = y + noise * (0.5 * u + rng.normal());
  }
  return make_dataset(problem, std::move(rec));
}

}  // namespace vmm::test
