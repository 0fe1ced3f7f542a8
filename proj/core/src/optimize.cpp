#include "vmm/optimize.hpp"

#include <cmath>
#include <limits>

#include "vmm/errors.hpp"
#include "vmm/rng.hpp"

namespace vmm {

bool Box::contains(const Vector& x) const {
  return x.size() == dim() && (x.array() >= lower.array()).all() && (x.array() <= upper.array()).all();
}

Vector Box::project(const Vector& x) const { return x.cwiseMax(lower).cwiseMin(upper); }

Vector Box::sample(SplitMix64& rng) const {
  Vector x(dim());
  for (Index i = 0; i < dim(); ++i) x(i) = rng.uniform(lower(i), upper(i));
  return x;
}

void Box::validate() const {
  require(lower.size() == upper.size(), ErrorCode::kDimensionMismatch, "box bounds differ in length");
  require((lower.array() <= upper.array()).all(), ErrorCode::kInvalidArgument, "box lower bound exceeds upper bound");
}

namespace {

Vector projected_gradient(const Vector& x, const Vector& g, const std::optional<Box>& box) {
  if (!box) return g;
  Vector pg = g;
  for (Index i = 0; i < x.size(); ++i) {
    if (x(i) <= box->lower(i) && g(i) > 0.0) pg(i) = 0.0;
    if (x(i) >= box->upper(i) && g(i) < 0.0) pg(i) = 0.0;
  }
  return pg;
}

}  // namespace

OptimizerResult quasi_newton(const Objective& f, const Vector& x0, const QuasiNewtonOptions& options,
                             const std::optional<Box>& box) {
  if (box) {
    box->validate();
    require(box->dim() == x0.size(), ErrorCode::kDimensionMismatch, "box dimension differs from parameter");
  }
  const Index dim = x0.size();
  Vector x = box ? box->project(x0) : x0;
  Vector g(dim);
  double value = f(x, &g);
  if (!std::isfinite(value) || !g.allFinite()) {
    raise(ErrorCode::kOptimizerDiverged, "objective is not finite at the starting point");
  }

  Matrix h_inv = Matrix::Identity(dim, dim);
  bool scaled = false;
  int small_steps = 0;
  OptimizerResult result;
  int iter = 0;
  for (; iter < options.max_iterations; ++iter) {
    const Vector pg = projected_gradient(x, g, box);
    if (pg.lpNorm<Eigen::Infinity>() <= options.gradient_tolerance) break;

    Vector direction = -h_inv * g;
    if (g.dot(direction) >= 0.0) {
      h_inv.setIdentity();
      direction = -g;
    }

    double step = 1.0;
    Vector x_new(dim), g_new(dim);
    double value_new = std::numeric_limits<double>::infinity();
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      x_new = x + step * direction;
      if (box) x_new = box->project(x_new);
      value_new = f(x_new, &g_new);
      if (std::isfinite(value_new) && g_new.allFinite() && value_new <= value + 1e-4 * g.dot(x_new - x)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      if (h_inv.isIdentity()) break;
      h_inv.setIdentity();
      continue;
    }

    const Vector s = x_new - x;
    const Vector y = g_new - g;
    const double improvement = value - value_new;
    x = x_new;
    g = g_new;
    value = value_new;

    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm() && sy > 0.0) {
      if (!scaled) {
        h_inv *= sy / y.squaredNorm();
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Matrix eye = Matrix::Identity(dim, dim);
      h_inv = (eye - rho * s * y.transpose()) * h_inv * (eye - rho * y * s.transpose()) + rho * s * s.transpose();
    }

    small_steps = improvement < options.improvement_tolerance ? small_steps + 1 : 0;
    if (small_steps >= 2) {
      ++iter;
      break;
    }
  }

  result.x = x;
  result.value = value;
  result.gradient_norm = projected_gradient(x, g, box).lpNorm<Eigen::Infinity>();
  result.iterations = iter;
  result.converged = result.gradient_norm <= options.gradient_tolerance;
  return result;
}

OptimizerResult quasi_newton_restarts(const Objective& f, const Vector& x0, const QuasiNewtonOptions& options,
                                      const std::optional<Box>& box, int restarts, std::uint64_t seed) {
  OptimizerResult best = quasi_newton(f, x0, options, box);
  if (!box) return best;
  SplitMix64 rng(seed);
  for (int r = 0; r < restarts; ++r) {
    OptimizerResult candidate;
    const Vector start = box->sample(rng);
    try {
      candidate = quasi_newton(f, start, options, box);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kOptimizerDiverged) throw;
      continue;
    }
    if (candidate.value < best.value) best = std::move(candidate);
  }
  return best;
}

}  // namespace vmm
