#pragma once

#include <cstdint>
#include <functional>
#include <optional>

#include "vmm/numerics.hpp"

namespace vmm {

class SplitMix64;

/// Axis-aligned parameter box.
struct Box {
  Vector lower;
  Vector upper;

  Index dim() const { return lower.size(); }
  bool contains(const Vector& x) const;
  Vector project(const Vector& x) const;
  Vector sample(SplitMix64& rng) const;
  void validate() const;
};

struct QuasiNewtonOptions {
  double gradient_tolerance = 1e-8;
  double improvement_tolerance = 1e-12;
  int max_iterations = 2000;
};

struct OptimizerResult {
  Vector x;
  double value = 0.0;
  double gradient_norm = 0.0;  // sup-norm of the projected gradient
  int iterations = 0;
  bool converged = false;
};

/// Value and, when `gradient` is non-null, gradient at x.
using Objective = std::function<double(const Vector& x, Vector* gradient)>;

/// Projected BFGS with Armijo backtracking. Stops when the projected
/// gradient sup-norm drops below the tolerance, when two consecutive steps
/// improve the objective by less than `improvement_tolerance`, or at the
/// iteration cap. Throws OptimizerDiverged on a non-finite starting value.
OptimizerResult quasi_newton(const Objective& f, const Vector& x0, const QuasiNewtonOptions& options,
                             const std::optional<Box>& box = std::nullopt);

/// Runs quasi_newton from x0 and then from `restarts` uniform draws in the box
/// (no draws when there is no box). Lowest value wins; ties keep the earlier run.
OptimizerResult quasi_newton_restarts(const Objective& f, const Vector& x0, const QuasiNewtonOptions& options,
                                      const std::optional<Box>& box, int restarts, std::uint64_t seed);

}  // namespace vmm
