#pragma once

#include <cstdint>
#include <functional>

#include "gmgp/kernel.hpp"

namespace gmgp {

struct LocalSearchOptions {
  int max_iterations = 500;
  double rel_tol = 1e-8;
  double initial_step = 0.5;
};

struct OptimResult {
  Vector x;
  double value = 0.0;
  int iterations = 0;
};

/// Objectives may return +inf (or NaN) for infeasible points.
using Objective = std::function<double(const Vector&)>;
/// Fills `grad` and returns the value.
using ObjectiveWithGradient = std::function<double(const Vector&, Vector& grad)>;

/// Derivative-free simplex search. Stops when the relative spread of the
/// simplex values drops below rel_tol or after max_iterations.
OptimResult minimize_simplex(const Objective& f, const Vector& x0, const LocalSearchOptions& opts = {});

/// Quasi-Newton search with analytic gradients.
OptimResult minimize_bfgs(const ObjectiveWithGradient& f, const Vector& x0, const LocalSearchOptions& opts = {});

/// n points in [0,1]^d, one per stratum in every dimension, jittered inside the stratum.
Matrix latin_hypercube(Eigen::Index n, Eigen::Index d, std::uint64_t seed);

}  // namespace gmgp
