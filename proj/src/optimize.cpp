#include "gmgp/optimize.hpp"

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace gmgp {

namespace {

// GSL cannot cope with non-finite values; infeasible points get this instead.
constexpr double kPenalty = 1e300;

struct Tracker {
  const Objective* f = nullptr;
  const ObjectiveWithGradient* fg = nullptr;
  Vector best;
  double best_value = std::numeric_limits<double>::infinity();
  Vector scratch;

  double record(const Vector& x, double v) {
    if (!std::isfinite(v)) return kPenalty;
    if (v < best_value) {
      best_value = v;
      best = x;
    }
    return v;
  }
};

Vector to_eigen(const gsl_vector* v) {
  Vector out(static_cast<Eigen::Index>(v->size));
  for (std::size_t i = 0; i < v->size; ++i) out[static_cast<Eigen::Index>(i)] = gsl_vector_get(v, i);
  return out;
}

struct GslVector {
  gsl_vector* v;
  explicit GslVector(const Vector& x) : v(gsl_vector_alloc(static_cast<std::size_t>(x.size()))) {
    for (Eigen::Index i = 0; i < x.size(); ++i) gsl_vector_set(v, static_cast<std::size_t>(i), x[i]);
  }
  GslVector(std::size_t n, double fill) : v(gsl_vector_alloc(n)) { gsl_vector_set_all(v, fill); }
  ~GslVector() { gsl_vector_free(v); }
  GslVector(const GslVector&) = delete;
  GslVector& operator=(const GslVector&) = delete;
};

double f_only(const gsl_vector* x, void* p) {
  auto* t = static_cast<Tracker*>(p);
  Vector xv = to_eigen(x);
  return t->record(xv, (*t->f)(xv));
}

double fg_value(const gsl_vector* x, void* p) {
  auto* t = static_cast<Tracker*>(p);
  Vector xv = to_eigen(x);
  return t->record(xv, (*t->fg)(xv, t->scratch));
}

void fg_both(const gsl_vector* x, void* p, double* f, gsl_vector* g) {
  auto* t = static_cast<Tracker*>(p);
  Vector xv = to_eigen(x);
  Vector grad = Vector::Zero(xv.size());
  *f = t->record(xv, (*t->fg)(xv, grad));
  for (Eigen::Index i = 0; i < xv.size(); ++i) {
    const double gi = *f >= kPenalty || !std::isfinite(grad[i]) ? 0.0 : grad[i];
    gsl_vector_set(g, static_cast<std::size_t>(i), gi);
  }
}

void fg_grad(const gsl_vector* x, void* p, gsl_vector* g) {
  double f;
  fg_both(x, p, &f, g);
}

bool stalled(std::vector<double>& history, double value, std::size_t window, double rel_tol) {
  history.push_back(value);
  if (history.size() <= window) return false;
  const double old = history[history.size() - 1 - window];
  if (old >= kPenalty) return false;
  return std::abs(old - value) <= rel_tol * std::max(1.0, std::abs(value));
}

}  // namespace

OptimResult minimize_simplex(const Objective& f, const Vector& x0, const LocalSearchOptions& opts) {
  gsl_set_error_handler_off();
  const auto n = static_cast<std::size_t>(x0.size());
  Tracker tracker;
  tracker.f = &f;
  tracker.best = x0;

  gsl_multimin_function fn{&f_only, n, &tracker};
  GslVector start(x0);
  GslVector step(n, opts.initial_step);
  gsl_multimin_fminimizer* s = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, n);
  OptimResult result;
  if (gsl_multimin_fminimizer_set(s, &fn, start.v, step.v) == GSL_SUCCESS) {
    std::vector<double> history;
    // A simplex can sit still for several steps while it reshapes, so the
    // improvement test looks back over a window of iterations.
    const std::size_t window = 2 * n + 2;
    for (int it = 0; it < opts.max_iterations; ++it) {
      result.iterations = it + 1;
      if (gsl_multimin_fminimizer_iterate(s) != GSL_SUCCESS) break;
      if (gsl_multimin_fminimizer_size(s) < 1e-10) break;
      if (stalled(history, s->fval, window, opts.rel_tol)) break;
    }
  }
  gsl_multimin_fminimizer_free(s);
  result.x = tracker.best;
  result.value = tracker.best_value;
  return result;
}

OptimResult minimize_bfgs(const ObjectiveWithGradient& f, const Vector& x0, const LocalSearchOptions& opts) {
  gsl_set_error_handler_off();
  const auto n = static_cast<std::size_t>(x0.size());
  Tracker tracker;
  tracker.fg = &f;
  tracker.best = x0;
  tracker.scratch = Vector::Zero(x0.size());

  gsl_multimin_function_fdf fn{&fg_value, &fg_grad, &fg_both, n, &tracker};
  GslVector start(x0);
  gsl_multimin_fdfminimizer* s = gsl_multimin_fdfminimizer_alloc(gsl_multimin_fdfminimizer_vector_bfgs2, n);
  OptimResult result;
  if (gsl_multimin_fdfminimizer_set(s, &fn, start.v, opts.initial_step, 0.1) == GSL_SUCCESS) {
    std::vector<double> history;
    for (int it = 0; it < opts.max_iterations; ++it) {
      result.iterations = it + 1;
      if (gsl_multimin_fdfminimizer_iterate(s) != GSL_SUCCESS) break;
      if (gsl_multimin_test_gradient(s->gradient, 1e-6) == GSL_SUCCESS) break;
      if (stalled(history, s->f, 1, opts.rel_tol)) break;
    }
  }
  gsl_multimin_fdfminimizer_free(s);
  result.x = tracker.best;
  result.value = tracker.best_value;
  return result;
}

Matrix latin_hypercube(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Matrix out(n, d);
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  for (Eigen::Index l = 0; l < d; ++l) {
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    for (Eigen::Index i = 0; i < n; ++i) {
      out(i, l) = (static_cast<double>(perm[static_cast<std::size_t>(i)]) + unif(rng)) / static_cast<double>(n);
    }
  }
  return out;
}

}  // namespace gmgp
