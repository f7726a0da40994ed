#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gmgp/bench.hpp"
#include "gmgp/error.hpp"

using namespace gmgp;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

}  // namespace

TEST(Families, PointValues) {
  auto f1 = make_family(FamilyKind::Forrester1d);
  EXPECT_NEAR(f1.eval(3, vec({1.0 / 3.0})), 0.0, 1e-14);
  EXPECT_NEAR(f1.eval(3, vec({0.0})), 4 * std::sin(-4.0), 1e-14);
  EXPECT_NEAR(f1.eval(3, vec({0.0})), 3.0272, 1e-4);
  EXPECT_NEAR(f1.eval(1, vec({0.25})), -0.4604, 1e-4);
  EXPECT_NEAR(f1.eval(1, vec({0.25})), f1.eval(3, vec({0.25})) - 0.25, 1e-14);
  EXPECT_NEAR(f1.eval(2, vec({0.75})), f1.eval(3, vec({0.75})) - 0.25, 1e-14);

  auto f5 = make_family(FamilyKind::Friedman5d);
  EXPECT_NEAR(f5.eval(3, Vector::Constant(5, 0.5)), 10 * std::sin(M_PI / 4) + 7.5, 1e-12);
  EXPECT_NEAR(f5.eval(3, Vector::Constant(5, 0.5)), 14.5711, 1e-4);
  EXPECT_EQ(f5.dag().size(), 3u);
}

TEST(Families, DomainChecks) {
  auto f1 = make_family(FamilyKind::Forrester1d);
  try {
    f1.eval(3, vec({1.2}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::OutOfDomain);
  }
  EXPECT_THROW(f1.eval(3, vec({0.1, 0.2})), Error);
  EXPECT_THROW(f1.eval(9, vec({0.1})), Error);
}

TEST(Families, WelchStructure) {
  auto f = make_family(FamilyKind::Welch20d);
  EXPECT_EQ(f.dim(), 20);
  EXPECT_TRUE(f.dag().is_in_tree());
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int k = 0; k < 100; ++k) {
    Vector x(20);
    for (auto& v : x) v = U(rng);
    EXPECT_EQ(f.eval(4, x), 1.2 * f.eval(5, x) - 1.0);
  }
  // averaged surfaces stay close to, but differ from, the high-fidelity one
  Vector x = Vector::Constant(20, 0.5);
  x[18] = 0.9;
  const double h = f.eval(5, x), m1 = f.eval(3, x), l1 = f.eval(1, x), l2 = f.eval(2, x);
  EXPECT_NE(h, m1);
  EXPECT_LT(std::abs(h - m1), 1.0);
  EXPECT_NE(l1, l2);
  EXPECT_TRUE(std::isfinite(l1) && std::isfinite(l2));
}

TEST(WindowAverage, DegenerateLinearAndQuadratic) {
  auto sq = [](const Vector& x) { return x[0] * x[0]; };
  auto lin = [](const Vector& x) { return 3 * x[0] - 2 * x[1] + 0.5; };
  const Vector x = vec({0.4, 0.6});
  EXPECT_EQ(window_average(lin, x, Vector::Zero(2)), lin(x));
  const double fl = lin(x);
  EXPECT_NEAR(window_average(lin, x, vec({0.1, 0.2})), fl, 1e-3 * std::abs(fl) + 1e-6);

  // x^2 over [x-h, x+h] averages to x^2 + h^2/3; QMC error from random shifts
  const double h = 0.2, x0 = 0.5;
  std::vector<double> est;
  for (std::uint64_t s = 1; s <= 10; ++s) {
    est.push_back(window_average(sq, vec({x0}), vec({h}), qmc_points(128, 1, s)));
  }
  double mean = 0.0, var = 0.0;
  for (double e : est) mean += e / est.size();
  for (double e : est) var += (e - mean) * (e - mean) / (est.size() - 1);
  const double err = std::sqrt(var);
  for (double e : est) EXPECT_NEAR(e, x0 * x0 + h * h / 3, 3 * err + 1e-12);

  // windows are clipped at the domain boundary
  auto id = [](const Vector& x) { return x[0]; };
  EXPECT_NEAR(window_average(id, vec({0.0}), vec({0.2})), 0.1, 1e-3);
}

TEST(Metrics, Examples) {
  EXPECT_DOUBLE_EQ(rmse(vec({1, 2}), vec({1, 2})), 0.0);
  EXPECT_DOUBLE_EQ(rmse(vec({2, 3, 4}), vec({1, 2, 3})), 1.0);
  EXPECT_NEAR(rmse(vec({0, 0}), vec({3, 4})), 3.5355, 1e-4);
  EXPECT_DOUBLE_EQ(p_rmse_gaussian(vec({0, 0}), vec({0, 0}), vec({3, 4})), rmse(vec({0, 0}), vec({3, 4})));
  EXPECT_DOUBLE_EQ(p_rmse_gaussian(vec({1, 2}), vec({2.5, 2.5}), vec({1, 2})), std::sqrt(2.5));
  EXPECT_NEAR(p_rmse_gaussian(vec({1}), vec({4}), vec({0})), 2.2361, 1e-4);
  EXPECT_THROW(rmse(Vector(), Vector()), Error);
  EXPECT_THROW(p_rmse_gaussian(vec({1}), vec({-1}), vec({0})), Error);

  std::mt19937_64 rng(8);
  std::normal_distribution<double> N;
  for (int k = 0; k < 50; ++k) {
    Vector m(5), v(5), y(5);
    for (int i = 0; i < 5; ++i) {
      m[i] = N(rng);
      v[i] = std::abs(N(rng));
      y[i] = N(rng);
    }
    EXPECT_GE(p_rmse_gaussian(m, v, y), rmse(m, y));
  }
}

TEST(Harness, SmallExperimentIsDeterministic) {
  ExperimentConfig cfg;
  cfg.family = FamilyKind::Forrester1d;
  cfg.size_sets = {{{1, 15}, {2, 15}, {3, 8}}};
  cfg.seeds = {1, 2};
  cfg.n_test = 200;
  cfg.model.mle.starts = 4;
  cfg.model.mc.samples = 200;
  const auto a = run_experiment(cfg);
  ASSERT_EQ(a.rows.size(), 12u);
  for (const auto& r : a.rows) {
    EXPECT_EQ(r.status, "ok") << r.model;
    EXPECT_GE(r.rmse, 0.0);
    EXPECT_GE(r.p_rmse, r.rmse - 1e-12) << r.model;
  }
  cfg.jobs = 3;
  const auto b = run_experiment(cfg);
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    EXPECT_EQ(a.rows[i].model, b.rows[i].model);
    EXPECT_EQ(a.rows[i].rmse, b.rows[i].rmse);
    EXPECT_EQ(a.rows[i].p_rmse, b.rows[i].p_rmse);
  }
  EXPECT_TRUE(std::isfinite(a.median_rmse("r-GMGP", 8)));
  EXPECT_TRUE(std::isnan(a.median_rmse("r-GMGP", 9)));
}

TEST(Harness, DesignStudyRuns) {
  DesignStudyConfig cfg;
  cfg.costs = {{1, 2}, {2, 2}, {3, 32}};
  cfg.budgets = {200};
  cfg.rhos = {0.5};
  cfg.ratios = {6};
  cfg.seeds = {1};
  cfg.mle.starts = 3;
  const auto rep = run_design_study(cfg);
  ASSERT_EQ(rep.rows.size(), 3u);
  EXPECT_EQ(rep.rows[0].strategy, "all_high");
  EXPECT_EQ(rep.rows[0].sizes.at(3), 6);
  EXPECT_EQ(rep.rows[2].strategy, "proposed_rho_0.5");
  for (const auto& r : rep.rows) {
    double cost = 0.0;
    for (const auto& [t, n] : r.sizes) cost += cfg.costs.at(t) * n;
    EXPECT_LE(cost, 200.0);
  }
  EXPECT_EQ(rep.rows[0].status, "ok");
  EXPECT_EQ(rep.rows[2].status, "ok");
}
