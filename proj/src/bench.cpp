#include "gmgp/bench.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <random>

#include "gmgp/error.hpp"
#include "gmgp/parallel.hpp"
#include "gmgp/rng.hpp"

namespace gmgp {

namespace {

double forrester(double x) { return std::pow(6 * x - 2, 2) * std::sin(12 * x - 4); }

double welch(const Vector& u) {
  // u in [-0.5, 0.5]^20, 1-based indices in the comments
  auto x = [&](int i) { return u[i - 1]; };
  return 5 * x(12) / (1 + x(1)) + 5 * std::pow(x(4) - x(20), 2) + x(5) + 40 * std::pow(x(19), 3) - 5 * x(19) +
         0.05 * x(2) + 0.08 * x(3) - 0.03 * x(6) + 0.03 * x(7) - 0.09 * x(9) - 0.01 * x(10) - 0.07 * x(11) +
         0.25 * x(13) * x(13) - 0.04 * x(14) + 0.06 * x(15) - 0.01 * x(17) - 0.03 * x(18);
}

double median_of(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string failure_text(const std::exception& e) { return std::string("error: ") + e.what(); }

GmgpDataBundle sub_bundle(const GmgpDataBundle& bundle, const std::vector<NodeId>& order) {
  GmgpDataBundle out{bundle.dag.chain(order), {}};
  for (NodeId t : order) out.datasets[t] = bundle.data(t);
  return out;
}

}  // namespace

std::string_view to_string(FamilyKind kind) {
  switch (kind) {
    case FamilyKind::Forrester1d: return "forrester1d";
    case FamilyKind::Friedman5d: return "friedman5d";
    case FamilyKind::Welch20d: return "welch20d";
  }
  return "?";
}

FamilyKind family_kind_from_string(std::string_view name) {
  if (name == "forrester1d" || name == "1d") return FamilyKind::Forrester1d;
  if (name == "friedman5d" || name == "5d") return FamilyKind::Friedman5d;
  if (name == "welch20d" || name == "20d") return FamilyKind::Welch20d;
  fail(ErrorKind::Parse, "unknown test family '" + std::string(name) + "'");
}

TestFamily::TestFamily(FamilyKind kind, std::string name, int dim, MultiFidelityDag dag,
                       std::map<NodeId, NodeFn> fns)
    : kind_(kind), name_(std::move(name)), dim_(dim), dag_(std::move(dag)), fns_(std::move(fns)) {
  for (NodeId t : dag_.node_ids()) {
    if (!fns_.count(t)) fail(ErrorKind::InvalidArgument, "family has no function for node " + std::to_string(t));
  }
}

double TestFamily::eval(NodeId t, const Vector& x) const {
  if (x.size() != dim_) {
    fail(ErrorKind::DimensionMismatch, name_ + " expects " + std::to_string(dim_) + " inputs");
  }
  for (Eigen::Index l = 0; l < x.size(); ++l) {
    if (!(x[l] >= 0.0 && x[l] <= 1.0)) fail(ErrorKind::OutOfDomain, name_ + " input outside [0,1]^d");
  }
  auto it = fns_.find(t);
  if (it == fns_.end()) fail(ErrorKind::UnknownNode, name_ + " has no node " + std::to_string(t));
  return it->second(x);
}

Vector TestFamily::eval_rows(NodeId t, const Matrix& X) const {
  Vector y(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) y[i] = eval(t, Vector(X.row(i).transpose()));
  return y;
}

double eval_family(const TestFamily& family, NodeId t, const Vector& x) { return family.eval(t, x); }

double window_average(const std::function<double(const Vector&)>& f, const Vector& x, const Vector& half_widths,
                      const Matrix& qmc, double lo, double hi) {
  if (half_widths.size() != x.size() || qmc.cols() < x.size()) {
    fail(ErrorKind::DimensionMismatch, "window_average: x, widths and point set disagree");
  }
  if ((half_widths.array() < 0.0).any()) fail(ErrorKind::InvalidArgument, "half widths must be >= 0");
  if ((half_widths.array() == 0.0).all()) return f(x);
  Vector a = x, span = Vector::Zero(x.size());
  for (Eigen::Index l = 0; l < x.size(); ++l) {
    if (half_widths[l] == 0.0) continue;
    a[l] = std::max(lo, x[l] - half_widths[l]);
    span[l] = std::min(hi, x[l] + half_widths[l]) - a[l];
  }
  // antithetic pairs u, 1 - u make the rule exact for linear f
  double sum = 0.0;
  Vector p(x.size()), q(x.size());
  for (Eigen::Index i = 0; i < qmc.rows(); ++i) {
    for (Eigen::Index l = 0; l < x.size(); ++l) {
      p[l] = a[l] + span[l] * qmc(i, l);
      q[l] = a[l] + span[l] * (1.0 - qmc(i, l));
    }
    sum += f(p) + f(q);
  }
  return sum / static_cast<double>(2 * qmc.rows());
}

double window_average(const std::function<double(const Vector&)>& f, const Vector& x, const Vector& half_widths,
                      int qmc_points, double lo, double hi) {
  return window_average(f, x, half_widths, gmgp::qmc_points(qmc_points, static_cast<int>(x.size())), lo, hi);
}

TestFamily make_family(FamilyKind kind, const WelchOptions& welch_opts) {
  std::map<NodeId, TestFamily::NodeFn> fns;
  switch (kind) {
    case FamilyKind::Forrester1d: {
      fns[3] = [](const Vector& x) { return forrester(x[0]); };
      fns[1] = [](const Vector& v) {
        const double x = v[0];
        return x < 0.5 ? forrester(x) + (x - 0.5) : forrester(x) + (x - 0.5) * std::cos(40 * x) * std::pow(5 * x - 1, 2);
      };
      fns[2] = [](const Vector& v) {
        const double x = v[0];
        return x <= 0.5 ? forrester(x) + 2 * (x - 0.5) * std::cos(10 * x) * std::pow(10 * x - 1, 2)
                        : forrester(x) - (x - 0.5);
      };
      return TestFamily(kind, "forrester1d", 1, graphs::three_node_tree(), std::move(fns));
    }
    case FamilyKind::Friedman5d: {
      fns[3] = [](const Vector& x) {
        return 10 * std::sin(M_PI * x[0] * x[1]) + 20 * std::pow(x[2] - 0.5, 2) + 10 * x[3] + 5 * x[4];
      };
      fns[1] = [](const Vector& x) {
        return 10 * std::sin(4 * x[0] * x[1]) + 20 * std::pow(x[2] - 0.5, 2) + 10 * x[3] + 5 * (1.2 * x[4]);
      };
      fns[2] = [](const Vector& x) {
        return 10 * std::sin(3 * x[0] * x[1]) + 20 * std::pow(0.8 * x[2] - 0.5, 2) + 10 * (x[3] - 0.1) + 5 * x[4];
      };
      return TestFamily(kind, "friedman5d", 5, graphs::three_node_tree(), std::move(fns));
    }
    case FamilyKind::Welch20d: {
      constexpr int d = 20;
      auto outer = std::make_shared<const Matrix>(qmc_points(welch_opts.qmc_points, d, 101));
      auto inner = std::make_shared<const Matrix>(qmc_points(welch_opts.qmc_points, d, 202));
      const WelchOptions o = welch_opts;
      auto widths = [o](const Vector& u, double h, int parity) {
        // parity 0: every input; 1: odd inputs x1, x3, ...; 2: even inputs
        Vector w = Vector::Zero(u.size());
        for (Eigen::Index l = 0; l < u.size(); ++l) {
          const bool on = parity == 0 || (parity == 1 ? l % 2 == 0 : l % 2 == 1);
          if (on) w[l] = o.mode == WindowMode::Absolute ? h : h * std::abs(u[l]);
        }
        return w;
      };
      auto m1_native = [=](const Vector& u) {
        return window_average(welch, u, widths(u, o.medium_half_width, 0), *inner, -0.5, 0.5);
      };
      auto low_native = [=](const Vector& u, int parity) {
        return window_average(m1_native, u, widths(u, o.low_half_width, parity), *outer, -0.5, 0.5);
      };
      fns[5] = [](const Vector& x) { return welch(x.array() - 0.5); };
      fns[4] = [](const Vector& x) { return 1.2 * welch(x.array() - 0.5) - 1.0; };
      fns[3] = [=](const Vector& x) { return m1_native(x.array() - 0.5); };
      fns[1] = [=](const Vector& x) { return low_native(x.array() - 0.5, 1); };
      fns[2] = [=](const Vector& x) { return low_native(x.array() - 0.5, 2); };
      return TestFamily(kind, "welch20d", d, graphs::five_node_tree(), std::move(fns));
    }
  }
  fail(ErrorKind::InvalidArgument, "unknown family");
}

double rmse(const Vector& pred, const Vector& truth) {
  if (pred.size() == 0 || truth.size() == 0) fail(ErrorKind::EmptyInput, "rmse of an empty vector");
  if (pred.size() != truth.size()) fail(ErrorKind::DimensionMismatch, "prediction and truth lengths differ");
  return std::sqrt((pred - truth).squaredNorm() / static_cast<double>(pred.size()));
}

double p_rmse_gaussian(const Vector& mean, const Vector& var, const Vector& truth) {
  if (mean.size() == 0 || truth.size() == 0) fail(ErrorKind::EmptyInput, "p-rmse of an empty vector");
  if (mean.size() != truth.size() || var.size() != truth.size()) {
    fail(ErrorKind::DimensionMismatch, "mean, variance and truth lengths differ");
  }
  if ((var.array() < 0.0).any() || var.hasNaN()) fail(ErrorKind::NegativeVariance, "negative predictive variance");
  return std::sqrt(((mean - truth).array().square() + var.array()).mean());
}

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::HfGp: return "HF-GP";
    case ModelKind::KoPath: return "KO-path";
    case ModelKind::KoMisspecified: return "KO-misspecified";
    case ModelKind::Nargp: return "NARGP";
    case ModelKind::Rgmgp: return "r-GMGP";
    case ModelKind::Dgmgp: return "d-GMGP";
  }
  return "?";
}

ModelKind model_kind_from_string(std::string_view name) {
  for (ModelKind k : all_models()) {
    if (name == to_string(k)) return k;
  }
  if (name == "hf-gp" || name == "gp") return ModelKind::HfGp;
  if (name == "ko-path") return ModelKind::KoPath;
  if (name == "ko-misspecified") return ModelKind::KoMisspecified;
  if (name == "nargp" || name == "NARGP-chain") return ModelKind::Nargp;
  if (name == "rgmgp") return ModelKind::Rgmgp;
  if (name == "dgmgp") return ModelKind::Dgmgp;
  fail(ErrorKind::Parse, "unknown model '" + std::string(name) + "'");
}

const std::vector<ModelKind>& all_models() {
  static const std::vector<ModelKind> all{ModelKind::HfGp,  ModelKind::KoPath, ModelKind::KoMisspecified,
                                          ModelKind::Nargp, ModelKind::Rgmgp,  ModelKind::Dgmgp};
  return all;
}

ModelScore fit_and_score(ModelKind kind, const GmgpDataBundle& bundle, const Matrix& Xtest, const Vector& ytest,
                         const ModelOptions& opts) {
  const MultiFidelityDag& dag = bundle.dag;
  const NodeId root = dag.root();
  ModelScore out;
  auto gaussian = [&](const PosteriorSummary& p) {
    out.mean = p.mean;
    out.variance = p.variance;
    out.rmse = rmse(p.mean, ytest);
    out.p_rmse = p_rmse_gaussian(p.mean, p.variance, ytest);
  };
  auto deep = [&](const GmgpDataBundle& b) {
    DeepConfig cfg;
    cfg.mle = opts.mle;
    auto model = fit_dgmgp(b, cfg);
    auto pred = predict_dgmgp(model, Xtest, opts.mc);
    const SamplePosterior& r = pred.at(root);
    out.mean = r.mean;
    out.variance = r.variance;
    out.rmse = rmse(r.mean, ytest);
    out.p_rmse = pr_rmse_from_samples(r.samples, ytest);
  };
  auto linear = [&](const GmgpDataBundle& b, NestedPolicy nested) {
    RgmgpConfig cfg;
    cfg.family = opts.linear_family;
    cfg.trend = opts.trend;
    cfg.nested = nested;
    cfg.mle = opts.mle;
    gaussian(predict_rgmgp(fit_rgmgp(b, cfg), Xtest).at(root));
  };

  switch (kind) {
    case ModelKind::HfGp: {
      const auto d = static_cast<std::size_t>(bundle.dim());
      TrendBasis basis = opts.trend == TrendKind::Linear ? TrendBasis::linear(d)
                         : opts.trend == TrendKind::None ? TrendBasis::none(d)
                                                         : TrendBasis::constant(d);
      gaussian(gp_posterior(fit_gp(bundle.data(root), opts.hf_family, basis, opts.mle), Xtest));
      break;
    }
    case ModelKind::KoPath:
      linear(sub_bundle(bundle, dag.longest_path_to_root()), NestedPolicy::Strict);
      break;
    case ModelKind::KoMisspecified: {
      std::vector<NodeId> order = opts.misspecified_order;
      if (order.empty()) {
        for (NodeId t : dag.node_ids())
          if (t != root) order.push_back(t);
        std::sort(order.begin(), order.end());
        order.push_back(root);
      }
      linear(sub_bundle(bundle, order), NestedPolicy::PlugInParentMean);
      break;
    }
    case ModelKind::Rgmgp:
      linear(bundle, NestedPolicy::Strict);
      break;
    case ModelKind::Nargp:
      deep(sub_bundle(bundle, dag.longest_path_to_root()));
      break;
    case ModelKind::Dgmgp:
      deep(bundle);
      break;
  }
  return out;
}

GmgpDataBundle make_bundle(const TestFamily& family, const std::map<NodeId, Matrix>& designs) {
  GmgpDataBundle b{family.dag(), {}};
  for (const auto& [t, X] : designs) b.datasets[t] = NodeDataset{X, family.eval_rows(t, X)};
  return b;
}

Matrix test_points(int dim, int n, std::uint64_t seed) {
  if (dim < 1 || n < 1) fail(ErrorKind::InvalidArgument, "test set needs dim, n >= 1");
  if (dim == 1) return Vector::LinSpaced(n, 0.0, 1.0);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  Matrix X(n, dim);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = U(rng);
  return X;
}

double MetricReport::median_rmse(const std::string& model, int n_root) const {
  std::vector<double> v;
  for (const auto& r : rows)
    if (r.model == model && r.n_root == n_root && r.status == "ok") v.push_back(r.rmse);
  return median_of(std::move(v));
}

double MetricReport::median_p_rmse(const std::string& model, int n_root) const {
  std::vector<double> v;
  for (const auto& r : rows)
    if (r.model == model && r.n_root == n_root && r.status == "ok") v.push_back(r.p_rmse);
  return median_of(std::move(v));
}

MetricReport run_experiment(const ExperimentConfig& cfg) {
  if (cfg.size_sets.empty() || cfg.seeds.empty() || cfg.models.empty()) {
    fail(ErrorKind::InvalidArgument, "experiment needs sizes, seeds and models");
  }
  const TestFamily family = make_family(cfg.family, cfg.welch);
  const int n_test = cfg.n_test > 0 ? cfg.n_test : (family.dim() == 1 ? 1000 : 500);

  struct Case {
    int n_root;
    std::uint64_t seed;
    GmgpDataBundle bundle;
    Matrix Xtest;
    Vector ytest;
  };
  std::vector<Case> cases;
  for (const auto& sizes : cfg.size_sets) {
    const int n_root = sizes.at(family.dag().root());
    for (std::uint64_t seed : cfg.seeds) {
      SlhdConfig sc{cfg.slhd_iters, stream_key(seed, 1, static_cast<std::uint64_t>(n_root))};
      auto plan = nested_bfs_design(family.dag(), sizes, family.dim(), sc, true);
      Matrix Xt = test_points(family.dim(), n_test, stream_key(seed, 2, 0));
      Vector yt = family.eval_rows(family.dag().root(), Xt);
      cases.push_back({n_root, seed, make_bundle(family, plan.designs), std::move(Xt), std::move(yt)});
    }
  }

  const std::size_t n_models = cfg.models.size();
  std::vector<MetricRow> rows(cases.size() * n_models);
  std::vector<std::optional<PredictionCurve>> curves(rows.size());
  parallel_for(rows.size(), cfg.jobs, [&](std::size_t k) {
    const Case& c = cases[k / n_models];
    const ModelKind kind = cfg.models[k % n_models];
    ModelOptions opts = cfg.model;
    opts.mle.seed = stream_key(c.seed, 3, static_cast<std::uint64_t>(kind));
    opts.mc.seed = stream_key(c.seed, 4, static_cast<std::uint64_t>(kind));
    opts.mc.jobs = 1;
    MetricRow row{std::string(to_string(kind)), c.n_root, c.seed};
    try {
      const ModelScore s = fit_and_score(kind, c.bundle, c.Xtest, c.ytest, opts);
      row.rmse = s.rmse;
      row.p_rmse = s.p_rmse;
      if (cfg.curve_seed && *cfg.curve_seed == c.seed) {
        curves[k] = PredictionCurve{row.model, c.n_root, c.seed, c.Xtest, c.ytest, s.mean, s.variance};
      }
    } catch (const std::exception& e) {
      row.rmse = row.p_rmse = std::numeric_limits<double>::quiet_NaN();
      row.status = failure_text(e);
    }
    rows[k] = std::move(row);
  });
  MetricReport report{std::move(rows), {}};
  for (auto& c : curves)
    if (c) report.curves.push_back(std::move(*c));
  return report;
}

double DesignStudyReport::median_rmse(const std::string& strategy, double budget) const {
  std::vector<double> v;
  for (const auto& r : rows)
    if (r.strategy == strategy && r.budget == budget && r.status == "ok") v.push_back(r.rmse);
  return median_of(std::move(v));
}

std::vector<std::string> design_strategies(const DesignStudyConfig& cfg) {
  std::vector<std::string> s{"all_high"};
  for (int a : cfg.ratios) s.push_back("ratio_" + std::to_string(a) + "_" + std::to_string(a) + "_1");
  for (double rho : cfg.rhos) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "proposed_rho_%g", rho);
    s.emplace_back(buf);
  }
  return s;
}

DesignStudyReport run_design_study(const DesignStudyConfig& cfg) {
  const TestFamily family = make_family(cfg.family);
  const MultiFidelityDag& base = family.dag();
  if (base.size() != 3) fail(ErrorKind::InvalidArgument, "the design study expects a 3-node family");
  std::vector<DagNode> nodes = base.nodes();
  for (auto& n : nodes) {
    auto it = cfg.costs.find(n.id);
    if (it == cfg.costs.end()) fail(ErrorKind::InvalidArgument, "no cost for node " + std::to_string(n.id));
    n.cost_per_run = it->second;
  }
  const MultiFidelityDag dag(nodes, base.edges(), base.root());
  const NodeId root = dag.root();
  const int d = family.dim();
  const int n_test = cfg.n_test > 0 ? cfg.n_test : (d == 1 ? 100 : 500);
  const std::vector<std::string> names = design_strategies(cfg);

  struct Job {
    std::size_t strategy;
    double budget;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (double C : cfg.budgets)
    for (std::uint64_t seed : cfg.seeds)
      for (std::size_t s = 0; s < names.size(); ++s) jobs.push_back({s, C, seed});

  std::vector<DesignStudyRow> rows(jobs.size());
  parallel_for(jobs.size(), cfg.jobs, [&](std::size_t k) {
    const Job& job = jobs[k];
    DesignStudyRow row{names[job.strategy], job.budget, job.seed};
    try {
      const Matrix Xt = test_points(d, n_test, stream_key(job.seed, 2, 0));
      const Vector yt = family.eval_rows(root, Xt);
      const std::uint64_t design_seed = stream_key(job.seed, 5, static_cast<std::uint64_t>(job.budget * 16));
      MleConfig mle = cfg.mle;
      mle.seed = stream_key(job.seed, 3, job.strategy);
      if (job.strategy == 0) {
        const int n = static_cast<int>(std::floor(job.budget / dag.cost(root)));
        row.sizes[root] = n;
        const Matrix X = d == 1 ? qmc_points(n, 1, design_seed) : generate_slhd(1, n, d, {cfg.slhd_iters, design_seed}).points;
        const NodeDataset data{X, family.eval_rows(root, X)};
        const FittedGp gp = fit_gp(data, KernelFamily::Matern52, TrendBasis::constant(static_cast<std::size_t>(d)), mle);
        row.rmse = rmse(gp_posterior(gp, Xt).mean, yt);
      } else {
        std::map<NodeId, int> sizes;
        if (job.strategy <= cfg.ratios.size()) {
          const int a = cfg.ratios[job.strategy - 1];
          double unit = dag.cost(root);
          for (NodeId t : dag.node_ids())
            if (t != root) unit += a * dag.cost(t);
          const int n_root = static_cast<int>(std::floor(job.budget / unit));
          if (n_root < 1) fail(ErrorKind::BudgetTooSmall, "budget does not cover one batch of the fixed ratio");
          for (NodeId t : dag.node_ids()) sizes[t] = t == root ? n_root : a * n_root;
        } else {
          const double rho = cfg.rhos[job.strategy - 1 - cfg.ratios.size()];
          sizes = allocate_sizes(dag, job.budget, rho, cfg.nu, d).sizes;
        }
        row.sizes = sizes;
        const auto plan = nested_bfs_design(dag, sizes, d, {cfg.slhd_iters, design_seed});
        RgmgpConfig rc;
        rc.mle = mle;
        const auto model = fit_rgmgp(make_bundle(family, plan.designs), rc);
        row.rmse = rmse(predict_rgmgp(model, Xt).at(root).mean, yt);
      }
    } catch (const std::exception& e) {
      row.rmse = std::numeric_limits<double>::quiet_NaN();
      row.status = failure_text(e);
    }
    rows[k] = std::move(row);
  });
  return DesignStudyReport{std::move(rows)};
}

}  // namespace gmgp
