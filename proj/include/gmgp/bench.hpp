#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gmgp/design.hpp"
#include "gmgp/dgmgp.hpp"
#include "gmgp/gmgp.hpp"

namespace gmgp {

enum class FamilyKind { Forrester1d, Friedman5d, Welch20d };

std::string_view to_string(FamilyKind kind);
FamilyKind family_kind_from_string(std::string_view name);

enum class WindowMode { Absolute, Proportional };

struct WelchOptions {
  WindowMode mode = WindowMode::Absolute;
  double medium_half_width = 0.1;  // M1: every input
  double low_half_width = 0.15;    // L1: odd inputs, L2: even inputs (1-based)
  int qmc_points = 128;
};

/// Synthetic multi-fidelity family on [0,1]^d. Node ids follow the canonical
/// graphs: 3-node tree (L1=1, L2=2, H=3) or 5-node tree (L1, L2, M1, M2, H).
class TestFamily {
 public:
  using NodeFn = std::function<double(const Vector&)>;

  TestFamily(FamilyKind kind, std::string name, int dim, MultiFidelityDag dag, std::map<NodeId, NodeFn> fns);

  FamilyKind kind() const { return kind_; }
  const std::string& name() const { return name_; }
  int dim() const { return dim_; }
  const MultiFidelityDag& dag() const { return dag_; }

  /// Throws OutOfDomain unless x lies in [0,1]^d.
  double eval(NodeId t, const Vector& x) const;
  Vector eval_rows(NodeId t, const Matrix& X) const;

 private:
  FamilyKind kind_;
  std::string name_;
  int dim_;
  MultiFidelityDag dag_;
  std::map<NodeId, NodeFn> fns_;
};

TestFamily make_family(FamilyKind kind, const WelchOptions& welch = {});

double eval_family(const TestFamily& family, NodeId t, const Vector& x);

/// Uniform average of f over the box x +- half_widths clipped to [lo, hi]^d,
/// using the given point set in [0,1)^d and its reflection. Zero widths pin
/// that coordinate.
double window_average(const std::function<double(const Vector&)>& f, const Vector& x, const Vector& half_widths,
                      const Matrix& qmc, double lo = 0.0, double hi = 1.0);
double window_average(const std::function<double(const Vector&)>& f, const Vector& x, const Vector& half_widths,
                      int qmc_points = 128, double lo = 0.0, double hi = 1.0);

double rmse(const Vector& pred, const Vector& truth);
double p_rmse_gaussian(const Vector& mean, const Vector& var, const Vector& truth);

enum class ModelKind { HfGp, KoPath, KoMisspecified, Nargp, Rgmgp, Dgmgp };

std::string_view to_string(ModelKind kind);
ModelKind model_kind_from_string(std::string_view name);
const std::vector<ModelKind>& all_models();

struct ModelOptions {
  MleConfig mle;
  McConfig mc;
  KernelFamily hf_family = KernelFamily::SquaredExponential;
  KernelFamily linear_family = KernelFamily::Matern52;
  TrendKind trend = TrendKind::Constant;
  /// Total order for KO-misspecified; empty = ascending id with the root last.
  std::vector<NodeId> misspecified_order;
};

struct ModelScore {
  Vector mean;
  Vector variance;
  double rmse = 0.0;
  double p_rmse = 0.0;
};

/// Root predictions of one benchmark model fitted on `bundle`.
ModelScore fit_and_score(ModelKind kind, const GmgpDataBundle& bundle, const Matrix& Xtest, const Vector& ytest,
                         const ModelOptions& opts = {});

/// Evaluates the family's node functions on a design plan.
GmgpDataBundle make_bundle(const TestFamily& family, const std::map<NodeId, Matrix>& designs);

/// 1-d: `n` evenly spaced points on [0,1]; otherwise `n` uniform draws.
Matrix test_points(int dim, int n, std::uint64_t seed);

struct ExperimentConfig {
  std::string name = "experiment";
  FamilyKind family = FamilyKind::Forrester1d;
  WelchOptions welch;
  std::vector<ModelKind> models = all_models();
  /// One entry per size setting (e.g. the 20-d n_H sweep).
  std::vector<std::map<NodeId, int>> size_sets;
  std::vector<std::uint64_t> seeds;
  int n_test = 0;  // 0 = 1000 for 1-d, 500 otherwise
  int slhd_iters = 2000;
  ModelOptions model;
  int jobs = 1;
  /// Keep the test-set predictions of this seed (prediction-vs-truth curves).
  std::optional<std::uint64_t> curve_seed;
};

struct MetricRow {
  std::string model;
  int n_root = 0;
  std::uint64_t seed = 0;
  double rmse = 0.0;
  double p_rmse = 0.0;
  std::string status = "ok";  // or the error raised by the fit
};

struct PredictionCurve {
  std::string model;
  int n_root = 0;
  std::uint64_t seed = 0;
  Matrix X;
  Vector truth;
  Vector mean;
  Vector variance;
};

struct MetricReport {
  std::vector<MetricRow> rows;
  std::vector<PredictionCurve> curves;

  /// Median over seeds of successful rows; NaN when none succeeded.
  double median_rmse(const std::string& model, int n_root) const;
  double median_p_rmse(const std::string& model, int n_root) const;
};

MetricReport run_experiment(const ExperimentConfig& cfg);

/// Budget study: all-high-fidelity, fixed-ratio and proposed allocations.
struct DesignStudyConfig {
  FamilyKind family = FamilyKind::Forrester1d;
  std::map<NodeId, double> costs;  // per run, keyed like the family DAG
  std::vector<double> budgets;
  std::vector<double> rhos;        // proposed allocation
  std::vector<int> ratios;         // a : a : 1 fixed-ratio baselines
  double nu = 2.5;
  std::vector<std::uint64_t> seeds;
  int n_test = 0;  // 0 = 100 for 1-d, 500 otherwise
  int slhd_iters = 2000;
  MleConfig mle;
  int jobs = 1;
};

struct DesignStudyRow {
  std::string strategy;
  double budget = 0.0;
  std::uint64_t seed = 0;
  std::map<NodeId, int> sizes;
  double rmse = 0.0;
  std::string status = "ok";
};

struct DesignStudyReport {
  std::vector<DesignStudyRow> rows;
  double median_rmse(const std::string& strategy, double budget) const;
};

DesignStudyReport run_design_study(const DesignStudyConfig& cfg);

/// Strategy names in the order the study runs them.
std::vector<std::string> design_strategies(const DesignStudyConfig& cfg);

}  // namespace gmgp
