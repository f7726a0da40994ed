#pragma once

#include <map>
#include <optional>
#include <vector>

#include "gmgp/dag.hpp"
#include "gmgp/gp.hpp"

namespace gmgp {

struct GmgpDataBundle {
  MultiFidelityDag dag;
  std::map<NodeId, NodeDataset> datasets;

  Eigen::Index dim() const;
  const NodeDataset& data(NodeId t) const;
  /// Every DAG node has a valid dataset and all share one input dimension.
  void validate() const;
};

/// For each row of `child`, the index of the matching row of `parent`
/// (max-abs difference <= tol) or -1.
std::vector<Eigen::Index> match_rows(const Matrix& child, const Matrix& parent, double tol = 1e-10);

/// Throws NotNested naming the first child row missing from a parent design.
void check_nested(const GmgpDataBundle& bundle);

/// Edge coefficient basis: rho(x) = g(x)^T gamma with g = [1] or [1, x].
enum class RhoBasis { Constant, Linear };

std::string_view to_string(RhoBasis basis);
RhoBasis rho_basis_from_string(std::string_view name);
Matrix rho_features(RhoBasis basis, const Matrix& X);

/// What to do when a child design point is not in a parent design.
enum class NestedPolicy {
  Strict,            // NotNested error
  PlugInParentMean,  // use the parent's recursive posterior mean there
};

struct RgmgpConfig {
  KernelFamily family = KernelFamily::Matern52;
  TrendKind trend = TrendKind::Constant;
  /// Trend of the source nodes when it should differ from `trend`.
  std::optional<TrendKind> source_trend;
  RhoBasis rho = RhoBasis::Constant;
  NestedPolicy nested = NestedPolicy::Strict;
  MleConfig mle;
  /// Nodes listed here are conditioned on the given parameters, not fitted.
  std::map<NodeId, FixedCorrelation> fixed;
};

struct FittedNode {
  NodeId id = 0;
  std::vector<NodeId> parents;  // ascending id
  /// Row k holds gamma for parents[k]; constant rho sits in column 0.
  Matrix rho;
  Vector beta;  // trend coefficients for h_t
  /// GP over the discrepancy; its trend columns are [h_t | z_parent o g].
  FittedGp gp;
  std::map<NodeId, Vector> parent_values_at_design;

  Vector rho_at(const Vector& g) const { return rho * g; }
};

struct FittedGmgp {
  MultiFidelityDag dag;
  TrendBasis trend;
  RhoBasis rho_basis = RhoBasis::Constant;
  std::map<NodeId, FittedNode> nodes;
  std::optional<TrendBasis> source_trend;  // unset = `trend`

  Eigen::Index dim() const { return trend.dim; }
  const TrendBasis& trend_of(const FittedNode& node) const {
    return node.parents.empty() && source_trend ? *source_trend : trend;
  }
};

/// Recursive fit, sources first. Non-source nodes regress on the observed
/// parent outputs at their own design (GLS for rho and beta jointly) and the
/// discrepancy kernel is fitted on the concentrated likelihood.
FittedGmgp fit_rgmgp(const GmgpDataBundle& bundle, const RgmgpConfig& cfg = {});

/// Posterior of every node by the leaf-to-root recursion.
std::map<NodeId, PosteriorSummary> predict_rgmgp(const FittedGmgp& model, const Matrix& Xq);

/// Fully specified hyperparameters, shared by the recursive and joint forms.
struct NodeParams {
  KernelSpec kernel;  // variance = sigma_t^2
  Vector beta;        // length = trend size
  Matrix rho;         // |Pa(t)| x rho-basis size, parents in ascending id
};

struct GmgpParams {
  TrendKind trend = TrendKind::Constant;
  RhoBasis rho_basis = RhoBasis::Constant;
  std::map<NodeId, NodeParams> nodes;
  double nugget = 1e-8;
};

/// Checks that params cover every node with consistent shapes.
void validate_params(const MultiFidelityDag& dag, const GmgpParams& params, Eigen::Index dim);

/// Recursive model with the given hyperparameters (no estimation).
FittedGmgp build_rgmgp(const GmgpDataBundle& bundle, const GmgpParams& params,
                       NestedPolicy nested = NestedPolicy::Strict);

/// Extracts the hyperparameters of a fitted model.
GmgpParams params_of(const FittedGmgp& model);

/// Prior covariance Cov(Z_s(x), Z_t(x')) by recursive expansion over parents.
double prior_cov(const MultiFidelityDag& dag, const GmgpParams& params, NodeId s, const Vector& x, NodeId t,
                 const Vector& xp);

/// Prior mean E[Z_t(x)].
double prior_mean(const MultiFidelityDag& dag, const GmgpParams& params, NodeId t, const Vector& x);

/// Conditions the joint Gaussian over all observations of all nodes and
/// predicts node `target` (the root by default). Training observations at a
/// common location carry the nugget on each shared discrepancy term.
PosteriorSummary predict_joint_gmgp(const GmgpDataBundle& bundle, const GmgpParams& params, const Matrix& Xq,
                                    std::optional<NodeId> target = std::nullopt);

/// Cov(Z_t(x), Z_t'(x') | {Z_j(x)}_{j in Pa(t)}). Applies when either t' is
/// neither t, a parent nor a descendant of t and x == x', or t' is a parent
/// of t and x != x'.
double markov_check(const MultiFidelityDag& dag, const GmgpParams& params, const Vector& x, const Vector& xp, NodeId t,
                    NodeId tp);

}  // namespace gmgp
