#pragma once

#include <cstdint>
#include <map>

#include "gmgp/gmgp.hpp"

namespace gmgp {

struct DeepConfig {
  MleConfig mle;
  NestedPolicy nested = NestedPolicy::Strict;
  ParamBounds bounds;
  /// Standardise parent outputs (by the parent's training mean and sd)
  /// before they enter the deep kernel.
  bool standardize_parent_outputs = true;
  /// Regression functions of the source nodes. None keeps the plain
  /// zero-mean prior (outputs centred on their sample mean).
  TrendKind source_trend = TrendKind::None;
  /// Nodes listed here are conditioned on the given parameters, not fitted.
  std::map<NodeId, FixedCorrelation> fixed;
};

struct McConfig {
  int samples = 1000;
  std::uint64_t seed = 1;
  int jobs = 1;

  void validate() const;
};

struct FittedDeepNode {
  NodeId id = 0;
  std::vector<NodeId> parents;  // ascending id
  /// Sources: SE kernel over x. Others: deep kernel over [x | z_std].
  FittedGp gp;
  Matrix augmented_inputs;
  /// z_std = (z - z_center) / z_scale, one entry per parent.
  Vector z_center;
  Vector z_scale;
  /// Trend over the x columns; kind None for non-source nodes.
  TrendBasis trend = TrendBasis::none(0);

  Eigen::Index augmented_dim() const { return augmented_inputs.cols(); }
};

struct FittedDeepGmgp {
  MultiFidelityDag dag;
  Eigen::Index dim = 0;
  std::map<NodeId, FittedDeepNode> nodes;
};

FittedDeepGmgp fit_dgmgp(const GmgpDataBundle& bundle, const DeepConfig& cfg = {});

/// Hyperparameters for building a deep model without estimation.
struct DeepNodeParams {
  KernelSpec source_kernel;  // sources only; variance = process variance
  DeepKernelSpec deep_kernel;  // others; x_outer.variance = process variance
  double offset = 0.0;
  Vector z_center;  // empty = 0
  Vector z_scale;   // empty = 1
};

struct DeepParams {
  std::map<NodeId, DeepNodeParams> nodes;
  double nugget = 1e-8;
};

FittedDeepGmgp build_dgmgp(const GmgpDataBundle& bundle, const DeepParams& params,
                           NestedPolicy nested = NestedPolicy::Strict);

/// Recursive plug-in means: each node's GP mean with parents replaced by
/// their own plug-in means.
std::map<NodeId, Vector> plugin_means(const FittedDeepGmgp& model, const Matrix& Xq);

/// Gaussian posterior of node t at inputs Xq given raw parent outputs
/// Z (m x |Pa(t)|, columns in parent order).
PosteriorSummary deep_node_conditional(const FittedDeepGmgp& model, NodeId t, const Matrix& Xq, const Matrix& Z);

struct SamplePosterior {
  Vector mean;
  Vector variance;
  Vector q025;
  Vector q975;
  Matrix samples;  // N x m
};

/// Empirical summaries of an N x m sample matrix (column-wise).
SamplePosterior summarize_samples(Matrix samples);

/// Pointwise Monte-Carlo propagation, sources first. Sample i of node t at
/// query q uses the normal stream keyed by (seed, t, i).
std::map<NodeId, SamplePosterior> predict_dgmgp(const FittedDeepGmgp& model, const Matrix& Xq, const McConfig& mc = {});

/// sqrt(mean over points and samples of (sample - truth)^2).
double pr_rmse_from_samples(const Matrix& samples, const Vector& truth);

}  // namespace gmgp
