#include "gmgp/dgmgp.hpp"

#include <algorithm>
#include <cmath>

#include "gmgp/error.hpp"
#include "gmgp/parallel.hpp"
#include "gmgp/rng.hpp"

namespace gmgp {

namespace {

// Rows per batched posterior evaluation; fixed so that results do not depend
// on the number of worker threads.
constexpr Eigen::Index kBatchRows = 4096;

std::vector<NodeId> sorted_parents(const MultiFidelityDag& dag, NodeId t) {
  auto p = dag.parents(t);
  return {p.begin(), p.end()};
}

Matrix augment(const FittedDeepNode& node, const Matrix& X, const Matrix& Z) {
  Matrix A(X.rows(), X.cols() + Z.cols());
  A.leftCols(X.cols()) = X;
  for (Eigen::Index k = 0; k < Z.cols(); ++k) {
    A.col(X.cols() + k) = (Z.col(k).array() - node.z_center[k]) / node.z_scale[k];
  }
  return A;
}

PosteriorSummary node_posterior(const FittedDeepNode& node, const Matrix& A) {
  return posterior_with_trend(node.gp, A, node.trend.evaluate(A.leftCols(node.trend.dim)));
}

// Partial models (during fitting) hold only the nodes fitted so far.
std::map<NodeId, Vector> plugin_present(const FittedDeepGmgp& model, const Matrix& Xq) {
  std::map<NodeId, Vector> out;
  for (NodeId t : model.dag.fit_order()) {
    auto it = model.nodes.find(t);
    if (it == model.nodes.end()) continue;
    const FittedDeepNode& node = it->second;
    Matrix Z(Xq.rows(), static_cast<Eigen::Index>(node.parents.size()));
    for (std::size_t k = 0; k < node.parents.size(); ++k) Z.col(static_cast<Eigen::Index>(k)) = out.at(node.parents[k]);
    out.emplace(t, node_posterior(node, augment(node, Xq, Z)).mean);
  }
  return out;
}

double sample_sd(const Vector& y) {
  if (y.size() < 2) return 1.0;
  const double m = y.mean();
  const double s = std::sqrt((y.array() - m).square().sum() / static_cast<double>(y.size() - 1));
  return s > 0.0 && std::isfinite(s) ? s : 1.0;
}

void check_model_input(const GmgpDataBundle& bundle, NestedPolicy nested) {
  bundle.validate();
  if (!bundle.dag.is_in_tree()) fail(ErrorKind::InTreeRequired, "deep model needs an in-tree DAG");
  if (nested == NestedPolicy::Strict) check_nested(bundle);
}

double quantile_sorted(const std::vector<double>& v, double p) {
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

void McConfig::validate() const {
  if (samples < 2) fail(ErrorKind::InvalidArgument, "Monte-Carlo sample count must be at least 2");
  if (jobs < 1) fail(ErrorKind::InvalidArgument, "jobs must be at least 1");
}

FittedDeepGmgp fit_dgmgp(const GmgpDataBundle& bundle, const DeepConfig& cfg) {
  check_model_input(bundle, cfg.nested);
  const Eigen::Index d = bundle.dim();
  FittedDeepGmgp model{bundle.dag, d, {}};
  for (NodeId t : bundle.dag.fit_order()) {
    const NodeDataset& data = bundle.data(t);
    FittedDeepNode node;
    node.id = t;
    node.parents = sorted_parents(bundle.dag, t);
    const auto P = static_cast<Eigen::Index>(node.parents.size());
    node.z_center = Vector::Zero(P);
    node.z_scale = Vector::Ones(P);
    Matrix Z(data.size(), P);
    if (P > 0) {
      const auto means = plugin_present(model, data.X);
      for (Eigen::Index k = 0; k < P; ++k) {
        const NodeId p = node.parents[static_cast<std::size_t>(k)];
        Z.col(k) = means.at(p);
        if (cfg.standardize_parent_outputs) {
          node.z_center[k] = bundle.data(p).y.mean();
          node.z_scale[k] = sample_sd(bundle.data(p).y);
        }
      }
    }
    node.augmented_inputs = augment(node, data.X, Z);
    std::unique_ptr<CorrelationModel> corr;
    if (P == 0) {
      corr = std::make_unique<StationaryCorrelation>(make_kernel(KernelFamily::SquaredExponential,
                                                                 static_cast<std::size_t>(d)),
                                                     cfg.bounds);
    } else {
      DeepKernelSpec spec;
      spec.x_outer = make_kernel(KernelFamily::SquaredExponential, static_cast<std::size_t>(d));
      spec.z_linear_variance = 1.0;
      spec.z_se = make_kernel(KernelFamily::SquaredExponential, static_cast<std::size_t>(P));
      spec.x_bias = make_kernel(KernelFamily::SquaredExponential, static_cast<std::size_t>(d));
      corr = std::make_unique<DeepCorrelation>(spec, cfg.bounds);
    }
    try {
      node.trend = TrendBasis{P == 0 ? cfg.source_trend : TrendKind::None, d};
      const Matrix H = node.trend.evaluate(data.X);
      auto fx = cfg.fixed.find(t);
      node.gp = fx != cfg.fixed.end() ? condition_fixed(std::move(corr), fx->second, node.augmented_inputs, data.y, H, cfg.mle)
                                      : fit_gp_general(std::move(corr), node.augmented_inputs, data.y, H, cfg.mle);
    } catch (const Error& e) {
      fail(e.kind(), "fitting node " + std::to_string(t) + ": " + e.what());
    }
    model.nodes.emplace(t, std::move(node));
  }
  return model;
}

FittedDeepGmgp build_dgmgp(const GmgpDataBundle& bundle, const DeepParams& params, NestedPolicy nested) {
  check_model_input(bundle, nested);
  const Eigen::Index d = bundle.dim();
  FittedDeepGmgp model{bundle.dag, d, {}};
  for (NodeId t : bundle.dag.fit_order()) {
    auto pit = params.nodes.find(t);
    if (pit == params.nodes.end()) fail(ErrorKind::InvalidArgument, "no parameters for node " + std::to_string(t));
    const DeepNodeParams& np = pit->second;
    const NodeDataset& data = bundle.data(t);
    FittedDeepNode node;
    node.id = t;
    node.parents = sorted_parents(bundle.dag, t);
    const auto P = static_cast<Eigen::Index>(node.parents.size());
    node.z_center = np.z_center.size() == 0 ? Vector::Zero(P) : np.z_center;
    node.z_scale = np.z_scale.size() == 0 ? Vector::Ones(P) : np.z_scale;
    if (node.z_center.size() != P || node.z_scale.size() != P) {
      fail(ErrorKind::DimensionMismatch, "z standardisation of node " + std::to_string(t) + " has wrong length");
    }
    Matrix Z(data.size(), P);
    if (P > 0) {
      const auto means = plugin_present(model, data.X);
      for (Eigen::Index k = 0; k < P; ++k) Z.col(k) = means.at(node.parents[static_cast<std::size_t>(k)]);
    }
    node.augmented_inputs = augment(node, data.X, Z);
    std::shared_ptr<const CorrelationModel> corr;
    double sigma2;
    if (P == 0) {
      if (static_cast<Eigen::Index>(np.source_kernel.dim()) != d) {
        fail(ErrorKind::DimensionMismatch, "kernel of node " + std::to_string(t) + " has wrong dimension");
      }
      KernelSpec unit = np.source_kernel;
      sigma2 = unit.variance;
      unit.variance = 1.0;
      corr = std::make_shared<StationaryCorrelation>(unit);
    } else {
      if (static_cast<Eigen::Index>(np.deep_kernel.x_dim()) != d ||
          static_cast<Eigen::Index>(np.deep_kernel.z_dim()) != P) {
        fail(ErrorKind::DimensionMismatch, "deep kernel of node " + std::to_string(t) + " has wrong dimensions");
      }
      sigma2 = np.deep_kernel.x_outer.variance;
      corr = std::make_shared<DeepCorrelation>(np.deep_kernel);
    }
    node.gp = condition_gp_fixed(corr, node.augmented_inputs, data.y, Matrix(data.size(), 0), Vector(0), sigma2,
                                 np.offset, params.nugget);
    model.nodes.emplace(t, std::move(node));
  }
  return model;
}

std::map<NodeId, Vector> plugin_means(const FittedDeepGmgp& model, const Matrix& Xq) {
  if (Xq.cols() != model.dim) fail(ErrorKind::DimensionMismatch, "query dimension does not match the model");
  return plugin_present(model, Xq);
}

PosteriorSummary deep_node_conditional(const FittedDeepGmgp& model, NodeId t, const Matrix& Xq, const Matrix& Z) {
  auto it = model.nodes.find(t);
  if (it == model.nodes.end()) fail(ErrorKind::UnknownNode, "node " + std::to_string(t));
  if (Xq.cols() != model.dim) fail(ErrorKind::DimensionMismatch, "query dimension does not match the model");
  if (Z.rows() != Xq.rows() || Z.cols() != static_cast<Eigen::Index>(it->second.parents.size())) {
    fail(ErrorKind::DimensionMismatch, "parent output matrix has wrong shape");
  }
  return node_posterior(it->second, augment(it->second, Xq, Z));
}

SamplePosterior summarize_samples(Matrix samples) {
  const Eigen::Index N = samples.rows(), m = samples.cols();
  if (N == 0 || m == 0) fail(ErrorKind::EmptyInput, "no samples to summarise");
  SamplePosterior s;
  s.mean = samples.colwise().mean().transpose();
  s.variance = Vector::Zero(m);
  s.q025.resize(m);
  s.q975.resize(m);
  std::vector<double> col(static_cast<std::size_t>(N));
  for (Eigen::Index q = 0; q < m; ++q) {
    if (N > 1) s.variance[q] = (samples.col(q).array() - s.mean[q]).square().sum() / static_cast<double>(N - 1);
    for (Eigen::Index i = 0; i < N; ++i) col[static_cast<std::size_t>(i)] = samples(i, q);
    std::sort(col.begin(), col.end());
    s.q025[q] = quantile_sorted(col, 0.025);
    s.q975[q] = quantile_sorted(col, 0.975);
  }
  s.samples = std::move(samples);
  return s;
}

std::map<NodeId, SamplePosterior> predict_dgmgp(const FittedDeepGmgp& model, const Matrix& Xq, const McConfig& mc) {
  mc.validate();
  if (Xq.cols() != model.dim) {
    fail(ErrorKind::DimensionMismatch,
         "query has " + std::to_string(Xq.cols()) + " columns, model expects " + std::to_string(model.dim));
  }
  const Eigen::Index N = mc.samples, m = Xq.rows();
  if (m == 0) fail(ErrorKind::EmptyInput, "no query points");
  const Eigen::Index per_task = std::max<Eigen::Index>(1, kBatchRows / m);
  const auto tasks = static_cast<std::size_t>((N + per_task - 1) / per_task);

  std::map<NodeId, Matrix> samples;
  for (NodeId t : model.dag.fit_order()) {
    const FittedDeepNode& node = model.nodes.at(t);
    const auto P = static_cast<Eigen::Index>(node.parents.size());
    Matrix S(N, m);
    std::vector<const Matrix*> parent_samples;
    for (NodeId p : node.parents) parent_samples.push_back(&samples.at(p));
    PosteriorSummary source_post;
    if (P == 0) source_post = node_posterior(node, augment(node, Xq, Matrix(m, 0)));

    parallel_for(tasks, mc.jobs, [&](std::size_t task) {
      const Eigen::Index i0 = static_cast<Eigen::Index>(task) * per_task;
      const Eigen::Index i1 = std::min(N, i0 + per_task);
      PosteriorSummary post;
      if (P > 0) {
        Matrix X((i1 - i0) * m, Xq.cols()), Z((i1 - i0) * m, P);
        for (Eigen::Index i = i0; i < i1; ++i) {
          X.middleRows((i - i0) * m, m) = Xq;
          for (Eigen::Index k = 0; k < P; ++k) {
            Z.block((i - i0) * m, k, m, 1) = parent_samples[static_cast<std::size_t>(k)]->row(i).transpose();
          }
        }
        post = node_posterior(node, augment(node, X, Z));
      }
      for (Eigen::Index i = i0; i < i1; ++i) {
        const std::uint64_t key = stream_key(mc.seed, static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(i));
        for (Eigen::Index q = 0; q < m; ++q) {
          const double mean = P > 0 ? post.mean[(i - i0) * m + q] : source_post.mean[q];
          const double var = P > 0 ? post.variance[(i - i0) * m + q] : source_post.variance[q];
          S(i, q) = mean + std::sqrt(var) * counter_normal(key, static_cast<std::uint64_t>(q));
        }
      }
    });
    // A node is observed without noise on its own design; draws there would
    // only carry nugget-level jitter.
    const auto hit = match_rows(Xq, node.augmented_inputs.leftCols(model.dim));
    for (Eigen::Index q = 0; q < m; ++q) {
      if (hit[static_cast<std::size_t>(q)] >= 0) S.col(q).setConstant(node.gp.y[hit[static_cast<std::size_t>(q)]]);
    }
    samples.emplace(t, std::move(S));
  }
  std::map<NodeId, SamplePosterior> out;
  for (auto& [t, S] : samples) out.emplace(t, summarize_samples(std::move(S)));
  return out;
}

double pr_rmse_from_samples(const Matrix& samples, const Vector& truth) {
  if (samples.size() == 0 || truth.size() == 0) fail(ErrorKind::EmptyInput, "no samples or truth values");
  if (samples.cols() != truth.size()) fail(ErrorKind::DimensionMismatch, "sample columns do not match truth length");
  return std::sqrt((samples.rowwise() - truth.transpose()).array().square().mean());
}

}  // namespace gmgp
