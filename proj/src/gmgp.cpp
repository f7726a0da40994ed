#include "gmgp/gmgp.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gmgp/error.hpp"

namespace gmgp {

namespace {

std::vector<NodeId> sorted_parents(const MultiFidelityDag& dag, NodeId t) {
  auto p = dag.parents(t);
  return {p.begin(), p.end()};
}

Eigen::Index rho_size(RhoBasis basis, Eigen::Index d) { return basis == RhoBasis::Constant ? 1 : 1 + d; }

// [h(X) | z_1 o g(X) | z_2 o g(X) | ...]
Matrix node_regressors(const TrendBasis& trend, RhoBasis rho, const Matrix& X, const std::vector<Vector>& parent_z) {
  const Matrix Hh = trend.evaluate(X);
  const Matrix G = rho_features(rho, X);
  Matrix H(X.rows(), Hh.cols() + G.cols() * static_cast<Eigen::Index>(parent_z.size()));
  H.leftCols(Hh.cols()) = Hh;
  Eigen::Index c = Hh.cols();
  for (const Vector& z : parent_z) {
    H.middleCols(c, G.cols()) = G.array().colwise() * z.array();
    c += G.cols();
  }
  return H;
}

void split_coefficients(FittedNode& node, Eigen::Index trend_size, Eigen::Index q) {
  const Vector& all = node.gp.beta;
  node.beta = all.head(trend_size);
  node.rho.resize(static_cast<Eigen::Index>(node.parents.size()), q);
  for (Eigen::Index k = 0; k < node.rho.rows(); ++k) node.rho.row(k) = all.segment(trend_size + k * q, q).transpose();
}

std::string row_text(const Matrix& X, Eigen::Index i) {
  std::ostringstream os;
  os.precision(17);
  os << "(";
  for (Eigen::Index l = 0; l < X.cols(); ++l) os << (l ? ", " : "") << X(i, l);
  os << ")";
  return os.str();
}

// Recursive prediction over whichever nodes `model` already holds.
std::map<NodeId, PosteriorSummary> predict_present(const FittedGmgp& model, const Matrix& Xq) {
  std::map<NodeId, PosteriorSummary> out;
  const Matrix G = rho_features(model.rho_basis, Xq);
  for (NodeId t : model.dag.fit_order()) {
    auto it = model.nodes.find(t);
    if (it == model.nodes.end()) continue;
    const FittedNode& node = it->second;
    std::vector<Vector> pm;
    for (NodeId p : node.parents) pm.push_back(out.at(p).mean);
    const Matrix Hq = node_regressors(model.trend_of(node), model.rho_basis, Xq, pm);
    PosteriorSummary s = posterior_with_trend(node.gp, Xq, Hq);
    for (std::size_t k = 0; k < node.parents.size(); ++k) {
      const Vector rho = G * node.rho.row(static_cast<Eigen::Index>(k)).transpose();
      s.variance.array() += rho.array().square() * out.at(node.parents[k]).variance.array();
    }
    // Noise-free: on the node's own design the posterior is the observation.
    const auto hit = match_rows(Xq, node.gp.X);
    for (Eigen::Index q = 0; q < Xq.rows(); ++q) {
      const Eigen::Index j = hit[static_cast<std::size_t>(q)];
      if (j >= 0) {
        s.mean[q] = node.gp.y[j];
        s.variance[q] = 0.0;
      }
    }
    out.emplace(t, std::move(s));
  }
  return out;
}

// z_{t'}(D_t): observed where the designs nest, otherwise per `policy`.
Vector parent_values(const FittedGmgp& partial, const GmgpDataBundle& bundle, NodeId t, NodeId p,
                     NestedPolicy policy) {
  const Matrix& X = bundle.data(t).X;
  const NodeDataset& pd = bundle.data(p);
  const auto idx = match_rows(X, pd.X);
  Vector z(X.rows());
  std::vector<Eigen::Index> missing;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    if (idx[static_cast<std::size_t>(i)] >= 0) {
      z[i] = pd.y[idx[static_cast<std::size_t>(i)]];
    } else {
      missing.push_back(i);
    }
  }
  if (missing.empty()) return z;
  if (policy == NestedPolicy::Strict) {
    fail(ErrorKind::NotNested, "row " + std::to_string(missing.front()) + " " + row_text(X, missing.front()) +
                                   " of node " + std::to_string(t) + " is not in the design of parent " +
                                   std::to_string(p));
  }
  Matrix Xm(static_cast<Eigen::Index>(missing.size()), X.cols());
  for (std::size_t k = 0; k < missing.size(); ++k) Xm.row(static_cast<Eigen::Index>(k)) = X.row(missing[k]);
  const Vector m = predict_present(partial, Xm).at(p).mean;
  for (std::size_t k = 0; k < missing.size(); ++k) z[missing[k]] = m[static_cast<Eigen::Index>(k)];
  return z;
}

bool same_point(const Matrix& A, Eigen::Index i, const Matrix& B, Eigen::Index j) {
  return (A.row(i) - B.row(j)).cwiseAbs().maxCoeff() <= 1e-10;
}

// c[u] = sum over paths u -> t of the product of rho(x) along the path.
std::map<NodeId, double> path_coefficients(const MultiFidelityDag& dag, const GmgpParams& params, NodeId t,
                                           const Vector& x) {
  const Matrix g = rho_features(params.rho_basis, x.transpose());
  std::map<NodeId, std::map<NodeId, double>> c;
  for (NodeId a : dag.fit_order()) {
    auto& ca = c[a];
    ca[a] = 1.0;
    const auto parents = sorted_parents(dag, a);
    const NodeParams& np = params.nodes.at(a);
    for (std::size_t k = 0; k < parents.size(); ++k) {
      const double rho = (g * np.rho.row(static_cast<Eigen::Index>(k)).transpose())(0);
      for (auto [u, v] : c[parents[k]]) ca[u] += rho * v;
    }
    if (a == t) return ca;
  }
  fail(ErrorKind::UnknownNode, "node " + std::to_string(t));
}

KernelSpec unit(KernelSpec k) {
  k.variance = 1.0;
  return k;
}

}  // namespace

Eigen::Index GmgpDataBundle::dim() const {
  if (datasets.empty()) fail(ErrorKind::EmptyInput, "bundle has no datasets");
  return datasets.begin()->second.dim();
}

const NodeDataset& GmgpDataBundle::data(NodeId t) const {
  auto it = datasets.find(t);
  if (it == datasets.end()) fail(ErrorKind::UnknownNode, "no dataset for node " + std::to_string(t));
  return it->second;
}

void GmgpDataBundle::validate() const {
  for (NodeId t : dag.node_ids()) {
    const NodeDataset& d = data(t);
    try {
      d.validate();
    } catch (const Error& e) {
      fail(e.kind(), "node " + std::to_string(t) + ": " + e.what());
    }
    if (d.dim() != dim()) fail(ErrorKind::DimensionMismatch, "node " + std::to_string(t) + " has a different dimension");
  }
  for (const auto& [t, d] : datasets) {
    if (!dag.contains(t)) fail(ErrorKind::UnknownNode, "dataset for node " + std::to_string(t) + " not in the DAG");
  }
}

std::vector<Eigen::Index> match_rows(const Matrix& child, const Matrix& parent, double tol) {
  if (child.cols() != parent.cols()) fail(ErrorKind::DimensionMismatch, "designs differ in dimension");
  std::vector<Eigen::Index> out(static_cast<std::size_t>(child.rows()), -1);
  for (Eigen::Index i = 0; i < child.rows(); ++i) {
    for (Eigen::Index j = 0; j < parent.rows(); ++j) {
      if ((child.row(i) - parent.row(j)).cwiseAbs().maxCoeff() <= tol) {
        out[static_cast<std::size_t>(i)] = j;
        break;
      }
    }
  }
  return out;
}

void check_nested(const GmgpDataBundle& bundle) {
  for (NodeId t : bundle.dag.fit_order()) {
    for (NodeId p : bundle.dag.parents(t)) {
      const auto idx = match_rows(bundle.data(t).X, bundle.data(p).X);
      auto it = std::find(idx.begin(), idx.end(), Eigen::Index{-1});
      if (it != idx.end()) {
        const auto i = static_cast<Eigen::Index>(it - idx.begin());
        fail(ErrorKind::NotNested, "row " + std::to_string(i) + " " + row_text(bundle.data(t).X, i) + " of node " +
                                       std::to_string(t) + " is not in the design of parent " + std::to_string(p));
      }
    }
  }
}

std::string_view to_string(RhoBasis basis) { return basis == RhoBasis::Constant ? "constant" : "linear"; }

RhoBasis rho_basis_from_string(std::string_view name) {
  if (name == "constant") return RhoBasis::Constant;
  if (name == "linear") return RhoBasis::Linear;
  fail(ErrorKind::Parse, "unknown rho basis '" + std::string(name) + "'");
}

Matrix rho_features(RhoBasis basis, const Matrix& X) {
  Matrix G(X.rows(), rho_size(basis, X.cols()));
  G.col(0).setOnes();
  if (basis == RhoBasis::Linear) G.rightCols(X.cols()) = X;
  return G;
}

FittedGmgp fit_rgmgp(const GmgpDataBundle& bundle, const RgmgpConfig& cfg) {
  bundle.validate();
  if (!bundle.dag.is_in_tree()) fail(ErrorKind::InTreeRequired, "recursive fitting needs an in-tree DAG");
  if (cfg.nested == NestedPolicy::Strict) check_nested(bundle);
  const Eigen::Index d = bundle.dim();
  FittedGmgp model{bundle.dag, TrendBasis{cfg.trend, d}, cfg.rho, {}, std::nullopt};
  if (cfg.source_trend) model.source_trend = TrendBasis{*cfg.source_trend, d};
  const Eigen::Index q = rho_size(cfg.rho, d);
  for (NodeId t : bundle.dag.fit_order()) {
    const NodeDataset& data = bundle.data(t);
    FittedNode node;
    node.id = t;
    node.parents = sorted_parents(bundle.dag, t);
    std::vector<Vector> z;
    for (NodeId p : node.parents) {
      z.push_back(parent_values(model, bundle, t, p, cfg.nested));
      node.parent_values_at_design[p] = z.back();
    }
    const Matrix H = node_regressors(model.trend_of(node), cfg.rho, data.X, z);
    try {
      auto corr = std::make_unique<StationaryCorrelation>(make_kernel(cfg.family, static_cast<std::size_t>(d)));
      auto fx = cfg.fixed.find(t);
      node.gp = fx != cfg.fixed.end() ? condition_fixed(std::move(corr), fx->second, data.X, data.y, H, cfg.mle)
                                      : fit_gp_general(std::move(corr), data.X, data.y, H, cfg.mle);
    } catch (const Error& e) {
      fail(e.kind(), "fitting node " + std::to_string(t) + ": " + e.what());
    }
    split_coefficients(node, model.trend_of(node).size(), q);
    model.nodes.emplace(t, std::move(node));
  }
  return model;
}

std::map<NodeId, PosteriorSummary> predict_rgmgp(const FittedGmgp& model, const Matrix& Xq) {
  if (Xq.cols() != model.dim()) {
    fail(ErrorKind::DimensionMismatch,
         "query has " + std::to_string(Xq.cols()) + " columns, model expects " + std::to_string(model.dim()));
  }
  return predict_present(model, Xq);
}

void validate_params(const MultiFidelityDag& dag, const GmgpParams& params, Eigen::Index dim) {
  const Eigen::Index p = TrendBasis{params.trend, dim}.size();
  const Eigen::Index q = rho_size(params.rho_basis, dim);
  for (NodeId t : dag.node_ids()) {
    auto it = params.nodes.find(t);
    if (it == params.nodes.end()) fail(ErrorKind::InvalidArgument, "no parameters for node " + std::to_string(t));
    const NodeParams& np = it->second;
    np.kernel.validate();
    if (static_cast<Eigen::Index>(np.kernel.dim()) != dim) {
      fail(ErrorKind::DimensionMismatch, "kernel of node " + std::to_string(t) + " has wrong dimension");
    }
    if (np.beta.size() != p) fail(ErrorKind::DimensionMismatch, "beta of node " + std::to_string(t) + " has wrong size");
    const auto npar = static_cast<Eigen::Index>(dag.parents(t).size());
    if (np.rho.rows() != npar || (npar > 0 && np.rho.cols() != q)) {
      fail(ErrorKind::DimensionMismatch, "rho of node " + std::to_string(t) + " has wrong shape");
    }
  }
}

FittedGmgp build_rgmgp(const GmgpDataBundle& bundle, const GmgpParams& params, NestedPolicy nested) {
  bundle.validate();
  if (!bundle.dag.is_in_tree()) fail(ErrorKind::InTreeRequired, "recursive model needs an in-tree DAG");
  if (nested == NestedPolicy::Strict) check_nested(bundle);
  const Eigen::Index d = bundle.dim();
  validate_params(bundle.dag, params, d);
  FittedGmgp model{bundle.dag, TrendBasis{params.trend, d}, params.rho_basis, {}, std::nullopt};
  const Eigen::Index q = rho_size(params.rho_basis, d);
  for (NodeId t : bundle.dag.fit_order()) {
    const NodeDataset& data = bundle.data(t);
    const NodeParams& np = params.nodes.at(t);
    FittedNode node;
    node.id = t;
    node.parents = sorted_parents(bundle.dag, t);
    std::vector<Vector> z;
    for (NodeId p : node.parents) {
      z.push_back(parent_values(model, bundle, t, p, nested));
      node.parent_values_at_design[p] = z.back();
    }
    const Matrix H = node_regressors(model.trend, params.rho_basis, data.X, z);
    Vector coef(H.cols());
    coef.head(np.beta.size()) = np.beta;
    for (Eigen::Index k = 0; k < np.rho.rows(); ++k) coef.segment(np.beta.size() + k * q, q) = np.rho.row(k).transpose();
    node.gp = condition_gp_fixed(std::make_shared<StationaryCorrelation>(unit(np.kernel)), data.X, data.y, H, coef,
                                 np.kernel.variance, 0.0, params.nugget);
    split_coefficients(node, model.trend.size(), q);
    model.nodes.emplace(t, std::move(node));
  }
  return model;
}

GmgpParams params_of(const FittedGmgp& model) {
  if (model.source_trend && model.source_trend->kind != model.trend.kind) {
    fail(ErrorKind::InvalidArgument, "parameter sets hold a single trend kind for every node");
  }
  GmgpParams out;
  out.trend = model.trend.kind;
  out.rho_basis = model.rho_basis;
  for (const auto& [t, node] : model.nodes) {
    if (node.gp.offset != 0.0) fail(ErrorKind::InvalidArgument, "node " + std::to_string(t) + " uses a fixed offset");
    out.nodes[t] = NodeParams{node.gp.kernel_spec(), node.beta, node.rho};
    out.nugget = node.gp.nugget;
  }
  return out;
}

double prior_mean(const MultiFidelityDag& dag, const GmgpParams& params, NodeId t, const Vector& x) {
  const NodeParams& np = params.nodes.at(t);
  double m = np.beta.size() > 0 ? (TrendBasis{params.trend, x.size()}.evaluate(x.transpose()) * np.beta)(0) : 0.0;
  const Matrix g = rho_features(params.rho_basis, x.transpose());
  const auto parents = sorted_parents(dag, t);
  for (std::size_t k = 0; k < parents.size(); ++k) {
    const double rho = (g * np.rho.row(static_cast<Eigen::Index>(k)).transpose())(0);
    m += rho * prior_mean(dag, params, parents[k], x);
  }
  return m;
}

double prior_cov(const MultiFidelityDag& dag, const GmgpParams& params, NodeId s, const Vector& x, NodeId t,
                 const Vector& xp) {
  if (!dag.contains(s)) fail(ErrorKind::UnknownNode, "node " + std::to_string(s));
  if (!dag.contains(t)) fail(ErrorKind::UnknownNode, "node " + std::to_string(t));
  auto rho_of = [&](NodeId child, std::size_t k, const Vector& at) {
    const Matrix g = rho_features(params.rho_basis, at.transpose());
    return (g * params.nodes.at(child).rho.row(static_cast<Eigen::Index>(k)).transpose())(0);
  };
  if (s == t) {
    const auto parents = sorted_parents(dag, s);
    const NodeParams& np = params.nodes.at(s);
    double c = np.kernel.variance * corr(np.kernel, x, xp);
    for (std::size_t a = 0; a < parents.size(); ++a) {
      for (std::size_t b = 0; b < parents.size(); ++b) {
        c += rho_of(s, a, x) * rho_of(s, b, xp) * prior_cov(dag, params, parents[a], x, parents[b], xp);
      }
    }
    return c;
  }
  // Expand a node whose own discrepancy cannot appear in the other.
  if (dag.ancestors(t).count(s) == 0 && !dag.is_source(s)) {
    const auto parents = sorted_parents(dag, s);
    double c = 0.0;
    for (std::size_t a = 0; a < parents.size(); ++a) c += rho_of(s, a, x) * prior_cov(dag, params, parents[a], x, t, xp);
    return c;
  }
  if (dag.ancestors(s).count(t) == 0 && !dag.is_source(t)) {
    const auto parents = sorted_parents(dag, t);
    double c = 0.0;
    for (std::size_t b = 0; b < parents.size(); ++b) {
      c += rho_of(t, b, xp) * prior_cov(dag, params, s, x, parents[b], xp);
    }
    return c;
  }
  return 0.0;  // distinct sources
}

PosteriorSummary predict_joint_gmgp(const GmgpDataBundle& bundle, const GmgpParams& params, const Matrix& Xq,
                                    std::optional<NodeId> target) {
  bundle.validate();
  const MultiFidelityDag& dag = bundle.dag;
  const Eigen::Index d = bundle.dim();
  validate_params(dag, params, d);
  if (Xq.cols() != d) fail(ErrorKind::DimensionMismatch, "query dimension does not match the data");
  const NodeId T = target.value_or(dag.root());
  const std::vector<NodeId> ids = dag.node_ids();
  const auto nn = static_cast<Eigen::Index>(ids.size());
  auto index_of = [&](NodeId u) { return static_cast<Eigen::Index>(std::find(ids.begin(), ids.end(), u) - ids.begin()); };

  // Observations: node, location, path coefficients, prior mean.
  Eigen::Index N = 0;
  for (NodeId t : ids) N += bundle.data(t).size();
  Matrix Xo(N, d), C = Matrix::Zero(N, nn);
  Vector z(N), mu(N);
  Eigen::Index row = 0;
  for (NodeId t : ids) {
    const NodeDataset& data = bundle.data(t);
    for (Eigen::Index i = 0; i < data.size(); ++i, ++row) {
      Xo.row(row) = data.X.row(i);
      z[row] = data.y[i];
      const Vector x = data.X.row(i).transpose();
      for (auto [u, c] : path_coefficients(dag, params, t, x)) C(row, index_of(u)) = c;
      mu[row] = prior_mean(dag, params, t, x);
    }
  }
  Matrix V = Matrix::Zero(N, N);
  for (Eigen::Index u = 0; u < nn; ++u) {
    const KernelSpec& k = params.nodes.at(ids[static_cast<std::size_t>(u)]).kernel;
    Matrix R = corr_matrix(k, Xo, Xo);
    for (Eigen::Index j = 0; j < N; ++j) {
      for (Eigen::Index i = 0; i < N; ++i) {
        if (same_point(Xo, i, Xo, j)) R(i, j) += params.nugget;
      }
    }
    const Vector cu = C.col(u);
    V += k.variance * (cu.asDiagonal() * R * cu.asDiagonal());
  }
  Eigen::LLT<Matrix> llt(V);
  if (llt.info() != Eigen::Success) fail(ErrorKind::SingularCovariance, "joint covariance is not positive definite");
  const Vector w = llt.solve(z - mu);

  PosteriorSummary out;
  out.mean.resize(Xq.rows());
  out.variance.resize(Xq.rows());
  for (Eigen::Index q = 0; q < Xq.rows(); ++q) {
    const Vector x = Xq.row(q).transpose();
    Vector cq = Vector::Zero(nn);
    for (auto [u, c] : path_coefficients(dag, params, T, x)) cq[index_of(u)] = c;
    Vector v = Vector::Zero(N);
    double prior = 0.0;
    for (Eigen::Index u = 0; u < nn; ++u) {
      if (cq[u] == 0.0) continue;
      const KernelSpec& k = params.nodes.at(ids[static_cast<std::size_t>(u)]).kernel;
      const Vector r = corr_matrix(k, Xo, Xq.row(q)).col(0);
      v += k.variance * cq[u] * C.col(u).cwiseProduct(r);
      prior += k.variance * cq[u] * cq[u];
    }
    out.mean[q] = prior_mean(dag, params, T, x) + v.dot(w);
    out.variance[q] = std::max(0.0, prior - v.dot(llt.solve(v)));
  }
  return out;
}

double markov_check(const MultiFidelityDag& dag, const GmgpParams& params, const Vector& x, const Vector& xp, NodeId t,
                    NodeId tp) {
  if (!dag.contains(t)) fail(ErrorKind::UnknownNode, "node " + std::to_string(t));
  if (!dag.contains(tp)) fail(ErrorKind::UnknownNode, "node " + std::to_string(tp));
  const auto parents = sorted_parents(dag, t);
  const bool same_x = (x - xp).cwiseAbs().maxCoeff() <= 1e-12;
  const bool is_parent = std::find(parents.begin(), parents.end(), tp) != parents.end();
  if (tp == t || (is_parent && same_x)) {
    fail(ErrorKind::SingularConditioningBlock, "node " + std::to_string(tp) + " is conditioned on itself");
  }
  const bool prop_a = same_x && dag.descendants(t).count(tp) == 0 && !is_parent;
  const bool prop_b = is_parent && !same_x && dag.is_in_tree();
  if (!prop_a && !prop_b) {
    fail(ErrorKind::InvalidArgument, "no Markov property applies to nodes " + std::to_string(t) + " and " +
                                         std::to_string(tp) + " at these inputs");
  }
  const auto m = static_cast<Eigen::Index>(parents.size());
  Matrix Spp(m, m);
  Vector Sap(m), Sbp(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const NodeId pi = parents[static_cast<std::size_t>(i)];
    Sap[i] = prior_cov(dag, params, t, x, pi, x);
    Sbp[i] = prior_cov(dag, params, tp, xp, pi, x);
    for (Eigen::Index j = 0; j < m; ++j) Spp(i, j) = prior_cov(dag, params, pi, x, parents[static_cast<std::size_t>(j)], x);
  }
  const double sab = prior_cov(dag, params, t, x, tp, xp);
  if (m == 0) return sab;
  Eigen::LLT<Matrix> llt(Spp);
  if (llt.info() != Eigen::Success) fail(ErrorKind::SingularConditioningBlock, "parent covariance is singular");
  return sab - Sap.dot(llt.solve(Sbp));
}

}  // namespace gmgp
