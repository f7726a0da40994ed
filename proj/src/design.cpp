#include "gmgp/design.hpp"

#include <gsl/gsl_qrng.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <random>
#include <set>

#include "gmgp/error.hpp"

namespace gmgp {

namespace {

struct Score {
  double full_min = 0.0;
  long full_count = 0;
  double slice_min = 0.0;
  long slice_count = 0;
};

// Lexicographic: larger full-design minimum, then fewer pairs at it, then the
// same two keys for the within-slice minimum.
bool better(const Score& a, const Score& b) {
  if (a.full_min != b.full_min) return a.full_min > b.full_min;
  if (a.full_count != b.full_count) return a.full_count < b.full_count;
  if (a.slice_min != b.slice_min) return a.slice_min > b.slice_min;
  return a.slice_count < b.slice_count;
}

Score score(const Matrix& D, int n_per_slice) {
  const Eigen::Index N = D.rows();
  Score s{std::numeric_limits<double>::infinity(), 0, std::numeric_limits<double>::infinity(), 0};
  for (Eigen::Index j = 0; j < N; ++j) {
    for (Eigen::Index i = j + 1; i < N; ++i) {
      const double v = D(i, j);
      if (v < s.full_min) {
        s.full_min = v;
        s.full_count = 1;
      } else if (v == s.full_min) {
        ++s.full_count;
      }
      if (i / n_per_slice == j / n_per_slice) {
        if (v < s.slice_min) {
          s.slice_min = v;
          s.slice_count = 1;
        } else if (v == s.slice_min) {
          ++s.slice_count;
        }
      }
    }
  }
  return s;
}

void refresh_row(const Matrix& X, Matrix& D, Eigen::Index i) {
  for (Eigen::Index k = 0; k < X.rows(); ++k) {
    const double v = (X.row(i) - X.row(k)).squaredNorm();
    D(i, k) = v;
    D(k, i) = v;
  }
}

void check_sizes(const MultiFidelityDag& dag, const std::map<NodeId, int>& sizes) {
  for (const auto& [t, n] : sizes) {
    if (!dag.contains(t)) fail(ErrorKind::UnknownNode, "size given for unknown node " + std::to_string(t));
    if (n < 1) fail(ErrorKind::InvalidArgument, "size of node " + std::to_string(t) + " must be >= 1");
  }
  for (NodeId t : dag.node_ids()) {
    if (!sizes.count(t)) fail(ErrorKind::InvalidArgument, "no size given for node " + std::to_string(t));
  }
}

}  // namespace

Slhd generate_slhd(int M, int n_per_slice, int d, const SlhdConfig& cfg) {
  if (M < 1 || n_per_slice < 1 || d < 1) fail(ErrorKind::InvalidArgument, "SLHD needs M, n, d >= 1");
  std::mt19937_64 rng(cfg.seed);
  const int N = M * n_per_slice;
  Slhd out{M, n_per_slice, d, Matrix(N, d), std::vector<int>(N)};
  for (int r = 0; r < N; ++r) out.slice_of[r] = r / n_per_slice;

  std::vector<int> perm(M), cells(n_per_slice);
  std::vector<std::vector<int>> fine(M, std::vector<int>(n_per_slice));
  for (int l = 0; l < d; ++l) {
    // coarse cell c is split into M fine cells, one handed to each slice
    for (int c = 0; c < n_per_slice; ++c) {
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      for (int s = 0; s < M; ++s) fine[s][c] = c * M + perm[s];
    }
    for (int s = 0; s < M; ++s) {
      cells = fine[s];
      std::shuffle(cells.begin(), cells.end(), rng);
      for (int i = 0; i < n_per_slice; ++i) out.points(s * n_per_slice + i, l) = (cells[i] + 0.5) / N;
    }
  }

  if (cfg.iters <= 0 || n_per_slice < 2 || N < 3) return out;

  Matrix& X = out.points;
  Matrix D(N, N);
  for (Eigen::Index i = 0; i < N; ++i) refresh_row(X, D, i);
  Score best = score(D, n_per_slice);
  std::uniform_int_distribution<int> pick_slice(0, M - 1), pick_dim(0, d - 1), pick_row(0, n_per_slice - 1);
  Vector old_i(N), old_j(N);
  for (int it = 0; it < cfg.iters; ++it) {
    const int s = pick_slice(rng);
    const int l = pick_dim(rng);
    const int a = pick_row(rng);
    int b = pick_row(rng);
    if (a == b) continue;
    const Eigen::Index i = s * n_per_slice + a, j = s * n_per_slice + b;
    old_i = D.col(i);
    old_j = D.col(j);
    std::swap(X(i, l), X(j, l));
    refresh_row(X, D, i);
    refresh_row(X, D, j);
    const Score cand = score(D, n_per_slice);
    if (better(cand, best)) {
      best = cand;
      continue;
    }
    std::swap(X(i, l), X(j, l));
    D.col(i) = old_i;
    D.row(i) = old_i.transpose();
    D.col(j) = old_j;
    D.row(j) = old_j.transpose();
  }
  return out;
}

bool is_latin_hypercube(const Matrix& X) {
  const Eigen::Index n = X.rows();
  for (Eigen::Index l = 0; l < X.cols(); ++l) {
    std::vector<bool> seen(static_cast<std::size_t>(n), false);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double x = X(i, l);
      if (!(x >= 0.0 && x < 1.0)) return false;
      const auto bin = static_cast<std::size_t>(std::floor(x * static_cast<double>(n)));
      if (bin >= seen.size() || seen[bin]) return false;
      seen[bin] = true;
    }
  }
  return true;
}

double min_distance(const Matrix& X) {
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < X.rows(); ++j) {
    for (Eigen::Index i = j + 1; i < X.rows(); ++i) best = std::min(best, (X.row(i) - X.row(j)).squaredNorm());
  }
  return std::sqrt(best);
}

std::vector<NodeId> bfs_slice_order(const MultiFidelityDag& dag) {
  std::vector<NodeId> order = dag.node_ids();
  std::sort(order.begin(), order.end(), [&](NodeId a, NodeId b) {
    const int da = dag.depth(a), db = dag.depth(b);
    return da != db ? da < db : a < b;
  });
  return order;
}

DesignPlan nested_bfs_design(const MultiFidelityDag& dag, const std::map<NodeId, int>& sizes, int d,
                             const SlhdConfig& cfg, bool allow_partial_slices) {
  check_sizes(dag, sizes);
  if (d < 1) fail(ErrorKind::InvalidArgument, "design dimension must be >= 1");
  const int n_root = sizes.at(dag.root());
  for (const auto& [p, c] : dag.edges()) {
    if (sizes.at(p) < sizes.at(c)) {
      fail(ErrorKind::SizeMonotonicityViolated, "node " + std::to_string(p) + " has " + std::to_string(sizes.at(p)) +
                                                    " runs but its child " + std::to_string(c) + " has " +
                                                    std::to_string(sizes.at(c)));
    }
  }
  if (!allow_partial_slices) {
    for (const auto& [t, n] : sizes) {
      if (n % n_root != 0) {
        fail(ErrorKind::SizeNotMultiple, "size " + std::to_string(n) + " of node " + std::to_string(t) +
                                             " is not a multiple of the root size " + std::to_string(n_root));
      }
    }
  }

  const std::vector<NodeId> order = bfs_slice_order(dag);
  std::map<NodeId, int> own, first_slice, slice_count;
  int M = 0;
  for (NodeId t : order) {
    int inherited = 0;
    for (NodeId u : dag.descendants(t)) inherited += own.at(u);
    const int k = sizes.at(t) - inherited;
    if (k < 0) {
      fail(ErrorKind::SizeMonotonicityViolated, "descendants of node " + std::to_string(t) + " already hold " +
                                                    std::to_string(inherited) + " points, more than its size " +
                                                    std::to_string(sizes.at(t)));
    }
    own[t] = k;
    first_slice[t] = M;
    slice_count[t] = (k + n_root - 1) / n_root;
    M += slice_count[t];
  }

  DesignPlan plan;
  plan.sizes = sizes;
  plan.slhd = generate_slhd(M, n_root, d, cfg);
  std::map<NodeId, std::vector<int>> own_rows;
  for (NodeId t : order) {
    auto& slices = plan.slice_assignment[t];
    for (int s = 0; s < slice_count[t]; ++s) slices.push_back(first_slice[t] + s);
    for (int r = 0; r < own[t]; ++r) own_rows[t].push_back(first_slice[t] * n_root + r);
  }
  for (NodeId t : order) {
    std::vector<int> rows = own_rows[t];
    for (NodeId u : dag.descendants(t)) rows.insert(rows.end(), own_rows[u].begin(), own_rows[u].end());
    std::sort(rows.begin(), rows.end());
    Matrix Xt(static_cast<Eigen::Index>(rows.size()), d);
    for (std::size_t i = 0; i < rows.size(); ++i) Xt.row(static_cast<Eigen::Index>(i)) = plan.slhd.points.row(rows[i]);
    plan.designs[t] = std::move(Xt);
    plan.rows[t] = std::move(rows);
  }
  return plan;
}

namespace {

template <typename Num>
double phi_impl(const MultiFidelityDag& dag, const std::map<NodeId, Num>& sizes, double rho, double nu, int d) {
  if (d < 1 || !(nu > 0.0)) fail(ErrorKind::InvalidArgument, "phi needs d >= 1 and nu > 0");
  double phi = 0.0;
  for (NodeId t : dag.node_ids()) {
    auto it = sizes.find(t);
    if (it == sizes.end()) fail(ErrorKind::InvalidArgument, "no size given for node " + std::to_string(t));
    const double n = static_cast<double>(it->second);
    if (!(n > 0.0)) fail(ErrorKind::InvalidArgument, "sizes must be positive");
    phi += std::pow(rho, static_cast<double>(dag.descendants(t).size())) * std::pow(n, -nu / d);
  }
  return phi;
}

}  // namespace

double phi_criterion(const MultiFidelityDag& dag, const std::map<NodeId, int>& sizes, double rho, double nu, int d) {
  return phi_impl(dag, sizes, rho, nu, d);
}

double phi_criterion(const MultiFidelityDag& dag, const std::map<NodeId, double>& sizes, double rho, double nu,
                     int d) {
  return phi_impl(dag, sizes, rho, nu, d);
}

double design_cost(const MultiFidelityDag& dag, const std::map<NodeId, int>& sizes) {
  double c = 0.0;
  for (const auto& [t, n] : sizes) c += dag.cost(t) * n;
  return c;
}

Allocation allocate_sizes(const MultiFidelityDag& dag, double budget, double rho, double nu, int d) {
  if (!(rho > 0.0 && rho <= 1.0)) fail(ErrorKind::InvalidArgument, "rho must lie in (0, 1]");
  if (!(nu > 0.0) || d < 1) fail(ErrorKind::InvalidArgument, "allocation needs nu > 0 and d >= 1");
  double unit = 0.0;
  for (const auto& node : dag.nodes()) {
    if (!(node.cost_per_run > 0.0)) fail(ErrorKind::InvalidArgument, "costs per run must be positive");
    unit += node.cost_per_run;
  }
  if (!(budget > unit)) {
    fail(ErrorKind::BudgetTooSmall, "budget " + std::to_string(budget) + " does not exceed one run per node (" +
                                        std::to_string(unit) + ")");
  }

  Allocation out;
  const double expo = static_cast<double>(d) / (d + nu);
  double spent = 0.0;
  for (NodeId t : dag.node_ids()) {
    const double w = std::pow(std::pow(rho, static_cast<double>(dag.descendants(t).size())) / dag.cost(t), expo);
    out.real[t] = w;
    spent += dag.cost(t) * w;
  }
  for (auto& [t, n] : out.real) n *= budget / spent;

  const std::vector<NodeId> order = bfs_slice_order(dag);  // children before parents
  auto round_with = [&](int n_root) {
    std::map<NodeId, int> s;
    for (NodeId t : order) {
      if (t == dag.root()) {
        s[t] = n_root;
        continue;
      }
      int n = static_cast<int>(std::floor(out.real.at(t) / n_root)) * n_root;
      for (NodeId c : dag.children(t)) n = std::max(n, s.at(c));
      s[t] = n;
    }
    return s;
  };

  int n_root = std::max(1, static_cast<int>(std::lround(out.real.at(dag.root()))));
  std::map<NodeId, int> sizes = round_with(n_root);
  while (design_cost(dag, sizes) > budget && n_root > 1) sizes = round_with(--n_root);
  if (design_cost(dag, sizes) > budget) {
    for (auto& [t, n] : sizes) n = 1;
  }

  // Spend what is left in whole multiples of the root size, greedily by
  // Phi decrease per unit cost.
  const auto ancestors = [&] {
    std::map<NodeId, std::set<NodeId>> a;
    for (NodeId t : dag.node_ids()) a[t] = dag.ancestors(t);
    return a;
  }();
  for (;;) {
    const double phi_now = phi_criterion(dag, sizes, rho, nu, d);
    const double cost_now = design_cost(dag, sizes);
    double best_rate = 0.0;
    std::map<NodeId, int> best;
    for (NodeId t : dag.node_ids()) {
      if (t == dag.root()) continue;
      std::map<NodeId, int> cand = sizes;
      cand[t] += n_root;
      for (NodeId a : ancestors.at(t)) cand[a] = std::max(cand[a], cand[t]);
      const double cost = design_cost(dag, cand);
      if (cost > budget) continue;
      const double rate = (phi_now - phi_criterion(dag, cand, rho, nu, d)) / (cost - cost_now);
      if (rate > best_rate) {
        best_rate = rate;
        best = std::move(cand);
      }
    }
    if (best.empty()) break;
    sizes = std::move(best);
  }

  out.sizes = sizes;
  out.phi = phi_criterion(dag, sizes, rho, nu, d);
  out.cost = design_cost(dag, sizes);
  return out;
}

Matrix qmc_points(int n, int d, std::uint64_t seed) {
  if (n < 1 || d < 1) fail(ErrorKind::InvalidArgument, "qmc_points needs n, d >= 1");
  const gsl_qrng_type* type = d <= 40 ? gsl_qrng_sobol : gsl_qrng_halton;
  std::unique_ptr<gsl_qrng, decltype(&gsl_qrng_free)> q(gsl_qrng_alloc(type, static_cast<unsigned>(d)),
                                                        gsl_qrng_free);
  if (!q) fail(ErrorKind::InvalidArgument, "no low-discrepancy generator for d = " + std::to_string(d));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  Vector shift(d);
  for (int l = 0; l < d; ++l) shift[l] = U(rng);
  Matrix out(n, d);
  std::vector<double> buf(static_cast<std::size_t>(d));
  for (int i = 0; i < n; ++i) {
    gsl_qrng_get(q.get(), buf.data());
    for (int l = 0; l < d; ++l) {
      const double v = buf[static_cast<std::size_t>(l)] + shift[l];
      out(i, l) = v - std::floor(v);
    }
  }
  return out;
}

double fill_distance(const Matrix& design, const Matrix& candidates) {
  if (design.rows() == 0) fail(ErrorKind::EmptyDesign, "fill distance of an empty design");
  if (design.cols() != candidates.cols()) fail(ErrorKind::DimensionMismatch, "design and candidate grid differ in d");
  double worst = 0.0;
  for (Eigen::Index c = 0; c < candidates.rows(); ++c) {
    const double nearest = (design.rowwise() - candidates.row(c)).rowwise().squaredNorm().minCoeff();
    worst = std::max(worst, nearest);
  }
  return std::sqrt(worst);
}

double fill_distance(const Matrix& design) {
  if (design.rows() == 0) fail(ErrorKind::EmptyDesign, "fill distance of an empty design");
  return fill_distance(design, qmc_points(kDefaultFillGrid, static_cast<int>(design.cols())));
}

}  // namespace gmgp
