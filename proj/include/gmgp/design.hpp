#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "gmgp/dag.hpp"
#include "gmgp/kernel.hpp"

namespace gmgp {

/// Sliced Latin hypercube on [0,1]^d. Points sit at the centres of the fine
/// grid cells (M * n_per_slice cells per dimension), so every bin count can
/// be checked exactly with floor().
struct Slhd {
  int M = 0;
  int n_per_slice = 0;
  int d = 0;
  Matrix points;               // (M * n_per_slice) x d, slice s owns rows [s*n, (s+1)*n)
  std::vector<int> slice_of;   // row -> slice

  Matrix slice(int s) const { return points.middleRows(static_cast<Eigen::Index>(s) * n_per_slice, n_per_slice); }
};

struct SlhdConfig {
  int iters = 10000;  // maximin swap proposals
  std::uint64_t seed = 1;
};

Slhd generate_slhd(int M, int n_per_slice, int d, const SlhdConfig& cfg = {});

/// True when the rows occupy distinct cells of an n-cell grid in every
/// dimension (bins are floor(x * n)).
bool is_latin_hypercube(const Matrix& X);

/// Smallest Euclidean distance between two rows; +inf for fewer than 2 rows.
double min_distance(const Matrix& X);

struct DesignPlan {
  std::map<NodeId, int> sizes;
  std::map<NodeId, Matrix> designs;
  /// Slices whose points were introduced at each node (the node's own runs).
  std::map<NodeId, std::vector<int>> slice_assignment;
  /// Rows of `slhd.points` making up each node's design, in design order.
  std::map<NodeId, std::vector<int>> rows;
  Slhd slhd;
};

/// Nested BFS allocation of SLHD slices. |D_t| = sizes[t]; node t receives
/// sizes[t] - |union of its descendants' designs| fresh points, taken from
/// consecutive slices in root-first order. With `allow_partial_slices`,
/// sizes need not be multiples of the root size and the last slice of a node
/// may be used only in part.
DesignPlan nested_bfs_design(const MultiFidelityDag& dag, const std::map<NodeId, int>& sizes, int d,
                             const SlhdConfig& cfg = {}, bool allow_partial_slices = false);

/// Root first, then by increasing depth, ties by id. Every node comes after
/// all of its descendants.
std::vector<NodeId> bfs_slice_order(const MultiFidelityDag& dag);

double phi_criterion(const MultiFidelityDag& dag, const std::map<NodeId, int>& sizes, double rho, double nu, int d);
double phi_criterion(const MultiFidelityDag& dag, const std::map<NodeId, double>& sizes, double rho, double nu, int d);

struct Allocation {
  std::map<NodeId, double> real;  // closed-form allocation spending exactly the budget
  std::map<NodeId, int> sizes;    // rounded, nested-design compatible
  double phi = 0.0;               // of the rounded sizes
  double cost = 0.0;              // of the rounded sizes
};

/// Budget-constrained sample sizes; costs come from the DAG nodes.
Allocation allocate_sizes(const MultiFidelityDag& dag, double budget, double rho, double nu, int d);

double design_cost(const MultiFidelityDag& dag, const std::map<NodeId, int>& sizes);

/// n x d scrambled Sobol points in [0,1)^d (random shift modulo 1).
Matrix qmc_points(int n, int d, std::uint64_t seed = 0x5eed);

/// Largest distance from a candidate point to its nearest design point.
double fill_distance(const Matrix& design, const Matrix& candidates);
/// Same with the default 2^13-point scrambled Sobol candidate set.
double fill_distance(const Matrix& design);

constexpr int kDefaultFillGrid = 1 << 13;

}  // namespace gmgp
