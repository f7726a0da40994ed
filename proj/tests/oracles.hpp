#pragma once

// Brute-force references shared by the unit tests and the acceptance gate.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>

#include "gmgp/design.hpp"

namespace gmgp::oracle {

struct BestAllocation {
  std::map<NodeId, int> sizes;
  double phi = std::numeric_limits<double>::infinity();
};

// Exhaustive search over sizes that are multiples of the root size, at least
// one root batch per node, monotone along edges and within budget.
inline BestAllocation exhaustive_allocation(const MultiFidelityDag& dag, double budget, double rho, double nu,
                                            int d) {
  BestAllocation best;
  std::vector<NodeId> others;
  for (NodeId t : dag.node_ids())
    if (t != dag.root()) others.push_back(t);
  const int max_root = static_cast<int>(budget / dag.cost(dag.root()));
  for (int r = 1; r <= max_root; ++r) {
    std::map<NodeId, int> s{{dag.root(), r}};
    std::function<void(std::size_t, double)> rec = [&](std::size_t k, double spent) {
      if (k == others.size()) {
        for (const auto& [p, c] : dag.edges())
          if (s[p] < s[c]) return;
        const double phi = phi_criterion(dag, s, rho, nu, d);
        if (phi < best.phi) best = {s, phi};
        return;
      }
      const NodeId t = others[k];
      for (int m = 1; spent + dag.cost(t) * m * r <= budget + 1e-9; ++m) {
        s[t] = m * r;
        rec(k + 1, spent + dag.cost(t) * m * r);
      }
      s.erase(t);
    };
    rec(0, dag.cost(dag.root()) * r);
  }
  return best;
}

// Largest relative spread of the Lagrange multipliers implied by each node,
// dPhi/dn_t / C_t, plus the relative budget residual.
inline double kkt_residual(const MultiFidelityDag& dag, const std::map<NodeId, double>& n, double budget, double rho,
                           double nu, int d) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo, spent = 0.0;
  for (NodeId t : dag.node_ids()) {
    const double a = std::pow(rho, static_cast<double>(dag.descendants(t).size()));
    const double lambda = (nu / d) * a * std::pow(n.at(t), -nu / d - 1.0) / dag.cost(t);
    lo = std::min(lo, lambda);
    hi = std::max(hi, lambda);
    spent += dag.cost(t) * n.at(t);
  }
  return std::max((hi - lo) / hi, std::abs(spent - budget) / budget);
}

// Exact Latin hypercube check of every slice and of the whole design.
inline bool slhd_structure_ok(const Slhd& s) {
  if (!is_latin_hypercube(s.points)) return false;
  for (int k = 0; k < s.M; ++k)
    if (!is_latin_hypercube(s.slice(k))) return false;
  return true;
}

// Every row of the child design appears bit-for-bit among the parent's rows.
inline bool rows_subset(const Matrix& child, const Matrix& parent) {
  for (Eigen::Index i = 0; i < child.rows(); ++i) {
    bool found = false;
    for (Eigen::Index j = 0; j < parent.rows() && !found; ++j) found = (child.row(i).array() == parent.row(j).array()).all();
    if (!found) return false;
  }
  return true;
}

}  // namespace gmgp::oracle
