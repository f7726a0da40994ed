#pragma once

#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace gmgp {

using NodeId = int;

struct DagNode {
  NodeId id = 0;
  std::string label;
  double cost_per_run = 1.0;
};

/// Multi-fidelity DAG. An edge (parent, child) means `child` is a one-step
/// higher-fidelity refinement of `parent`; the single sink is the root.
///
/// Construction validates every invariant, so a constructed object is always
/// a valid rooted DAG and is immutable afterwards.
class MultiFidelityDag {
 public:
  using Edge = std::pair<NodeId, NodeId>;

  MultiFidelityDag(std::vector<DagNode> nodes, std::vector<Edge> edges, NodeId root);

  const std::vector<DagNode>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }
  NodeId root() const { return root_; }
  std::size_t size() const { return nodes_.size(); }

  bool contains(NodeId t) const { return index_.count(t) != 0; }
  const DagNode& node(NodeId t) const;
  double cost(NodeId t) const { return node(t).cost_per_run; }
  std::vector<NodeId> node_ids() const;

  std::set<NodeId> parents(NodeId t) const;
  std::set<NodeId> children(NodeId t) const;
  std::set<NodeId> ancestors(NodeId t) const;
  std::set<NodeId> descendants(NodeId t) const;
  std::set<NodeId> sources() const;

  bool is_source(NodeId t) const { return parents(t).empty(); }
  bool is_in_tree() const;

  /// Longest path length (in edges) from t to the root.
  int depth(NodeId t) const;
  int max_depth() const;

  /// Sources first, root last: descending depth, ties by ascending id.
  const std::vector<NodeId>& fit_order() const { return fit_order_; }

  /// Longest root-terminating path, lowest fidelity first. Ties by id.
  std::vector<NodeId> longest_path_to_root() const;

  /// Chain DAG over the given nodes (lowest fidelity first, last = root),
  /// keeping labels and costs.
  MultiFidelityDag chain(const std::vector<NodeId>& order) const;

  /// Sub-DAG induced by `keep`; must contain the root and stay valid.
  MultiFidelityDag induced(const std::set<NodeId>& keep) const;

 private:
  std::size_t index_of(NodeId t) const;

  std::vector<DagNode> nodes_;
  std::vector<Edge> edges_;
  NodeId root_;
  std::map<NodeId, std::size_t> index_;
  std::vector<std::vector<NodeId>> parents_;
  std::vector<std::vector<NodeId>> children_;
  std::vector<int> depth_;
  std::vector<NodeId> fit_order_;
};

/// Re-runs the full invariant check (construction already does this).
void validate(const MultiFidelityDag& dag);

// Canonical graphs used throughout the tests and the benchmark harness.
namespace graphs {
/// L1 -> H <- L2 with ids 1, 2, 3.
MultiFidelityDag three_node_tree(double cost_l1 = 1.0, double cost_l2 = 1.0, double cost_h = 1.0);
/// L1 -> M1 <- L2, M1 -> H <- M2 with ids L1=1, L2=2, M1=3, M2=4, H=5.
MultiFidelityDag five_node_tree(const std::vector<double>& costs = {1, 1, 1, 1, 1});
/// 1 -> 2 -> ... -> n.
MultiFidelityDag chain(int n);
}  // namespace graphs

}  // namespace gmgp
