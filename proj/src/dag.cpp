#include "gmgp/dag.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <sstream>

#include "gmgp/error.hpp"

namespace gmgp {

namespace {

std::string edge_str(const MultiFidelityDag::Edge& e) {
  std::ostringstream os;
  os << "(" << e.first << " -> " << e.second << ")";
  return os.str();
}

// Returns one directed cycle as a node list, or empty if the graph is acyclic.
std::vector<NodeId> find_cycle(const std::vector<NodeId>& ids, const std::map<NodeId, std::vector<NodeId>>& out) {
  std::map<NodeId, int> state;  // 0 = new, 1 = on stack, 2 = done
  std::vector<NodeId> stack;
  std::vector<NodeId> cycle;
  std::function<bool(NodeId)> dfs = [&](NodeId u) {
    state[u] = 1;
    stack.push_back(u);
    auto it = out.find(u);
    if (it != out.end()) {
      for (NodeId v : it->second) {
        if (state[v] == 1) {
          auto pos = std::find(stack.begin(), stack.end(), v);
          cycle.assign(pos, stack.end());
          cycle.push_back(v);
          return true;
        }
        if (state[v] == 0 && dfs(v)) return true;
      }
    }
    stack.pop_back();
    state[u] = 2;
    return false;
  };
  for (NodeId id : ids) {
    if (state[id] == 0 && dfs(id)) return cycle;
  }
  return {};
}

}  // namespace

MultiFidelityDag::MultiFidelityDag(std::vector<DagNode> nodes, std::vector<Edge> edges, NodeId root)
    : nodes_(std::move(nodes)), edges_(std::move(edges)), root_(root) {
  if (nodes_.empty()) fail(ErrorKind::InvalidArgument, "DAG has no nodes");
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const auto& n = nodes_[i];
    if (!index_.emplace(n.id, i).second) {
      fail(ErrorKind::InvalidArgument, "duplicate node id " + std::to_string(n.id));
    }
    if (!(n.cost_per_run > 0.0) || !std::isfinite(n.cost_per_run)) {
      fail(ErrorKind::InvalidArgument, "node " + std::to_string(n.id) + " has non-positive cost");
    }
  }
  if (!contains(root_)) fail(ErrorKind::UnknownNode, "root id " + std::to_string(root_) + " is not a node");

  std::set<Edge> seen;
  for (const auto& e : edges_) {
    if (!contains(e.first) || !contains(e.second)) {
      fail(ErrorKind::DanglingEdge, "edge " + edge_str(e) + " references a missing node");
    }
    if (e.first == e.second) fail(ErrorKind::CycleDetected, "self-loop on node " + std::to_string(e.first));
    if (!seen.insert(e).second) fail(ErrorKind::DuplicateEdge, "edge " + edge_str(e) + " listed twice");
  }

  const std::size_t n = nodes_.size();
  parents_.assign(n, {});
  children_.assign(n, {});
  std::map<NodeId, std::vector<NodeId>> out;
  for (const auto& e : edges_) {
    parents_[index_of(e.second)].push_back(e.first);
    children_[index_of(e.first)].push_back(e.second);
    out[e.first].push_back(e.second);
  }
  for (auto& p : parents_) std::sort(p.begin(), p.end());
  for (auto& c : children_) std::sort(c.begin(), c.end());

  auto ids = node_ids();
  for (auto& [k, v] : out) std::sort(v.begin(), v.end());
  auto cycle = find_cycle(ids, out);
  if (!cycle.empty()) {
    std::ostringstream os;
    for (std::size_t i = 0; i < cycle.size(); ++i) os << (i ? " -> " : "") << cycle[i];
    fail(ErrorKind::CycleDetected, "cycle " + os.str());
  }

  std::vector<NodeId> sinks;
  for (NodeId id : ids) {
    if (children_[index_of(id)].empty()) sinks.push_back(id);
  }
  if (!children_[index_of(root_)].empty()) {
    fail(ErrorKind::MultipleRoots, "declared root " + std::to_string(root_) + " has outgoing edges");
  }
  if (sinks.size() > 1) {
    std::ostringstream os;
    for (std::size_t i = 0; i < sinks.size(); ++i) os << (i ? ", " : "") << sinks[i];
    fail(ErrorKind::MultipleRoots, "nodes without outgoing edges: " + os.str());
  }

  auto anc = ancestors(root_);
  for (NodeId id : ids) {
    if (id != root_ && !anc.count(id)) {
      fail(ErrorKind::UnreachableNode, "node " + std::to_string(id) + " has no path to the root");
    }
  }

  // depth = longest path to the root, filled root-first by memoised recursion
  depth_.assign(n, -1);
  std::function<int(NodeId)> depth_of = [&](NodeId t) -> int {
    int& d = depth_[index_of(t)];
    if (d >= 0) return d;
    int best = 0;
    for (NodeId c : children_[index_of(t)]) best = std::max(best, depth_of(c) + 1);
    d = best;
    return d;
  };
  for (NodeId id : ids) depth_of(id);

  fit_order_ = ids;
  std::stable_sort(fit_order_.begin(), fit_order_.end(), [&](NodeId a, NodeId b) {
    int da = depth(a), db = depth(b);
    if (da != db) return da > db;
    return a < b;
  });
}

std::size_t MultiFidelityDag::index_of(NodeId t) const {
  auto it = index_.find(t);
  if (it == index_.end()) fail(ErrorKind::UnknownNode, "node " + std::to_string(t) + " does not exist");
  return it->second;
}

const DagNode& MultiFidelityDag::node(NodeId t) const { return nodes_[index_of(t)]; }

std::vector<NodeId> MultiFidelityDag::node_ids() const {
  std::vector<NodeId> ids;
  ids.reserve(nodes_.size());
  for (const auto& [id, i] : index_) ids.push_back(id);
  return ids;
}

std::set<NodeId> MultiFidelityDag::parents(NodeId t) const {
  const auto& p = parents_[index_of(t)];
  return {p.begin(), p.end()};
}

std::set<NodeId> MultiFidelityDag::children(NodeId t) const {
  const auto& c = children_[index_of(t)];
  return {c.begin(), c.end()};
}

std::set<NodeId> MultiFidelityDag::ancestors(NodeId t) const {
  std::set<NodeId> result;
  std::deque<NodeId> queue(parents_[index_of(t)].begin(), parents_[index_of(t)].end());
  while (!queue.empty()) {
    NodeId u = queue.front();
    queue.pop_front();
    if (!result.insert(u).second) continue;
    for (NodeId p : parents_[index_of(u)]) queue.push_back(p);
  }
  return result;
}

std::set<NodeId> MultiFidelityDag::descendants(NodeId t) const {
  std::set<NodeId> result;
  std::deque<NodeId> queue(children_[index_of(t)].begin(), children_[index_of(t)].end());
  while (!queue.empty()) {
    NodeId u = queue.front();
    queue.pop_front();
    if (!result.insert(u).second) continue;
    for (NodeId c : children_[index_of(u)]) queue.push_back(c);
  }
  return result;
}

std::set<NodeId> MultiFidelityDag::sources() const {
  std::set<NodeId> result;
  for (const auto& [id, i] : index_) {
    if (parents_[i].empty()) result.insert(id);
  }
  return result;
}

bool MultiFidelityDag::is_in_tree() const {
  for (const auto& [id, i] : index_) {
    if (id != root_ && children_[i].size() != 1) return false;
  }
  return true;
}

int MultiFidelityDag::depth(NodeId t) const { return depth_[index_of(t)]; }

int MultiFidelityDag::max_depth() const { return *std::max_element(depth_.begin(), depth_.end()); }

std::vector<NodeId> MultiFidelityDag::longest_path_to_root() const {
  // start from the smallest-id node of maximal depth, then always step to the
  // smallest-id child that keeps the path maximal
  NodeId start = fit_order_.front();
  std::vector<NodeId> path{start};
  NodeId cur = start;
  while (cur != root_) {
    NodeId next = -1;
    for (NodeId c : children_[index_of(cur)]) {
      if (depth(c) == depth(cur) - 1) {
        next = c;
        break;
      }
    }
    path.push_back(next);
    cur = next;
  }
  return path;
}

MultiFidelityDag MultiFidelityDag::chain(const std::vector<NodeId>& order) const {
  std::vector<DagNode> ns;
  std::vector<Edge> es;
  for (std::size_t i = 0; i < order.size(); ++i) {
    ns.push_back(node(order[i]));
    if (i > 0) es.emplace_back(order[i - 1], order[i]);
  }
  if (order.empty()) fail(ErrorKind::InvalidArgument, "empty chain");
  return MultiFidelityDag(std::move(ns), std::move(es), order.back());
}

MultiFidelityDag MultiFidelityDag::induced(const std::set<NodeId>& keep) const {
  if (!keep.count(root_)) fail(ErrorKind::InvalidArgument, "induced sub-DAG must keep the root");
  std::vector<DagNode> ns;
  std::vector<Edge> es;
  for (NodeId id : keep) ns.push_back(node(id));
  for (const auto& e : edges_) {
    if (keep.count(e.first) && keep.count(e.second)) es.push_back(e);
  }
  return MultiFidelityDag(std::move(ns), std::move(es), root_);
}

void validate(const MultiFidelityDag& dag) {
  MultiFidelityDag copy(dag.nodes(), dag.edges(), dag.root());
  (void)copy;
}

namespace graphs {

MultiFidelityDag three_node_tree(double cost_l1, double cost_l2, double cost_h) {
  return MultiFidelityDag({{1, "L1", cost_l1}, {2, "L2", cost_l2}, {3, "H", cost_h}}, {{1, 3}, {2, 3}}, 3);
}

MultiFidelityDag five_node_tree(const std::vector<double>& costs) {
  if (costs.size() != 5) fail(ErrorKind::InvalidArgument, "five_node_tree needs 5 costs");
  return MultiFidelityDag({{1, "L1", costs[0]}, {2, "L2", costs[1]}, {3, "M1", costs[2]}, {4, "M2", costs[3]},
                           {5, "H", costs[4]}},
                          {{1, 3}, {2, 3}, {3, 5}, {4, 5}}, 5);
}

MultiFidelityDag chain(int n) {
  std::vector<DagNode> ns;
  std::vector<MultiFidelityDag::Edge> es;
  for (int i = 1; i <= n; ++i) {
    ns.push_back({i, "N" + std::to_string(i), 1.0});
    if (i > 1) es.emplace_back(i - 1, i);
  }
  return MultiFidelityDag(std::move(ns), std::move(es), n);
}

}  // namespace graphs

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::CycleDetected: return "CycleDetected";
    case ErrorKind::MultipleRoots: return "MultipleRoots";
    case ErrorKind::UnreachableNode: return "UnreachableNode";
    case ErrorKind::DanglingEdge: return "DanglingEdge";
    case ErrorKind::DuplicateEdge: return "DuplicateEdge";
    case ErrorKind::UnknownNode: return "UnknownNode";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::InvalidDataset: return "InvalidDataset";
    case ErrorKind::SingularCorrelation: return "SingularCorrelation";
    case ErrorKind::RankDeficientTrend: return "RankDeficientTrend";
    case ErrorKind::SingularCovariance: return "SingularCovariance";
    case ErrorKind::SingularConditioningBlock: return "SingularConditioningBlock";
    case ErrorKind::NotNested: return "NotNested";
    case ErrorKind::InTreeRequired: return "InTreeRequired";
    case ErrorKind::SizeNotMultiple: return "SizeNotMultiple";
    case ErrorKind::SizeMonotonicityViolated: return "SizeMonotonicityViolated";
    case ErrorKind::BudgetTooSmall: return "BudgetTooSmall";
    case ErrorKind::EmptyDesign: return "EmptyDesign";
    case ErrorKind::OutOfDomain: return "OutOfDomain";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::NegativeVariance: return "NegativeVariance";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::Parse: return "Parse";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace gmgp
