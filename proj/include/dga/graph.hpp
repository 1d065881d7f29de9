#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "dga/kernels.hpp"

namespace dga {

using NodeId = std::uint32_t;

/// Unordered node pair, stored with u < v.
struct Edge {
  NodeId u = 0;
  NodeId v = 0;

  static Edge of(NodeId a, NodeId b) { return a < b ? Edge{a, b} : Edge{b, a}; }
  auto operator<=>(const Edge&) const = default;
};

/// Immutable undirected simple graph.
class Graph {
 public:
  Graph() = default;
  /// Canonicalizes: orders each pair, sorts, removes duplicates and self-loops.
  /// Throws InputError on an endpoint >= num_nodes.
  Graph(std::size_t num_nodes, std::vector<Edge> edges,
        std::optional<std::vector<std::size_t>> node_ids = std::nullopt);

  std::size_t num_nodes() const { return num_nodes_; }
  std::size_t num_edges() const { return edges_.size(); }

  /// Sorted, unique, u < v.
  std::span<const Edge> edges() const { return edges_; }
  /// Sorted neighbour list of node i.
  std::span<const NodeId> neighbors(NodeId i) const { return adjacency_[i]; }
  std::size_t degree(NodeId i) const { return adjacency_[i].size(); }
  bool has_edge(NodeId a, NodeId b) const;

  /// Original ids of the nodes when the graph was re-indexed (LCC extraction).
  const std::optional<std::vector<std::size_t>>& node_ids() const { return node_ids_; }

  Matrix dense_adjacency() const;

  bool operator==(const Graph& o) const { return num_nodes_ == o.num_nodes_ && edges_ == o.edges_; }

 private:
  std::size_t num_nodes_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::vector<NodeId>> adjacency_;
  std::optional<std::vector<std::size_t>> node_ids_;
};

using FeatureMatrix = Matrix;

struct LabelVector {
  std::vector<int> labels;
  int num_classes = 0;

  std::size_t size() const { return labels.size(); }
  int operator[](std::size_t i) const { return labels[i]; }
  bool operator==(const LabelVector&) const = default;
};

struct Split {
  std::vector<NodeId> train;
  std::vector<NodeId> val;
  std::vector<NodeId> test;

  /// Throws InputError unless the sets are disjoint, in range, and train/test are non-empty.
  void validate(std::size_t num_nodes) const;
  /// Nodes outside the train set (the unlabeled nodes from the attacker's view).
  std::vector<NodeId> unlabeled(std::size_t num_nodes) const;
  bool operator==(const Split&) const = default;
};

enum class FlipOp { add, remove };

struct Flip {
  NodeId u = 0;
  NodeId v = 0;
  FlipOp op = FlipOp::add;
  bool operator==(const Flip&) const = default;
};

struct PerturbationSet {
  std::vector<Flip> flips;

  std::size_t size() const { return flips.size(); }
  bool empty() const { return flips.empty(); }
  /// Same pairs with add/remove swapped.
  PerturbationSet inverted() const;
  bool operator==(const PerturbationSet&) const = default;
};

/// Deduplicates, drops self-loops. Throws InputError on an index >= num_nodes.
Graph build_graph(std::span<const std::pair<std::size_t, std::size_t>> edge_list, std::size_t num_nodes);

/// Component id per node; ids are assigned in order of each component's lowest node.
std::vector<std::size_t> connected_components(const Graph& g, std::size_t* count = nullptr);

struct LccResult {
  Graph graph;
  FeatureMatrix features;
  LabelVector labels;
  /// id_map[new] = old
  std::vector<std::size_t> id_map;
};

/// Induced subgraph on the largest component; ties go to the component
/// containing the lowest original index.
LccResult largest_connected_component(const Graph& g, const FeatureMatrix& features, const LabelVector& labels);

/// D^-1/2 (W + I) D^-1/2 with D = diag(rowsum(W + I)). Throws InputError on a
/// negative, non-finite, or non-square input.
Matrix gcn_normalize(const Matrix& weighted_adjacency);

/// Sparse counterpart for a symmetric weighted pattern given as unique pairs
/// u < v with weight w (applied to both directions). Diagonal is always present.
struct WeightedEdge {
  NodeId u = 0;
  NodeId v = 0;
  double w = 1.0;
};
CsrMatrix gcn_normalize_sparse(std::size_t num_nodes, std::span<const WeightedEdge> edges);
CsrMatrix gcn_normalize_sparse(const Graph& g);

/// Throws InputError when a flip is inconsistent with g or duplicated.
void validate_perturbations(const Graph& g, const PerturbationSet& p);
Graph apply_perturbations(const Graph& g, const PerturbationSet& p);

/// Number of differing entries between the dense adjacency matrices.
std::size_t adjacency_l0_distance(const Graph& a, const Graph& b);

std::map<std::size_t, std::size_t> degree_distribution(const Graph& g);

}  // namespace dga
