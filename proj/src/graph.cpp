#include "dga/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>

#include "dga/error.hpp"

namespace dga {

Graph::Graph(std::size_t num_nodes, std::vector<Edge> edges, std::optional<std::vector<std::size_t>> node_ids)
    : num_nodes_(num_nodes), node_ids_(std::move(node_ids)) {
  for (auto& e : edges) {
    if (e.u >= num_nodes || e.v >= num_nodes)
      throw InputError("edge (" + std::to_string(e.u) + ", " + std::to_string(e.v) + ") out of range for " +
                       std::to_string(num_nodes) + " nodes");
    e = Edge::of(e.u, e.v);
  }
  std::erase_if(edges, [](const Edge& e) { return e.u == e.v; });
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  edges_ = std::move(edges);

  adjacency_.assign(num_nodes, {});
  for (const auto& e : edges_) {
    adjacency_[e.u].push_back(e.v);
    adjacency_[e.v].push_back(e.u);
  }
  for (auto& nb : adjacency_) std::sort(nb.begin(), nb.end());
  if (node_ids_ && node_ids_->size() != num_nodes) throw InputError("node id map size mismatch");
}

bool Graph::has_edge(NodeId a, NodeId b) const {
  if (a >= num_nodes_ || b >= num_nodes_) return false;
  const auto& nb = adjacency_[a];
  return std::binary_search(nb.begin(), nb.end(), b);
}

Matrix Graph::dense_adjacency() const {
  Matrix a(num_nodes_, num_nodes_);
  for (const auto& e : edges_) {
    a(e.u, e.v) = 1.0;
    a(e.v, e.u) = 1.0;
  }
  return a;
}

void Split::validate(std::size_t num_nodes) const {
  if (train.empty()) throw InputError("split: train set is empty");
  if (test.empty()) throw InputError("split: test set is empty");
  std::vector<char> seen(num_nodes, 0);
  for (const auto* set : {&train, &val, &test}) {
    for (auto i : *set) {
      if (i >= num_nodes) throw InputError("split: node " + std::to_string(i) + " out of range");
      if (seen[i]) throw InputError("split: node " + std::to_string(i) + " appears twice");
      seen[i] = 1;
    }
  }
}

std::vector<NodeId> Split::unlabeled(std::size_t num_nodes) const {
  std::vector<char> labeled(num_nodes, 0);
  for (auto i : train) labeled[i] = 1;
  std::vector<NodeId> out;
  for (std::size_t i = 0; i < num_nodes; ++i)
    if (!labeled[i]) out.push_back(static_cast<NodeId>(i));
  return out;
}

PerturbationSet PerturbationSet::inverted() const {
  PerturbationSet out = *this;
  for (auto& f : out.flips) f.op = f.op == FlipOp::add ? FlipOp::remove : FlipOp::add;
  return out;
}

Graph build_graph(std::span<const std::pair<std::size_t, std::size_t>> edge_list, std::size_t num_nodes) {
  std::vector<Edge> edges;
  edges.reserve(edge_list.size());
  for (const auto& [a, b] : edge_list) {
    if (a >= num_nodes || b >= num_nodes)
      throw InputError("edge (" + std::to_string(a) + ", " + std::to_string(b) + ") out of range for " +
                       std::to_string(num_nodes) + " nodes");
    edges.push_back(Edge::of(static_cast<NodeId>(a), static_cast<NodeId>(b)));
  }
  return Graph(num_nodes, std::move(edges));
}

std::vector<std::size_t> connected_components(const Graph& g, std::size_t* count) {
  constexpr auto unset = static_cast<std::size_t>(-1);
  std::vector<std::size_t> comp(g.num_nodes(), unset);
  std::size_t next = 0;
  std::vector<NodeId> stack;
  for (std::size_t s = 0; s < g.num_nodes(); ++s) {
    if (comp[s] != unset) continue;
    comp[s] = next;
    stack.push_back(static_cast<NodeId>(s));
    while (!stack.empty()) {
      auto v = stack.back();
      stack.pop_back();
      for (auto w : g.neighbors(v)) {
        if (comp[w] == unset) {
          comp[w] = next;
          stack.push_back(w);
        }
      }
    }
    ++next;
  }
  if (count) *count = next;
  return comp;
}

LccResult largest_connected_component(const Graph& g, const FeatureMatrix& features, const LabelVector& labels) {
  if (features.rows() != g.num_nodes() || labels.size() != g.num_nodes())
    throw InputError("largest_connected_component: features/labels row count does not match the graph");
  std::size_t ncomp = 0;
  auto comp = connected_components(g, &ncomp);
  std::vector<std::size_t> sizes(ncomp, 0);
  for (auto c : comp) ++sizes[c];
  // Component ids follow their lowest node, so max_element's first hit is the tie-break.
  const std::size_t best =
      ncomp == 0 ? 0 : static_cast<std::size_t>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());

  LccResult out;
  std::vector<std::size_t> remap(g.num_nodes(), static_cast<std::size_t>(-1));
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    if (comp[i] == best) {
      remap[i] = out.id_map.size();
      out.id_map.push_back(i);
    }
  }
  std::vector<Edge> edges;
  for (const auto& e : g.edges())
    if (comp[e.u] == best)
      edges.push_back(Edge{static_cast<NodeId>(remap[e.u]), static_cast<NodeId>(remap[e.v])});

  std::vector<std::size_t> ids = out.id_map;
  if (g.node_ids())
    for (auto& id : ids) id = (*g.node_ids())[id];
  out.graph = Graph(out.id_map.size(), std::move(edges), std::move(ids));

  out.features = Matrix(out.id_map.size(), features.cols());
  out.labels.num_classes = labels.num_classes;
  out.labels.labels.reserve(out.id_map.size());
  for (std::size_t k = 0; k < out.id_map.size(); ++k) {
    auto src = features.row(out.id_map[k]);
    std::copy(src.begin(), src.end(), out.features.row(k).begin());
    out.labels.labels.push_back(labels[out.id_map[k]]);
  }
  return out;
}

Matrix gcn_normalize(const Matrix& w) {
  if (w.rows() != w.cols()) throw InputError("gcn_normalize: adjacency must be square");
  const std::size_t n = w.rows();
  for (double v : w.values()) {
    if (!std::isfinite(v)) throw InputError("gcn_normalize: non-finite entry");
    if (v < 0.0) throw InputError("gcn_normalize: negative entry");
  }
  std::vector<double> inv_sqrt(n);
  for (std::size_t i = 0; i < n; ++i) {
    double d = 1.0;
    for (std::size_t j = 0; j < n; ++j) d += w(i, j);
    inv_sqrt[i] = 1.0 / std::sqrt(d);
  }
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double wt = w(i, j) + (i == j ? 1.0 : 0.0);
      out(i, j) = wt * inv_sqrt[i] * inv_sqrt[j];
    }
  return out;
}

CsrMatrix gcn_normalize_sparse(std::size_t n, std::span<const WeightedEdge> edges) {
  std::vector<std::vector<std::pair<NodeId, double>>> rows(n);
  std::vector<double> deg(n, 1.0);
  for (std::size_t i = 0; i < n; ++i) rows[i].emplace_back(static_cast<NodeId>(i), 1.0);
  for (const auto& e : edges) {
    if (e.u >= n || e.v >= n || e.u == e.v) throw InputError("gcn_normalize_sparse: invalid pair");
    if (!(e.w >= 0.0) || !std::isfinite(e.w)) throw InputError("gcn_normalize_sparse: invalid weight");
    rows[e.u].emplace_back(e.v, e.w);
    rows[e.v].emplace_back(e.u, e.w);
    deg[e.u] += e.w;
    deg[e.v] += e.w;
  }
  CsrMatrix s;
  s.n = n;
  s.row_ptr.reserve(n + 1);
  for (std::size_t i = 0; i < n; ++i) {
    auto& r = rows[i];
    std::sort(r.begin(), r.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [j, w] : r) {
      s.col_idx.push_back(j);
      s.values.push_back(w / std::sqrt(deg[i] * deg[j]));
    }
    s.row_ptr.push_back(s.col_idx.size());
  }
  return s;
}

CsrMatrix gcn_normalize_sparse(const Graph& g) {
  std::vector<WeightedEdge> w;
  w.reserve(g.num_edges());
  for (const auto& e : g.edges()) w.push_back({e.u, e.v, 1.0});
  return gcn_normalize_sparse(g.num_nodes(), w);
}

void validate_perturbations(const Graph& g, const PerturbationSet& p) {
  std::set<Edge> seen;
  for (const auto& f : p.flips) {
    const auto pair = "(" + std::to_string(f.u) + ", " + std::to_string(f.v) + ")";
    if (f.u >= g.num_nodes() || f.v >= g.num_nodes()) throw InputError("flip " + pair + " out of range");
    if (f.u == f.v) throw InputError("flip " + pair + " is a self-loop");
    if (!seen.insert(Edge::of(f.u, f.v)).second) throw InputError("flip " + pair + " appears twice");
    const bool present = g.has_edge(f.u, f.v);
    if (f.op == FlipOp::add && present) throw InputError("flip adds existing edge " + pair);
    if (f.op == FlipOp::remove && !present) throw InputError("flip removes missing edge " + pair);
  }
}

Graph apply_perturbations(const Graph& g, const PerturbationSet& p) {
  validate_perturbations(g, p);
  std::set<Edge> removed;
  std::vector<Edge> edges;
  for (const auto& f : p.flips) {
    if (f.op == FlipOp::remove)
      removed.insert(Edge::of(f.u, f.v));
    else
      edges.push_back(Edge::of(f.u, f.v));
  }
  for (const auto& e : g.edges())
    if (!removed.contains(e)) edges.push_back(e);
  return Graph(g.num_nodes(), std::move(edges), g.node_ids());
}

std::size_t adjacency_l0_distance(const Graph& a, const Graph& b) {
  if (a.num_nodes() != b.num_nodes()) throw InputError("adjacency_l0_distance: node counts differ");
  std::vector<Edge> diff;
  std::set_symmetric_difference(a.edges().begin(), a.edges().end(), b.edges().begin(), b.edges().end(),
                                std::back_inserter(diff));
  return 2 * diff.size();
}

std::map<std::size_t, std::size_t> degree_distribution(const Graph& g) {
  std::map<std::size_t, std::size_t> hist;
  for (std::size_t i = 0; i < g.num_nodes(); ++i) ++hist[g.degree(static_cast<NodeId>(i))];
  return hist;
}

}  // namespace dga
