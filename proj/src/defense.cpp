#include "dga/defense.hpp"

#include <vector>

#include "dga/error.hpp"

namespace dga {

double feature_jaccard(std::span<const double> a, std::span<const double> b) {
  std::size_t both = 0, either = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const bool x = a[k] > 0.0, y = b[k] > 0.0;
    both += x && y;
    either += x || y;
  }
  return either == 0 ? 0.0 : static_cast<double>(both) / static_cast<double>(either);
}

bool is_identity_features(const FeatureMatrix& x) {
  if (x.rows() != x.cols() || x.rows() == 0) return false;
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j)
      if (x(i, j) != (i == j ? 1.0 : 0.0)) return false;
  return true;
}

Graph jaccard_filter(const Graph& g, const FeatureMatrix& features, double threshold) {
  if (threshold < 0.0 || threshold > 1.0) throw InputError("jaccard: threshold must lie in [0, 1]");
  if (features.cols() == 0 || is_identity_features(features))
    throw InputError("jaccard: the dataset has no node features to compare");
  if (features.rows() != g.num_nodes()) throw InputError("jaccard: feature rows do not match the graph");

  std::vector<Edge> kept;
  kept.reserve(g.num_edges());
  for (const auto& e : g.edges())
    if (feature_jaccard(features.row(e.u), features.row(e.v)) >= threshold) kept.push_back(e);
  return Graph(g.num_nodes(), std::move(kept), g.node_ids());
}

}  // namespace dga
