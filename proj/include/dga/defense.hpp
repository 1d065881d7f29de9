#pragma once

#include "dga/graph.hpp"

namespace dga {

/// Jaccard similarity of the supports (entries > 0) of two feature rows.
/// Two empty supports give 0.
double feature_jaccard(std::span<const double> a, std::span<const double> b);

/// True when the features are an identity matrix, i.e. the dataset has no real features.
bool is_identity_features(const FeatureMatrix& x);

/// GCN-Jaccard preprocessing: drops every edge whose endpoint features have
/// Jaccard similarity below `threshold`. Throws InputError for featureless
/// (identity) features or a threshold outside [0, 1].
Graph jaccard_filter(const Graph& g, const FeatureMatrix& features, double threshold);

}  // namespace dga
