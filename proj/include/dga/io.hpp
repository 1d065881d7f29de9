#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dga/attack.hpp"
#include "dga/graph.hpp"

namespace dga {

/// Shortest decimal that parses back to the same double.
std::string format_double(double v);

// Plain-text dataset files. Readers throw InputError naming the file and line.
std::vector<std::pair<std::size_t, std::size_t>> read_edges_csv(const std::string& path);
void write_edges_csv(const std::string& path, const Graph& g);
FeatureMatrix read_features_csv(const std::string& path);
/// `node,dim,value` lines; num_nodes / dims of 0 are inferred from the largest index.
FeatureMatrix read_features_triplet(const std::string& path, std::size_t num_nodes = 0, std::size_t dims = 0);
void write_features_csv(const std::string& path, const FeatureMatrix& x);
/// `node,label` lines. Nodes without a line get label -1.
LabelVector read_labels_csv(const std::string& path, std::size_t num_nodes = 0);
void write_labels_csv(const std::string& path, const LabelVector& labels);
Split read_split_json(const std::string& path);
void write_split_json(const std::string& path, const Split& split);

struct Dataset {
  Graph graph;
  FeatureMatrix features;
  LabelVector labels;
  Split split;
  /// Set when the dataset came without features and identity features were substituted.
  bool identity_features = false;
};

/// Per-class 10/10/80-style split: each class contributes round(frac * size)
/// train and val nodes, the rest go to test.
Split stratified_split(const LabelVector& labels, std::uint64_t seed, double train_frac = 0.1, double val_frac = 0.1);

/// Restricts to the largest connected component and attaches `split`
/// (re-indexed; nodes outside the component dropped) or a generated split.
Dataset finalize_dataset(const Graph& g, const FeatureMatrix& x, const LabelVector& labels,
                         const std::optional<Split>& split, bool identity_features, std::uint64_t split_seed);

/// Reads edges.csv, labels.csv, and optionally features.csv / features.triplet
/// and split.json from `dir`.
Dataset ingest(const std::string& dir, std::uint64_t split_seed);
void write_dataset(const std::string& dir, const Dataset& d);

struct SbmGraph {
  Graph graph;
  FeatureMatrix features;
  LabelVector labels;
};

/// Blocks of near-equal size; pairs join with p_in inside a block and p_out
/// across. Features are the one-hot block plus N(0, 0.1^2) noise.
SbmGraph generate_sbm(std::size_t n, std::size_t blocks, double p_in, double p_out, std::uint64_t seed);

void write_perturbations_csv(const std::string& path, const PerturbationSet& p);
PerturbationSet read_perturbations_csv(const std::string& path);

void write_diagnostics_csv(const std::string& path, const AttackDiagnostics& d);
AttackDiagnostics read_diagnostics_csv(const std::string& path);

/// 8-byte little-endian N followed by N*N little-endian doubles, row-major.
void write_qmatrix(const std::string& path, const Matrix& q);
Matrix read_qmatrix(const std::string& path);

}  // namespace dga
