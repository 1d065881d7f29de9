#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dga/gcn.hpp"
#include "dga/graph.hpp"

namespace dga {

struct DefenseConfig {
  enum class Kind { none, jaccard } kind = Kind::none;
  double jaccard_threshold = 0.01;
};

/// Victim defaults: same architecture as the surrogate, dropout 0.5.
TrainConfig default_victim_config();

struct EvalReport {
  std::string method = "clean";
  double budget_rate = 0.0;
  std::size_t budget = 0;
  int runs = 0;
  std::vector<double> accuracies;
  double mean = 0.0;
  double std = 0.0;
  /// False when fewer than two runs succeeded; std is then reported as 0.
  bool std_valid = false;
  std::string defense = "none";
  double jaccard_threshold = 0.0;
  std::vector<std::uint64_t> seeds;
  std::vector<std::uint64_t> failed_seeds;
  std::vector<std::string> warnings;

  bool operator==(const EvalReport&) const = default;
};

/// Trains `runs` victims (seeds base_seed .. base_seed + runs - 1) on the
/// optionally defended graph and reports test accuracy. Diverged runs are
/// recorded in failed_seeds and excluded.
EvalReport evaluate_victim(const Graph& poisoned, const Features& x, const LabelVector& labels, const Split& split,
                           int runs, std::uint64_t base_seed, const DefenseConfig& defense = {},
                           const TrainConfig& victim = default_victim_config());

struct EdgeClassStats {
  std::string name;  // kept | added | removed
  std::size_t count = 0;
  double mean_feature_cosine = 0.0;
  double mean_feature_jaccard = 0.0;
  double label_equal_fraction = 0.0;
  bool operator==(const EdgeClassStats&) const = default;
};

struct AttackStats {
  std::map<std::size_t, std::size_t> degree_clean;
  std::map<std::size_t, std::size_t> degree_poisoned;
  double ks_statistic = 0.0;
  std::vector<EdgeClassStats> classes;

  const EdgeClassStats* find(const std::string& name) const;
};

/// Two-sample Kolmogorov-Smirnov statistic between two degree histograms.
double ks_statistic(const std::map<std::size_t, std::size_t>& a, const std::map<std::size_t, std::size_t>& b);

double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Empty classes report NaN means and fractions.
AttackStats attack_statistics(const Graph& clean, const Graph& poisoned, const FeatureMatrix& features,
                              const LabelVector& labels);

/// Writes report.json, stats_degree.csv, stats_edges.csv and stats_summary.json into `dir`.
void export_report(const EvalReport& report, const AttackStats& stats, const std::string& dir);
void write_report_json(const EvalReport& report, const std::string& path);
EvalReport read_report_json(const std::string& path);
void write_stats(const AttackStats& stats, const std::string& dir);

}  // namespace dga
