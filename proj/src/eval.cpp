#include "dga/eval.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>

#include <json.hpp>

#include "dga/defense.hpp"
#include "dga/error.hpp"
#include "dga/io.hpp"

namespace dga {

TrainConfig default_victim_config() {
  TrainConfig c;
  c.dropout = 0.5;
  return c;
}

EvalReport evaluate_victim(const Graph& poisoned, const Features& x, const LabelVector& labels, const Split& split,
                           int runs, std::uint64_t base_seed, const DefenseConfig& defense, const TrainConfig& victim) {
  if (runs < 1) throw InputError("evaluate: runs must be >= 1");
  EvalReport r;
  r.runs = runs;
  Graph g = poisoned;
  if (defense.kind == DefenseConfig::Kind::jaccard) {
    g = jaccard_filter(poisoned, x.dense(), defense.jaccard_threshold);
    r.defense = "jaccard";
    r.jaccard_threshold = defense.jaccard_threshold;
  }
  const CsrMatrix adj = gcn_normalize_sparse(g);

  for (int k = 0; k < runs; ++k) {
    const std::uint64_t seed = base_seed + static_cast<std::uint64_t>(k);
    r.seeds.push_back(seed);
    TrainConfig cfg = victim;
    cfg.seed = seed;
    try {
      const auto params = train_gcn(adj, x, labels, split, cfg).params;
      r.accuracies.push_back(accuracy(forward(params, x, adj), labels, split.test));
    } catch (const RuntimeError& e) {
      r.failed_seeds.push_back(seed);
      r.warnings.push_back("run with seed " + std::to_string(seed) + " excluded: " + e.what());
    }
  }
  if (r.accuracies.empty()) throw RuntimeError("evaluate: every victim run diverged");

  const double n = static_cast<double>(r.accuracies.size());
  for (double a : r.accuracies) r.mean += a;
  r.mean /= n;
  r.std_valid = r.accuracies.size() >= 2;
  if (r.std_valid) {
    double ss = 0.0;
    for (double a : r.accuracies) ss += (a - r.mean) * (a - r.mean);
    r.std = std::sqrt(ss / n);
  } else {
    r.warnings.push_back("std reported as 0: fewer than two successful runs");
  }
  return r;
}

const EdgeClassStats* AttackStats::find(const std::string& name) const {
  for (const auto& c : classes)
    if (c.name == name) return &c;
  return nullptr;
}

double ks_statistic(const std::map<std::size_t, std::size_t>& a, const std::map<std::size_t, std::size_t>& b) {
  std::size_t na = 0, nb = 0;
  for (const auto& [d, c] : a) na += c;
  for (const auto& [d, c] : b) nb += c;
  if (na == 0 || nb == 0) return 0.0;
  std::set<std::size_t> support;
  for (const auto& [d, c] : a) support.insert(d);
  for (const auto& [d, c] : b) support.insert(d);
  double ca = 0.0, cb = 0.0, ks = 0.0;
  for (auto d : support) {
    if (auto it = a.find(d); it != a.end()) ca += static_cast<double>(it->second);
    if (auto it = b.find(d); it != b.end()) cb += static_cast<double>(it->second);
    ks = std::max(ks, std::abs(ca / static_cast<double>(na) - cb / static_cast<double>(nb)));
  }
  return ks;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    ab += a[k] * b[k];
    aa += a[k] * a[k];
    bb += b[k] * b[k];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return ab / std::sqrt(aa * bb);
}

AttackStats attack_statistics(const Graph& clean, const Graph& poisoned, const FeatureMatrix& x,
                              const LabelVector& labels) {
  if (clean.num_nodes() != poisoned.num_nodes()) throw InputError("stats: graphs have different node sets");
  AttackStats s;
  s.degree_clean = degree_distribution(clean);
  s.degree_poisoned = degree_distribution(poisoned);
  s.ks_statistic = ks_statistic(s.degree_clean, s.degree_poisoned);

  std::vector<Edge> kept, added, removed;
  const auto ce = clean.edges(), pe = poisoned.edges();
  std::set_intersection(ce.begin(), ce.end(), pe.begin(), pe.end(), std::back_inserter(kept));
  std::set_difference(pe.begin(), pe.end(), ce.begin(), ce.end(), std::back_inserter(added));
  std::set_difference(ce.begin(), ce.end(), pe.begin(), pe.end(), std::back_inserter(removed));

  auto summarize = [&](const std::string& name, const std::vector<Edge>& edges) {
    EdgeClassStats c;
    c.name = name;
    c.count = edges.size();
    if (edges.empty()) {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      c.mean_feature_cosine = c.mean_feature_jaccard = c.label_equal_fraction = nan;
      return c;
    }
    double cos = 0.0, jac = 0.0, eq = 0.0;
    for (const auto& e : edges) {
      cos += cosine_similarity(x.row(e.u), x.row(e.v));
      jac += feature_jaccard(x.row(e.u), x.row(e.v));
      eq += labels[e.u] == labels[e.v] ? 1.0 : 0.0;
    }
    const double n = static_cast<double>(edges.size());
    c.mean_feature_cosine = cos / n;
    c.mean_feature_jaccard = jac / n;
    c.label_equal_fraction = eq / n;
    return c;
  };
  s.classes = {summarize("kept", kept), summarize("added", added), summarize("removed", removed)};
  return s;
}

void write_report_json(const EvalReport& r, const std::string& path) {
  nlohmann::json j{{"method", r.method},
                   {"budget_rate", r.budget_rate},
                   {"budget", r.budget},
                   {"runs", r.runs},
                   {"accuracies", r.accuracies},
                   {"mean", r.mean},
                   {"std", r.std},
                   {"std_valid", r.std_valid},
                   {"defense", r.defense},
                   {"jaccard_threshold", r.jaccard_threshold},
                   {"seeds", r.seeds},
                   {"failed_seeds", r.failed_seeds},
                   {"warnings", r.warnings}};
  std::ofstream out(path);
  if (!out) throw RuntimeError("cannot write " + path);
  out << j.dump(2) << '\n';
  if (!out) throw RuntimeError("write failed: " + path);
}

EvalReport read_report_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  try {
    nlohmann::json j;
    in >> j;
    EvalReport r;
    r.method = j.at("method").get<std::string>();
    r.budget_rate = j.at("budget_rate").get<double>();
    r.budget = j.at("budget").get<std::size_t>();
    r.runs = j.at("runs").get<int>();
    r.accuracies = j.at("accuracies").get<std::vector<double>>();
    r.mean = j.at("mean").get<double>();
    r.std = j.at("std").get<double>();
    r.std_valid = j.at("std_valid").get<bool>();
    r.defense = j.at("defense").get<std::string>();
    r.jaccard_threshold = j.at("jaccard_threshold").get<double>();
    r.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    r.failed_seeds = j.at("failed_seeds").get<std::vector<std::uint64_t>>();
    r.warnings = j.at("warnings").get<std::vector<std::string>>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path + ": " + e.what());
  }
}

void write_stats(const AttackStats& s, const std::string& dir) {
  namespace fs = std::filesystem;
  const auto deg_path = (fs::path(dir) / "stats_degree.csv").string();
  std::ofstream deg(deg_path);
  if (!deg) throw RuntimeError("cannot write " + deg_path);
  deg << "degree,count_clean,count_poisoned\n";
  std::set<std::size_t> support;
  for (const auto& [d, c] : s.degree_clean) support.insert(d);
  for (const auto& [d, c] : s.degree_poisoned) support.insert(d);
  for (auto d : support) {
    auto get = [d](const auto& m) { auto it = m.find(d); return it == m.end() ? std::size_t{0} : it->second; };
    deg << d << ',' << get(s.degree_clean) << ',' << get(s.degree_poisoned) << '\n';
  }

  const auto edge_path = (fs::path(dir) / "stats_edges.csv").string();
  std::ofstream edges(edge_path);
  if (!edges) throw RuntimeError("cannot write " + edge_path);
  edges << "class,count,mean_feature_cosine,label_equal_fraction\n";
  for (const auto& c : s.classes)
    edges << c.name << ',' << c.count << ',' << format_double(c.mean_feature_cosine) << ','
          << format_double(c.label_equal_fraction) << '\n';

  nlohmann::json summary{{"ks_statistic", s.ks_statistic}};
  for (const auto& c : s.classes) {
    auto num = [](double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); };
    summary["classes"][c.name] = {{"count", c.count},
                                  {"mean_feature_cosine", num(c.mean_feature_cosine)},
                                  {"mean_feature_jaccard", num(c.mean_feature_jaccard)},
                                  {"label_equal_fraction", num(c.label_equal_fraction)}};
  }
  const auto sum_path = (fs::path(dir) / "stats_summary.json").string();
  std::ofstream sum(sum_path);
  if (!sum) throw RuntimeError("cannot write " + sum_path);
  sum << summary.dump(2) << '\n';
}

void export_report(const EvalReport& report, const AttackStats& stats, const std::string& dir) {
  std::filesystem::create_directories(dir);
  write_report_json(report, (std::filesystem::path(dir) / "report.json").string());
  write_stats(stats, dir);
}

}  // namespace dga
