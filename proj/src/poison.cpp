#include "dga/poison.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "dga/error.hpp"
#include "dga/random.hpp"

namespace dga {

namespace {

struct Candidate {
  double key;
  Edge pair;
};

// Descending by key, then ascending by pair so ties are reproducible.
bool key_order(const Candidate& a, const Candidate& b) {
  return a.key > b.key || (a.key == b.key && a.pair < b.pair);
}

PerturbationSet to_flips(const std::vector<Candidate>& picks, const Graph& a) {
  PerturbationSet p;
  p.flips.reserve(picks.size());
  for (const auto& c : picks)
    p.flips.push_back({c.pair.u, c.pair.v, a.has_edge(c.pair.u, c.pair.v) ? FlipOp::remove : FlipOp::add});
  return p;
}

}  // namespace

ScoreMatrix difference_scores(const LogProbMatrix& q, const Graph& a) {
  const std::size_t n = q.num_nodes();
  if (a.num_nodes() != n) throw InputError("difference_scores: Q and graph sizes differ");
  ScoreMatrix out{Matrix(n, n), Matrix(n, n)};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double p = std::clamp(0.5 * (std::exp(q.q(i, j)) + std::exp(q.q(j, i))), 0.0, 1.0);
      const double aij = a.has_edge(static_cast<NodeId>(i), static_cast<NodeId>(j)) ? 1.0 : 0.0;
      const double s = (p - aij) * (1.0 - 2.0 * aij);
      out.p_bar(i, j) = out.p_bar(j, i) = p;
      out.s(i, j) = out.s(j, i) = s;
    }
  }
  return out;
}

PerturbationSet sample_perturbations(const ScoreMatrix& s, const Graph& a, std::size_t delta, std::uint64_t seed,
                                     ScoreToProb mode, std::vector<std::string>* warnings) {
  const std::size_t n = s.s.rows();
  if (a.num_nodes() != n) throw InputError("sample_perturbations: score and graph sizes differ");
  const std::size_t pairs = n * (n - (n > 0 ? 1 : 0)) / 2;
  if (delta > pairs) throw InputError("sample_perturbations: budget exceeds the number of node pairs");
  if (delta == 0) return {};

  double max_s = -std::numeric_limits<double>::infinity();
  if (mode == ScoreToProb::softmax)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) max_s = std::max(max_s, s.s(i, j));

  // Efraimidis-Spirakis keys log(u)/w: the top-delta keys are distributed as
  // sequential categorical draws with renormalization.
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<Candidate> keyed;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double w = mode == ScoreToProb::clamp ? std::max(s.s(i, j), 0.0) : std::exp(s.s(i, j) - max_s);
      if (!(w > 0.0)) continue;
      double u = unif(rng);
      if (u <= 0.0) u = std::numeric_limits<double>::min();
      keyed.push_back({std::log(u) / w, Edge{static_cast<NodeId>(i), static_cast<NodeId>(j)}});
    }
  }

  if (keyed.size() < delta) {
    if (warnings)
      warnings->push_back("only " + std::to_string(keyed.size()) + " pairs have positive score for a budget of " +
                          std::to_string(delta) + "; using the deterministic top-" + std::to_string(delta) +
                          " by score");
    std::vector<Candidate> all;
    all.reserve(pairs);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        all.push_back({s.s(i, j), Edge{static_cast<NodeId>(i), static_cast<NodeId>(j)}});
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(delta), all.end(), key_order);
    all.resize(delta);
    return to_flips(all, a);
  }

  std::partial_sort(keyed.begin(), keyed.begin() + static_cast<std::ptrdiff_t>(delta), keyed.end(), key_order);
  keyed.resize(delta);
  return to_flips(keyed, a);
}

BestOfSamples best_of_samples(const ScoreMatrix& s, const Graph& a, std::size_t delta, std::size_t repeats,
                              const CandidateEvaluator& evaluator, std::uint64_t seed, ScoreToProb mode,
                              std::vector<std::string>* warnings) {
  if (repeats < 1) throw InputError("best_of_samples: repeats must be >= 1");
  BestOfSamples best;
  for (std::size_t c = 0; c < repeats; ++c) {
    auto flips = sample_perturbations(s, a, delta, derive_seed(seed, 0xca7d, c), mode, c == 0 ? warnings : nullptr);
    double score = 0.0;
    try {
      score = evaluator(flips);
    } catch (const std::exception& e) {
      std::string msg = "candidate " + std::to_string(c) + " evaluation failed: " + e.what() + "; scores so far:";
      for (double v : best.candidate_scores) msg += " " + std::to_string(v);
      throw RuntimeError(msg);
    }
    best.candidate_scores.push_back(score);
    if (c == 0 || score > best.score) {
      best.score = score;
      best.flips = std::move(flips);
      best.index = c;
    }
  }
  return best;
}

CandidateEvaluator self_loss_evaluator(const Graph& g, const Features& x, const LabelVector& labels, const Split& split,
                                       const LabelVector& pseudo, TrainConfig retrain, bool self_includes_train) {
  auto target = make_loss_target(LossKind::self_ce, labels, split, &pseudo, self_includes_train);
  return [=, &g, &x](const PerturbationSet& p) {
    const Graph poisoned = apply_perturbations(g, p);
    const CsrMatrix adj = gcn_normalize_sparse(poisoned);
    const auto params = train_gcn(adj, x, labels, split, retrain).params;
    return cross_entropy(forward(params, x, adj), target);
  };
}

PerturbationSet dice_attack(const Graph& g, const LabelVector& labels, std::size_t delta, std::uint64_t seed) {
  const std::size_t n = g.num_nodes();
  if (labels.size() != n) throw InputError("dice: label count does not match the graph");
  if (delta == 0) return {};

  std::vector<Edge> removable;
  for (const auto& e : g.edges())
    if (labels[e.u] >= 0 && labels[e.u] == labels[e.v]) removable.push_back(e);

  std::vector<std::size_t> class_size(static_cast<std::size_t>(std::max(labels.num_classes, 1)), 0);
  for (int l : labels.labels) {
    if (l >= labels.num_classes) throw InputError("dice: label " + std::to_string(l) + " out of range");
    if (l >= 0) ++class_size[static_cast<std::size_t>(l)];
  }
  std::size_t cross_pairs = 0;
  for (std::size_t a = 0; a < class_size.size(); ++a)
    for (std::size_t b = a + 1; b < class_size.size(); ++b) cross_pairs += class_size[a] * class_size[b];
  std::size_t cross_edges = 0;
  for (const auto& e : g.edges()) cross_edges += labels[e.u] >= 0 && labels[e.v] >= 0 && labels[e.u] != labels[e.v];
  std::size_t addable = cross_pairs - cross_edges;

  if (removable.size() + addable < delta)
    throw InputError("dice: budget exceeds the available same-label edges and different-label non-edges");

  std::mt19937_64 rng(seed);
  std::shuffle(removable.begin(), removable.end(), rng);
  std::size_t next_remove = 0;
  std::set<Edge> added;
  std::uniform_int_distribution<NodeId> node(0, static_cast<NodeId>(n - 1));
  std::bernoulli_distribution coin(0.5);

  PerturbationSet out;
  while (out.size() < delta) {
    const bool can_remove = next_remove < removable.size();
    const bool can_add = added.size() < addable;
    const bool remove = can_remove && (!can_add || coin(rng));
    if (remove) {
      const auto e = removable[next_remove++];
      out.flips.push_back({e.u, e.v, FlipOp::remove});
      continue;
    }
    // Rejection sampling gives a uniform draw over the remaining addable pairs.
    while (true) {
      const NodeId a = node(rng), b = node(rng);
      if (a == b || labels[a] < 0 || labels[b] < 0 || labels[a] == labels[b] || g.has_edge(a, b)) continue;
      const auto e = Edge::of(a, b);
      if (!added.insert(e).second) continue;
      out.flips.push_back({e.u, e.v, FlipOp::add});
      break;
    }
  }
  return out;
}

std::size_t budget_from_rate(double rate, std::size_t num_edges) {
  if (rate < 0.0) throw InputError("budget rate must be non-negative");
  if (rate == 0.0) return 0;
  const auto d = static_cast<std::size_t>(std::floor(rate * static_cast<double>(num_edges) + 0.5));
  return std::max<std::size_t>(d, 1);
}

}  // namespace dga
