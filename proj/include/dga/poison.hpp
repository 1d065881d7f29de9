#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dga/attack.hpp"
#include "dga/graph.hpp"

namespace dga {

/// S = (P_bar - A) * (1 - 2A) with P_bar = clip((P + P^T) / 2, 0, 1), P = exp(Q).
struct ScoreMatrix {
  Matrix s;
  Matrix p_bar;
};

ScoreMatrix difference_scores(const LogProbMatrix& q, const Graph& a_orig);

/// How scores become sampling weights.
enum class ScoreToProb { clamp, softmax };

/// Draws `delta` distinct upper-triangle pairs without replacement, with
/// renormalization after every draw, from weights max(S, 0) (or softmax(S)).
/// Pairs that are edges of a_orig become removals, the rest additions. When
/// fewer than `delta` pairs carry positive weight the draw falls back to the
/// deterministic top-delta by S and a warning is appended to `warnings`.
PerturbationSet sample_perturbations(const ScoreMatrix& s, const Graph& a_orig, std::size_t delta, std::uint64_t seed,
                                     ScoreToProb mode = ScoreToProb::clamp,
                                     std::vector<std::string>* warnings = nullptr);

/// Maps a candidate perturbation to an attack score (larger is a stronger attack).
using CandidateEvaluator = std::function<double(const PerturbationSet&)>;

struct BestOfSamples {
  PerturbationSet flips;
  double score = 0.0;
  std::size_t index = 0;
  std::vector<double> candidate_scores;
};

/// Candidate c is drawn with seed derive_seed(seed, c). Ties keep the first candidate.
BestOfSamples best_of_samples(const ScoreMatrix& s, const Graph& a_orig, std::size_t delta, std::size_t repeats,
                              const CandidateEvaluator& evaluator, std::uint64_t seed,
                              ScoreToProb mode = ScoreToProb::clamp, std::vector<std::string>* warnings = nullptr);

/// Evaluator that retrains a fresh surrogate on the poisoned graph and returns
/// its self-training loss against the clean-graph pseudo-labels.
CandidateEvaluator self_loss_evaluator(const Graph& g, const Features& x, const LabelVector& labels, const Split& split,
                                       const LabelVector& pseudo, TrainConfig retrain, bool self_includes_train = false);

/// DICE: each flip is a fair coin between removing a random same-label edge and
/// adding a random different-label non-edge; an exhausted pool defers to the other.
/// Nodes with a negative (missing) label take part in neither pool.
PerturbationSet dice_attack(const Graph& g, const LabelVector& labels, std::size_t delta, std::uint64_t seed);

/// round-half-up(rate * |E|), at least 1 when rate > 0.
std::size_t budget_from_rate(double rate, std::size_t num_edges);

}  // namespace dga
