#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dga/attack.hpp"
#include "dga/eval.hpp"
#include "dga/io.hpp"
#include "dga/poison.hpp"

namespace dga {

/// Everything one CLI invocation can set. Field names follow the flags.
struct RunConfig {
  std::string dataset;
  std::string synth;  // "n,blocks,p_in,p_out"
  std::uint64_t data_seed = 0;

  std::string method = "foa";  // foa | fda | dice
  double budget_rate = 0.05;
  AttackConfig attack;
  std::size_t samples = 10;  // best-of repeats
  int best_of_epochs = 50;
  ScoreToProb score_to_prob = ScoreToProb::clamp;

  int runs = 10;
  DefenseConfig defense;
  std::string perturbations;

  std::uint64_t seed = 0;
  bool deterministic = false;
  std::string out = ".";
};

/// Loads --dataset or generates --synth, then applies LCC and the split.
Dataset load_dataset(const RunConfig& cfg);

struct PoisonOutcome {
  PerturbationSet flips;
  std::size_t budget = 0;
  std::optional<AttackResult> attack;
  std::vector<double> candidate_scores;
  std::vector<std::string> warnings;
};

/// DGA (attack loop + best-of sampling) or DICE at round(budget_rate * |E|) flips.
PoisonOutcome run_poisoning(const Dataset& d, const RunConfig& cfg);

/// Entry point of the `dga` tool. Exit codes: 0 ok, 1 input error, 2 runtime error.
int run_cli(const std::vector<std::string>& args);
int run_cli(int argc, char** argv);

}  // namespace dga
