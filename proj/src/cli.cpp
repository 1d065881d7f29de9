#include "dga/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "dga/defense.hpp"
#include "dga/error.hpp"
#include "dga/random.hpp"

namespace dga {

namespace fs = std::filesystem;

namespace {

struct SbmSpec {
  std::size_t n = 0, blocks = 0;
  double p_in = 0.0, p_out = 0.0;
};

SbmSpec parse_sbm_spec(const std::string& s) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string p;
  while (std::getline(ss, p, ',')) parts.push_back(p);
  if (parts.size() != 4) throw InputError("--synth expects n,blocks,p_in,p_out");
  try {
    return {std::stoul(parts[0]), std::stoul(parts[1]), std::stod(parts[2]), std::stod(parts[3])};
  } catch (const std::exception&) {
    throw InputError("--synth: cannot parse '" + s + "'");
  }
}

nlohmann::json dataset_summary(const Dataset& d) {
  const double n = static_cast<double>(d.graph.num_nodes());
  return {{"nodes", d.graph.num_nodes()},
          {"edges", d.graph.num_edges()},
          {"classes", d.labels.num_classes},
          {"features", d.identity_features ? 0 : d.features.cols()},
          {"identity_features", d.identity_features},
          {"edges_per_node", n > 0 ? static_cast<double>(d.graph.num_edges()) / n : 0.0},
          {"train", d.split.train.size()},
          {"val", d.split.val.size()},
          {"test", d.split.test.size()}};
}

std::string path_in(const std::string& dir, const char* name) { return (fs::path(dir) / name).string(); }

// Flat JSON config: keys are flag names without the leading dashes. Flags given
// on the command line win.
std::vector<std::string> merge_config(const std::vector<std::string>& args) {
  std::string config;
  for (std::size_t i = 0; i + 1 < args.size(); ++i)
    if (args[i] == "--config") config = args[i + 1];
  for (const auto& a : args)
    if (a.rfind("--config=", 0) == 0) config = a.substr(9);
  if (config.empty()) return args;

  std::ifstream in(config);
  if (!in) throw InputError("cannot open config " + config);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("config " + config + ": " + e.what());
  }
  if (!j.is_object()) throw InputError("config " + config + ": expected a flat JSON object");

  auto given = [&](const std::string& flag) {
    for (const auto& a : args)
      if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
    return false;
  };
  std::vector<std::string> out = args;
  for (const auto& [key, value] : j.items()) {
    const std::string flag = "--" + key;
    if (key == "config" || given(flag)) continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) out.push_back(flag);
    } else if (value.is_string()) {
      out.push_back(flag);
      out.push_back(value.get<std::string>());
    } else if (value.is_number_integer() || value.is_number_unsigned()) {
      out.push_back(flag);
      out.push_back(value.dump());
    } else if (value.is_number_float()) {
      out.push_back(flag);
      out.push_back(format_double(value.get<double>()));
    } else {
      throw InputError("config " + config + ": unsupported value for '" + key + "'");
    }
  }
  return out;
}

void add_options(CLI::App* app, RunConfig& c, std::string& method, std::string& loss, std::string& defense,
                 std::string& score_mode, std::optional<double>& delta, std::string& config) {
  app->add_option("--config", config, "Flat JSON file of flag values (command line wins)");
  app->add_option("--dataset", c.dataset, "Dataset directory (edges.csv, labels.csv, ...)");
  app->add_option("--synth", c.synth, "Synthetic SBM: n,blocks,p_in,p_out");
  app->add_option("--data-seed", c.data_seed, "Seed for SBM generation and split generation");
  app->add_option("--method", method, "foa | fda | dice")->check(CLI::IsMember({"foa", "fda", "dice"}));
  app->add_option("--budget-rate", c.budget_rate, "Perturbation budget as a fraction of |E|");
  app->add_option("--iters", c.attack.iters, "Attack iterations T");
  app->add_option("--eta", c.attack.eta, "Step size on Q");
  app->add_option("--alpha", c.attack.alpha, "Single-step adaptation step size");
  app->add_option("--delta", delta, "FDA probe size (default: 1e-2 / ||grad||)");
  app->add_option("--gumbel-k", c.attack.gumbel_k, "Gumbel top-k per node (0: round(average degree))");
  app->add_option("--gumbel-tau", c.attack.gumbel_tau, "Gumbel temperature");
  app->add_option("--momentum", c.attack.momentum, "Momentum on the Q update");
  app->add_option("--eps", c.attack.eps, "Q0 = log(A + eps)");
  app->add_option("--q-max", c.attack.q_max, "Upper bound on Q after each update");
  app->add_option("--explore-non-edges", c.attack.explore_non_edges, "Draw Gumbel picks from non-edges only (1) or from every pair (0)");
  app->add_option("--loss", loss, "Attack loss: self | train")->check(CLI::IsMember({"self", "train"}));
  app->add_flag("--self-loss-includes-train", c.attack.self_loss_includes_train,
                "Average the self-training loss over all nodes");
  app->add_option("--hidden", c.attack.surrogate.hidden, "Hidden units of the GCNs");
  app->add_option("--surrogate-epochs", c.attack.surrogate.epochs, "Surrogate training epochs");
  app->add_option("--samples", c.samples, "Best-of repeats of the poison sampling");
  app->add_option("--best-of-epochs", c.best_of_epochs, "Retraining epochs when scoring a candidate");
  app->add_option("--score-to-prob", score_mode, "clamp | softmax")->check(CLI::IsMember({"clamp", "softmax"}));
  app->add_option("--runs", c.runs, "Victim training runs");
  app->add_option("--defense", defense, "none | jaccard")->check(CLI::IsMember({"none", "jaccard"}));
  app->add_option("--jaccard-threshold", c.defense.jaccard_threshold, "GCN-Jaccard threshold");
  app->add_option("--perturbations", c.perturbations, "perturbations.csv to apply (evaluate, stats)");
  app->add_option("--seed", c.seed, "Seed for the attack, sampling and victims");
  app->add_flag("--deterministic", c.deterministic, "Run every kernel sequentially");
  app->add_option("--out", c.out, "Output directory");
}

void finish_config(RunConfig& c, const std::string& method, const std::string& loss, const std::string& defense,
                   const std::string& score_mode, const std::optional<double>& delta) {
  c.method = method;
  c.attack.mode = method == "fda" ? HyperGradMode::fda : HyperGradMode::foa;
  c.attack.loss = loss == "train" ? LossKind::train_ce : LossKind::self_ce;
  c.attack.delta = delta;
  c.defense.kind = defense == "jaccard" ? DefenseConfig::Kind::jaccard : DefenseConfig::Kind::none;
  c.score_to_prob = score_mode == "softmax" ? ScoreToProb::softmax : ScoreToProb::clamp;
  c.attack.seed = c.seed;
  c.attack.surrogate.seed = c.seed;
  if (!(c.budget_rate >= 0.0 && c.budget_rate < 1.0)) throw InputError("--budget-rate must lie in [0, 1)");
  if (c.samples < 1) throw InputError("--samples must be >= 1");
}

PerturbationSet load_flips(const RunConfig& c, const Dataset& d) {
  if (c.perturbations.empty()) return {};
  auto p = read_perturbations_csv(c.perturbations);
  validate_perturbations(d.graph, p);
  return p;
}

int cmd_synth(const RunConfig& c) {
  if (c.synth.empty()) throw InputError("synth requires --synth n,blocks,p_in,p_out");
  const Dataset d = load_dataset(c);
  write_dataset(c.out, d);
  std::cout << dataset_summary(d).dump(2) << '\n';
  return 0;
}

int cmd_ingest(const RunConfig& c) {
  if (c.dataset.empty()) throw InputError("ingest requires --dataset");
  const Dataset d = load_dataset(c);
  write_dataset(c.out, d);
  std::cout << dataset_summary(d).dump(2) << '\n';
  return 0;
}

int cmd_attack(const RunConfig& c) {
  const Dataset d = load_dataset(c);
  const auto outcome = run_poisoning(d, c);
  fs::create_directories(c.out);
  write_perturbations_csv(path_in(c.out, "perturbations.csv"), outcome.flips);
  write_edges_csv(path_in(c.out, "poisoned_edges.csv"), apply_perturbations(d.graph, outcome.flips));
  nlohmann::json summary{{"method", c.method},
                         {"budget_rate", c.budget_rate},
                         {"budget", outcome.budget},
                         {"flips", outcome.flips.size()},
                         {"candidate_scores", outcome.candidate_scores},
                         {"warnings", outcome.warnings}};
  if (outcome.attack) {
    write_qmatrix(path_in(c.out, "qmatrix.bin"), outcome.attack->q.q);
    write_diagnostics_csv(path_in(c.out, "diagnostics.csv"), outcome.attack->diagnostics);
    summary["avg_err"] = outcome.attack->diagnostics.avg_err();
  }
  std::ofstream(path_in(c.out, "attack_summary.json")) << summary.dump(2) << '\n';
  for (const auto& w : outcome.warnings) std::cerr << "warning: " << w << '\n';
  std::cout << summary.dump(2) << '\n';
  return 0;
}

int cmd_evaluate(const RunConfig& c) {
  const Dataset d = load_dataset(c);
  if (c.defense.kind == DefenseConfig::Kind::jaccard && d.identity_features)
    throw InputError("--defense jaccard needs node features; this dataset has none");
  const auto flips = load_flips(c, d);
  const Graph poisoned = apply_perturbations(d.graph, flips);
  EvalReport r = evaluate_victim(poisoned, Features(d.features), d.labels, d.split, c.runs, c.seed, c.defense);
  r.method = c.perturbations.empty() ? "clean" : c.method;
  r.budget_rate = c.perturbations.empty() ? 0.0 : c.budget_rate;
  r.budget = flips.size();
  if (!c.perturbations.empty()) {
    const auto expected = budget_from_rate(c.budget_rate, d.graph.num_edges());
    if (expected != flips.size())
      r.warnings.push_back("perturbation count " + std::to_string(flips.size()) + " differs from round(" +
                           format_double(c.budget_rate) + " * |E|) = " + std::to_string(expected));
  }
  fs::create_directories(c.out);
  write_report_json(r, path_in(c.out, "report.json"));
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
  std::cout << "mean test accuracy " << format_double(r.mean) << " (std " << format_double(r.std) << ", "
            << r.accuracies.size() << " runs)\n";
  return 0;
}

int cmd_stats(const RunConfig& c) {
  const Dataset d = load_dataset(c);
  const auto flips = load_flips(c, d);
  const auto stats = attack_statistics(d.graph, apply_perturbations(d.graph, flips), d.features, d.labels);
  fs::create_directories(c.out);
  write_stats(stats, c.out);
  std::cout << "KS statistic " << format_double(stats.ks_statistic) << '\n';
  return 0;
}

}  // namespace

Dataset load_dataset(const RunConfig& c) {
  if (!c.synth.empty() && !c.dataset.empty()) throw InputError("--dataset and --synth are mutually exclusive");
  if (!c.synth.empty()) {
    const auto shape = parse_sbm_spec(c.synth);
    auto sbm = generate_sbm(shape.n, shape.blocks, shape.p_in, shape.p_out, c.data_seed);
    return finalize_dataset(sbm.graph, sbm.features, sbm.labels, std::nullopt, false, c.data_seed);
  }
  if (c.dataset.empty()) throw InputError("one of --dataset or --synth is required");
  return ingest(c.dataset, c.data_seed);
}

PoisonOutcome run_poisoning(const Dataset& d, const RunConfig& c) {
  PoisonOutcome out;
  out.budget = budget_from_rate(c.budget_rate, d.graph.num_edges());
  if (c.method == "dice") {
    out.flips = dice_attack(d.graph, d.labels, out.budget, derive_seed(c.seed, 0xd1ce));
    return out;
  }
  if (c.method != "foa" && c.method != "fda") throw InputError("unknown method '" + c.method + "'");
  AttackConfig cfg = c.attack;
  cfg.mode = c.method == "fda" ? HyperGradMode::fda : HyperGradMode::foa;
  cfg.validate();

  const Features x(d.features);
  const AttackSetup setup = prepare_attack(d.graph, x, d.labels, d.split, cfg);
  out.attack = run_attack(d.graph, x, setup, cfg);
  if (out.budget == 0) return out;

  const ScoreMatrix scores = difference_scores(out.attack->q, d.graph);
  TrainConfig retrain = cfg.surrogate;
  retrain.epochs = c.best_of_epochs;
  const auto evaluator =
      self_loss_evaluator(d.graph, x, d.labels, d.split, setup.pseudo, retrain, cfg.self_loss_includes_train);
  auto best = best_of_samples(scores, d.graph, out.budget, c.samples, evaluator, derive_seed(c.seed, 0x5a3b),
                              c.score_to_prob, &out.warnings);
  out.flips = std::move(best.flips);
  out.candidate_scores = std::move(best.candidate_scores);
  return out;
}

int run_cli(const std::vector<std::string>& raw_args) {
  CLI::App app{"Differentiable graph structure poisoning toolkit", "dga"};
  app.require_subcommand(1);
  RunConfig cfg;
  std::string method = "foa", loss = "self", defense = "none", score_mode = "clamp", config;
  std::optional<double> delta;

  std::map<std::string, std::function<int(const RunConfig&)>> actions{
      {"synth", cmd_synth}, {"ingest", cmd_ingest}, {"attack", cmd_attack},
      {"evaluate", cmd_evaluate}, {"stats", cmd_stats}};
  const std::map<std::string, std::string> help{
      {"synth", "Generate an SBM dataset directory"},
      {"ingest", "Load a dataset directory, keep its LCC, and write it back normalized"},
      {"attack", "Run DGA (foa/fda) or DICE and write the perturbations"},
      {"evaluate", "Train victim GCNs on a (poisoned) graph and write report.json"},
      {"stats", "Degree, feature-similarity and label-equality statistics of a perturbation"}};
  for (const auto& [name, fn] : actions)
    add_options(app.add_subcommand(name, help.at(name)), cfg, method, loss, defense, score_mode, delta, config);

  try {
    std::vector<std::string> args = merge_config(raw_args);
    std::vector<char*> argv;
    std::string prog = "dga";
    argv.push_back(prog.data());
    for (auto& a : args) argv.push_back(a.data());
    app.parse(static_cast<int>(argv.size()), argv.data());

    finish_config(cfg, method, loss, defense, score_mode, delta);
    set_exec(cfg.deterministic ? Exec::serial : Exec::parallel);
    for (const auto& [name, fn] : actions)
      if (app.got_subcommand(name)) return fn(cfg);
    return 1;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const RuntimeError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args);
}

}  // namespace dga
