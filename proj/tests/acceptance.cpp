// Acceptance harness: one PASS/FAIL/SKIP line per criterion.
//
// Exit status is 0 when every criterion ran to completion, whatever its verdict,
// so a red criterion stays visible without breaking the build. Pass --strict to
// turn any FAIL into exit status 1. Set DGA_CORA_DIR / DGA_CITESEER_DIR to
// dataset directories (the `ingest` layout) to enable the real-data checks.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dga/cli.hpp"
#include "dga/random.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace dga;
using testing_support::dense_problem;
using testing_support::random_instance;
using testing_support::rel_err;
using testing_support::to_real;

namespace {

enum class Verdict { pass, fail, skip };

struct Outcome {
  Verdict verdict = Verdict::fail;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os << std::setprecision(prec) << v;
  return os.str();
}

Outcome verdict(bool ok, std::string detail) { return {ok ? Verdict::pass : Verdict::fail, std::move(detail)}; }

// ---------------------------------------------------------------------------

Outcome gradient_correctness() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::size_t checked = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const std::size_t n = 4 + s % 5;
    const auto in = random_instance(1000 + s, n, 2, 3, 2, s % 2 == 1);
    const auto p = dense_problem(in);
    const auto theta = oracle::flatten(in.params);
    const auto q = to_real(in.relaxed.q);
    const auto got = loss_and_grads(in.params, in.x, in.relaxed, in.target, true);
    std::vector<double> analytic(got.params.d_w1.values());
    analytic.insert(analytic.end(), got.params.d_w2.values().begin(), got.params.d_w2.values().end());
    for (std::size_t k = 0; k < theta.size(); ++k) {
      const auto num = oracle::central_diff([&](const auto& t) { return p.loss(t, q); }, theta, k, 1e-4L);
      worst = std::max(worst, rel_err(analytic[k], static_cast<double>(num)));
      ++checked;
    }
    for (std::size_t k = 0; k < q.size(); ++k) {
      const auto num = oracle::central_diff([&](const auto& qq) { return p.loss(theta, qq); }, q, k, 1e-4L);
      worst = std::max(worst, rel_err(got.d_q[k], static_cast<double>(num)));
      ++checked;
    }
  }
  const double secs = seconds_since(t0);
  return verdict(worst < 1e-4 && secs < 10.0, "20 instances, " + std::to_string(checked) +
                                                  " partials, worst relative error " + fmt(worst, 3) + ", " +
                                                  fmt(secs, 3) + " s");
}

// ---------------------------------------------------------------------------

Outcome foa_fda_consistency() {
  bool identical = true;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto in = random_instance(2000 + s, 4 + s % 5, 2, 3, 2, true);
    const auto train = make_loss_target(LossKind::train_ce, in.labels, in.split);
    const auto hat = single_step_adapt(in.params, in.relaxed, 1e-2, in.x, train);
    identical &= hyper_gradient_foa(hat, in.relaxed, in.x, in.target) ==
                 hyper_gradient_fda(in.params, hat, in.relaxed, 0.0, std::nullopt, in.x, train, in.target);
  }

  // Mixed term against the nested-difference oracle at two probe sizes.
  const double d1 = 2e-2, d2 = 1e-2;
  std::vector<double> ratios;
  double worst_err = 0.0;
  for (std::uint64_t s = 0; ratios.size() < 5 && s < 200; ++s) {
    const auto in = random_instance(3000 + s, 4, 2, 3, 2, true);
    const auto train = make_loss_target(LossKind::train_ce, in.labels, in.split);
    ParamGrad dir = loss_and_grads(in.params, in.x, in.relaxed, in.target, false).params;
    double norm = 0.0;
    for (double v : dir.d_w1.values()) norm += v * v;
    for (double v : dir.d_w2.values()) norm += v * v;
    norm = std::sqrt(norm);
    if (norm < 1e-6) continue;
    for (auto& v : dir.d_w1.values()) v /= norm;
    for (auto& v : dir.d_w2.values()) v /= norm;

    auto p = dense_problem(in);
    p.labels = train.labels;
    p.mask = train.mask;
    const auto theta = oracle::flatten(in.params);
    std::vector<oracle::Real> v;
    for (double x : dir.d_w1.values()) v.push_back(x);
    for (double x : dir.d_w2.values()) v.push_back(x);
    const auto q = to_real(in.relaxed.q);
    if (!oracle::relu_pattern_stable(p, theta, v, q, 2.5L * d1)) continue;

    std::vector<double> ref(q.size());
    double scale = 0.0;
    for (std::size_t k = 0; k < q.size(); ++k) {
      ref[k] = static_cast<double>(oracle::mixed_second_difference(p, theta, v, q, k, 1e-4L, 1e-2L));
      scale = std::max(scale, std::abs(ref[k]));
    }
    if (scale < 1e-6) continue;
    auto err = [&](double delta) {
      const auto t = fda_mixed_term(in.params, dir, delta, in.relaxed, in.x, train);
      double e = 0.0;
      for (std::size_t k = 0; k < t.size(); ++k) e = std::max(e, std::abs(t[k] - ref[k]));
      return e;
    };
    const double e1 = err(d1), e2 = err(d2);
    worst_err = std::max(worst_err, e1 / scale);
    ratios.push_back(e1 / e2);
  }
  bool ratios_ok = ratios.size() == 5;
  std::string listed;
  for (double r : ratios) {
    ratios_ok &= r >= 3.0 && r <= 5.0;
    listed += (listed.empty() ? "" : " ") + fmt(r, 3);
  }
  return verdict(identical && ratios_ok,
                 std::string("alpha=0 identical on 20 instances: ") + (identical ? "yes" : "no") +
                     "; N=4 error ratio e(" + fmt(d1) + ")/e(" + fmt(d2) + ") = [" + listed +
                     "] (want 3..5), worst relative error " + fmt(worst_err, 3));
}

// ---------------------------------------------------------------------------

Outcome sampler_fidelity() {
  const std::size_t n = 6, draws = 100000;
  std::mt19937_64 rng(4);
  LogProbMatrix q;
  q.log_eps = std::log(1e-8);
  q.q = Matrix(n, n, q.log_eps);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) q.q(i, j) = q.q(j, i) = nd(rng);

  Matrix freq(n, n);
  for (std::size_t t = 0; t < draws; ++t) {
    const auto s = gumbel_top_k_sample(q, 1, 1.0, derive_seed(41, t));
    for (std::size_t i = 0; i < n; ++i) freq(i, s.selected[i][0]) += 1.0 / draws;
  }
  double gumbel_dev = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(q.q(i, j));
    for (std::size_t j = 0; j < n; ++j) gumbel_dev = std::max(gumbel_dev, std::abs(freq(i, j) - std::exp(q.q(i, j)) / z));
  }

  // Delta = 1 draws against normalized clamped scores, over a mix of edges and non-edges.
  const Graph g(5, {{0, 1}, {1, 2}, {3, 4}});
  ScoreMatrix sc{Matrix(5, 5), Matrix(5, 5)};
  std::uniform_real_distribution<double> ud(-0.3, 1.0);
  double total = 0.0;
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = i + 1; j < 5; ++j) {
      sc.s(i, j) = sc.s(j, i) = ud(rng);
      total += std::max(0.0, sc.s(i, j));
    }
  std::map<Edge, double> hits;
  for (std::size_t t = 0; t < draws; ++t) {
    const auto p = sample_perturbations(sc, g, 1, derive_seed(42, t));
    hits[Edge::of(p.flips[0].u, p.flips[0].v)] += 1.0 / draws;
  }
  double cat_dev = 0.0;
  for (NodeId i = 0; i < 5; ++i)
    for (NodeId j = i + 1; j < 5; ++j) cat_dev = std::max(cat_dev, std::abs(hits[{i, j}] - std::max(0.0, sc.s(i, j)) / total));

  return verdict(gumbel_dev <= 0.01 && cat_dev <= 0.01, "1e5 draws: top-1 vs softmax max deviation " +
                                                            fmt(gumbel_dev, 3) + ", delta=1 vs clamped scores " +
                                                            fmt(cat_dev, 3));
}

// ---------------------------------------------------------------------------

RunConfig sbm_config(const std::string& synth, std::uint64_t data_seed, std::uint64_t seed, const std::string& method,
                     double rate = 0.05) {
  RunConfig c;
  c.synth = synth;
  c.data_seed = data_seed;
  c.seed = seed;
  c.attack.seed = seed;
  c.attack.surrogate.seed = seed;
  c.method = method;
  c.budget_rate = rate;
  return c;
}

const std::string kSbm = "100,2,0.3,0.02";

Outcome budget_exactness() {
  std::size_t outputs = 0, exact = 0;
  std::string bad;
  for (std::uint64_t data_seed : {1u, 2u})
    for (const char* method : {"foa", "fda", "dice"})
      for (double rate : {0.01, 0.03, 0.05}) {
        const RunConfig c = sbm_config(kSbm, data_seed, data_seed, method, rate);
        const Dataset d = load_dataset(c);
        const auto out = run_poisoning(d, c);
        const auto l0 = adjacency_l0_distance(d.graph, apply_perturbations(d.graph, out.flips));
        ++outputs;
        if (l0 == 2 * out.budget && out.budget == budget_from_rate(rate, d.graph.num_edges())) ++exact;
        else bad += std::string(" ") + method + "@" + fmt(rate) + ":" + std::to_string(l0) + "/" +
                    std::to_string(2 * out.budget);
      }
  return verdict(exact == outputs, std::to_string(exact) + "/" + std::to_string(outputs) +
                                       " outputs (foa, fda, dice x 1/3/5% x 2 graphs) have l0 = 2*budget" + bad);
}

// ---------------------------------------------------------------------------

struct EdgeLabelCounts {
  std::size_t added = 0, added_diff = 0, removed = 0, removed_diff = 0;

  void add(const PerturbationSet& p, const LabelVector& y) {
    for (const auto& f : p.flips) {
      const bool diff = y[f.u] != y[f.v];
      if (f.op == FlipOp::add) added += 1, added_diff += diff;
      else removed += 1, removed_diff += diff;
    }
  }
  double added_fraction() const { return added ? static_cast<double>(added_diff) / added : std::nan(""); }
  double removed_fraction() const { return removed ? static_cast<double>(removed_diff) / removed : std::nan(""); }
  bool pattern_holds() const { return added > 0 && removed > 0 && added_fraction() > removed_fraction(); }
  std::string describe() const {
    return "added " + std::to_string(added) + " (different-label " + fmt(added_fraction(), 3) + "), removed " +
           std::to_string(removed) + " (different-label " + fmt(removed_fraction(), 3) + ")";
  }
};

struct SbmRun {
  EdgeLabelCounts dga_edges;
  Outcome effectiveness;
};

SbmRun sbm_effectiveness() {
  const auto t0 = Clock::now();
  SbmRun run;
  double clean_sum = 0.0, dga_sum = 0.0, dice_sum = 0.0;
  const int seeds = 10;
  for (std::uint64_t seed = 1; seed <= static_cast<std::uint64_t>(seeds); ++seed) {
    const RunConfig c = sbm_config(kSbm, seed, seed, "foa");
    const Dataset d = load_dataset(c);
    const Features x(d.features);
    const auto dga = run_poisoning(d, c);
    const auto dice = run_poisoning(d, sbm_config(kSbm, seed, seed, "dice"));
    run.dga_edges.add(dga.flips, d.labels);
    const std::uint64_t victims = 100 * seed;
    clean_sum += evaluate_victim(d.graph, x, d.labels, d.split, 10, victims).mean;
    dga_sum += evaluate_victim(apply_perturbations(d.graph, dga.flips), x, d.labels, d.split, 10, victims).mean;
    dice_sum += evaluate_victim(apply_perturbations(d.graph, dice.flips), x, d.labels, d.split, 10, victims).mean;
  }
  const double clean = 100 * clean_sum / seeds, dga = 100 * dga_sum / seeds, dice = 100 * dice_sum / seeds;
  const double margin = (clean - dga) - (clean - dice);
  const double secs = seconds_since(t0);
  run.effectiveness = verdict(margin >= 3.0 && secs < 300.0,
                              "10 paired seeds: clean " + fmt(clean) + "%, DGA-FOA " + fmt(dga) + "%, DICE " +
                                  fmt(dice) + "%; DGA drop minus DICE drop " + fmt(margin, 3) +
                                  " points (want >= 3), " + fmt(secs, 3) + " s");
  return run;
}

// ---------------------------------------------------------------------------

struct RealDataset {
  std::string name;
  const char* env;
  double clean_target;
  double dga_ceiling;
};

struct RealRun {
  std::string name;
  Dataset data;
  PerturbationSet dga_flips;
  double clean = 0.0, dga = 0.0, dice = 0.0;
};

std::vector<RealRun> real_runs;

Outcome real_data_reproduction() {
  const std::vector<RealDataset> sets{{"Cora", "DGA_CORA_DIR", 83.62, 80.5}, {"Citeseer", "DGA_CITESEER_DIR", 71.81, 69.5}};
  bool any = false, ok = true;
  std::string detail;
  for (const auto& s : sets) {
    const char* dir = std::getenv(s.env);
    if (!dir || !*dir) {
      detail += s.name + ": " + s.env + " not set; ";
      continue;
    }
    any = true;
    RunConfig c;
    c.dataset = dir;
    c.method = "foa";
    RealRun r{s.name, load_dataset(c), {}};
    const Features x(r.data.features);
    r.dga_flips = run_poisoning(r.data, c).flips;
    RunConfig dc = c;
    dc.method = "dice";
    const auto dice = run_poisoning(r.data, dc).flips;
    r.clean = 100 * evaluate_victim(r.data.graph, x, r.data.labels, r.data.split, 10, 0).mean;
    r.dga = 100 * evaluate_victim(apply_perturbations(r.data.graph, r.dga_flips), x, r.data.labels, r.data.split, 10, 0).mean;
    r.dice = 100 * evaluate_victim(apply_perturbations(r.data.graph, dice), x, r.data.labels, r.data.split, 10, 0).mean;
    const bool here = std::abs(r.clean - s.clean_target) <= 2.0 && r.dga <= s.dga_ceiling && r.dga < r.dice;
    ok &= here;
    detail += s.name + ": clean " + fmt(r.clean) + " (want " + fmt(s.clean_target) + " +- 2), DGA-FOA " + fmt(r.dga) +
              " (want <= " + fmt(s.dga_ceiling) + "), DICE " + fmt(r.dice) + "; ";
    real_runs.push_back(std::move(r));
  }
  if (!any) return {Verdict::skip, detail + "no real datasets provided"};
  return verdict(ok, detail);
}

// ---------------------------------------------------------------------------

EdgeLabelCounts cora_scale_edges;

Outcome imperceptibility() {
  for (const auto& r : real_runs)
    if (r.name == "Cora") {
      const auto s = attack_statistics(r.data.graph, apply_perturbations(r.data.graph, r.dga_flips), r.data.features,
                                       r.data.labels);
      return verdict(s.ks_statistic < 0.05, "Cora, DGA-FOA at 5%: KS " + fmt(s.ks_statistic, 3));
    }
  // No Cora bundle: a synthetic graph with Cora's node count, class count and edge density.
  const auto t0 = Clock::now();
  const RunConfig c = sbm_config("2485,7,0.0092,0.000383", 1, 1, "foa");
  const Dataset d = load_dataset(c);
  const auto out = run_poisoning(d, c);
  cora_scale_edges.add(out.flips, d.labels);
  const auto s = attack_statistics(d.graph, apply_perturbations(d.graph, out.flips), d.features, d.labels);
  return verdict(s.ks_statistic < 0.05, "Cora-scale SBM (" + std::to_string(d.graph.num_nodes()) + " nodes, " +
                                            std::to_string(d.graph.num_edges()) + " edges, " +
                                            std::to_string(out.flips.size()) + " flips), DGA-FOA at 5%: KS " +
                                            fmt(s.ks_statistic, 3) + ", " + fmt(seconds_since(t0), 3) +
                                            " s; set DGA_CORA_DIR to use Cora");
}

// ---------------------------------------------------------------------------

Outcome homophily(const EdgeLabelCounts& sbm) {
  bool ok = sbm.pattern_holds();
  std::string detail = "SBM (10 seeds): " + sbm.describe();
  bool cora = false;
  for (const auto& r : real_runs)
    if (r.name == "Cora") {
      EdgeLabelCounts c;
      c.add(r.dga_flips, r.data.labels);
      ok &= c.pattern_holds();
      detail += "; Cora: " + c.describe();
      cora = true;
    }
  if (!cora && cora_scale_edges.added + cora_scale_edges.removed > 0) {
    // Same substitute as the imperceptibility check.
    ok &= cora_scale_edges.pattern_holds();
    detail += "; Cora-scale SBM in place of Cora: " + cora_scale_edges.describe();
  } else if (!cora) {
    detail += "; Cora not provided";
  }
  return verdict(ok, detail);
}

// ---------------------------------------------------------------------------

Outcome determinism() {
  const auto a = testing_support::temp_dir("acc_det_a"), b = testing_support::temp_dir("acc_det_b");
  const std::vector<std::string> flags{"attack", "--synth", kSbm, "--data-seed", "3", "--method", "foa",
                                       "--seed", "11", "--deterministic"};
  auto run = [&](const std::string& out) {
    auto args = flags;
    args.insert(args.end(), {"--out", out});
    std::ostringstream sink;
    auto* saved = std::cout.rdbuf(sink.rdbuf());
    const int rc = run_cli(args);
    std::cout.rdbuf(saved);
    return rc;
  };
  if (run(a) != 0 || run(b) != 0) return {Verdict::fail, "attack command failed"};
  bool same = true;
  std::string sizes;
  for (const char* f : {"perturbations.csv", "diagnostics.csv"}) {
    const auto x = testing_support::slurp(a + "/" + f), y = testing_support::slurp(b + "/" + f);
    same &= !x.empty() && x == y;
    sizes += std::string(" ") + f + " " + std::to_string(x.size()) + " bytes";
  }
  return verdict(same, std::string(same ? "bit-identical:" : "outputs differ:") + sizes);
}

// ---------------------------------------------------------------------------

Outcome diagnostics_sanity() {
  const std::size_t n = 8, iters = 50;
  std::mt19937_64 rng(10);
  std::normal_distribution<double> nd(0.0, 1.0);
  LogProbMatrix q;
  q.log_eps = std::log(1e-8);
  q.q = Matrix(n, n, q.log_eps);
  std::vector<double> avg(n, 0.0);
  for (std::size_t t = 0; t < iters; ++t) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) q.q(i, j) = q.q(j, i) = nd(rng);
    for (std::size_t k = 1; k < n; ++k) {
      const double e = sampling_error(q, gumbel_top_k_sample(q, k, 1.0, derive_seed(t, k)));
      avg[k] += e * e / iters;
    }
  }
  bool ok = avg[n - 1] == 0.0;
  for (std::size_t k = 1; k + 1 < n; ++k) ok &= avg[k] > 0.0;

  // The same quantity as reported by a full attack run.
  const auto sbm = generate_sbm(30, 2, 0.3, 0.05, 5);
  const Dataset d = finalize_dataset(sbm.graph, sbm.features, sbm.labels, std::nullopt, false, 5);
  const Features x(d.features);
  AttackConfig cfg;
  cfg.iters = 20;
  cfg.gumbel_k = d.graph.num_nodes() - 1;
  const double full = run_attack(d.graph, x, d.labels, d.split, cfg).diagnostics.avg_err();
  cfg.gumbel_k = 2;
  const double partial = run_attack(d.graph, x, d.labels, d.split, cfg).diagnostics.avg_err();
  ok &= full == 0.0 && partial > 0.0;

  std::string row;
  for (std::size_t k = 1; k < n; ++k) row += (row.empty() ? "" : " ") + fmt(avg[k], 3);
  return verdict(ok, "random Q, N=8, k=1..7: Avg.Err [" + row + "]; attack run on " +
                         std::to_string(d.graph.num_nodes()) + " nodes: k=N-1 gives " + fmt(full, 3) +
                         ", k=2 gives " + fmt(partial, 3));
}

// ---------------------------------------------------------------------------

const char* label(Verdict v) { return v == Verdict::pass ? "PASS" : v == Verdict::fail ? "FAIL" : "SKIP"; }

}  // namespace

int main(int argc, char** argv) {
  bool strict = false;
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--strict") == 0) strict = true;
    else only.push_back(std::atoi(argv[i]));
  }
  auto wanted = [&](int c) { return only.empty() || std::find(only.begin(), only.end(), c) != only.end(); };

  std::optional<SbmRun> sbm;
  auto sbm_run = [&]() -> SbmRun& {
    if (!sbm) sbm = sbm_effectiveness();
    return *sbm;
  };

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient correctness", gradient_correctness},
      {"FOA/FDA consistency", foa_fda_consistency},
      {"sampler fidelity", sampler_fidelity},
      {"budget exactness", budget_exactness},
      {"SBM effectiveness vs DICE", [&] { return sbm_run().effectiveness; }},
      {"real-data reproduction", real_data_reproduction},
      {"degree-distribution imperceptibility", imperceptibility},
      {"homophily pattern", [&] { return homophily(sbm_run().dga_edges); }},
      {"determinism", determinism},
      {"Avg.Err sanity", diagnostics_sanity},
  };

  int failures = 0, crashes = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!wanted(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {Verdict::fail, std::string("error: ") + e.what()};
      ++crashes;
    }
    failures += o.verdict == Verdict::fail;
    std::cout << "criterion " << std::setw(2) << id << ": " << label(o.verdict) << "  " << criteria[i].first << " | "
              << o.detail << std::endl;
  }
  std::cout << failures << " criteria failed" << std::endl;
  if (crashes) return 2;
  return strict && failures ? 1 : 0;
}
