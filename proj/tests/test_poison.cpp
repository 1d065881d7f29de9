#include <doctest.h>

#include <map>
#include <set>

#include "dga/error.hpp"
#include "dga/io.hpp"
#include "dga/poison.hpp"
#include "dga/random.hpp"
#include "support.hpp"

using namespace dga;

namespace {

ScoreMatrix scores_on_triangle(double s01, double s02, double s12) {
  ScoreMatrix s{Matrix(3, 3), Matrix(3, 3)};
  s.s(0, 1) = s.s(1, 0) = s01;
  s.s(0, 2) = s.s(2, 0) = s02;
  s.s(1, 2) = s.s(2, 1) = s12;
  return s;
}

}  // namespace

TEST_CASE("difference scores") {
  const Graph g(3, {{0, 1}});
  LogProbMatrix q = init_log_prob(g, 1e-8);
  q.q(0, 1) = q.q(1, 0) = std::log(0.25);
  q.q(0, 2) = std::log(0.5);
  q.q(2, 0) = std::log(0.7);
  q.q(1, 2) = q.q(2, 1) = std::log(3.0);
  const auto s = difference_scores(q, g);
  CHECK(s.s(0, 1) == doctest::Approx(0.75));       // edge: 1 - P
  CHECK(s.p_bar(0, 2) == doctest::Approx(0.6));    // mean of the two directions
  CHECK(s.s(0, 2) == doctest::Approx(0.6));        // non-edge: P
  CHECK(s.s(1, 2) == doctest::Approx(1.0));        // clipped to 1
  CHECK(s.s(2, 1) == s.s(1, 2));
  CHECK(s.s(1, 1) == 0.0);
  CHECK_THROWS_AS(difference_scores(q, Graph(4, {})), InputError);

  // An unchanged Q scores every pair at (essentially) zero.
  const auto z = difference_scores(init_log_prob(g, 1e-8), g);
  for (double v : z.s.values()) CHECK(std::abs(v) <= 1e-8);
}

TEST_CASE("sampled perturbations respect the budget and the graph") {
  std::mt19937_64 rng(1);
  const Graph g = testing_support::random_graph(20, 0.2, rng);
  LogProbMatrix q = init_log_prob(g, 1e-2);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (std::size_t i = 0; i < 20; ++i)
    for (std::size_t j = i + 1; j < 20; ++j) q.q(i, j) = q.q(j, i) = q.q(i, j) + nd(rng);
  const auto s = difference_scores(q, g);
  for (std::size_t delta : {1u, 5u, 17u}) {
    const auto p = sample_perturbations(s, g, delta, 3);
    CHECK(p.size() == delta);
    CHECK_NOTHROW(validate_perturbations(g, p));
    CHECK(adjacency_l0_distance(g, apply_perturbations(g, p)) == 2 * delta);
    CHECK(sample_perturbations(s, g, delta, 3) == p);
  }
  CHECK(sample_perturbations(s, g, 0, 3).empty());
  CHECK_THROWS_AS(sample_perturbations(s, g, 1000, 3), InputError);
}

TEST_CASE("single draws follow the normalized clamped scores") {
  const Graph g(3, {});
  const auto s = scores_on_triangle(0.6, 0.3, 0.1);
  std::map<Edge, double> freq;
  const int draws = 40000;
  for (int t = 0; t < draws; ++t) {
    const auto p = sample_perturbations(s, g, 1, derive_seed(5, t));
    freq[Edge::of(p.flips[0].u, p.flips[0].v)] += 1.0 / draws;
  }
  CHECK(freq[{0, 1}] == doctest::Approx(0.6).epsilon(0.02));
  CHECK(freq[{0, 2}] == doctest::Approx(0.3).epsilon(0.04));
  CHECK(freq[{1, 2}] == doctest::Approx(0.1).epsilon(0.08));
}

TEST_CASE("two draws match sequential renormalized draws") {
  const Graph g(3, {});
  const double w[3] = {0.5, 0.3, 0.2};  // pairs (0,1), (0,2), (1,2)
  const auto s = scores_on_triangle(w[0], w[1], w[2]);
  // P(the unordered pair {a, b}) = w_a w_b / (1 - w_a) + w_b w_a / (1 - w_b)
  auto pair_prob = [&](int a, int b) { return w[a] * w[b] / (1 - w[a]) + w[b] * w[a] / (1 - w[b]); };
  // The excluded pair identifies the chosen set.
  std::map<Edge, double> missing;
  const int draws = 40000;
  for (int t = 0; t < draws; ++t) {
    const auto p = sample_perturbations(s, g, 2, derive_seed(6, t));
    std::set<Edge> got{Edge::of(p.flips[0].u, p.flips[0].v), Edge::of(p.flips[1].u, p.flips[1].v)};
    for (Edge e : {Edge{0, 1}, Edge{0, 2}, Edge{1, 2}})
      if (!got.count(e)) missing[e] += 1.0 / draws;
  }
  CHECK(std::abs(missing[{1, 2}] - pair_prob(0, 1)) < 0.01);
  CHECK(std::abs(missing[{0, 1}] - pair_prob(1, 2)) < 0.01);
  CHECK(std::abs(missing[{0, 2}] - pair_prob(0, 2)) < 0.01);
}

TEST_CASE("too few positive scores fall back to the deterministic top scores") {
  const Graph g(3, {});
  const auto s = scores_on_triangle(0.4, 0.0, -0.2);
  std::vector<std::string> warnings;
  const auto p = sample_perturbations(s, g, 2, 1, ScoreToProb::clamp, &warnings);
  REQUIRE(p.size() == 2);
  CHECK(Edge::of(p.flips[0].u, p.flips[0].v) == Edge{0, 1});
  CHECK(Edge::of(p.flips[1].u, p.flips[1].v) == Edge{0, 2});
  CHECK(warnings.size() == 1);

  // softmax gives every pair positive weight, so no fallback.
  warnings.clear();
  CHECK(sample_perturbations(s, g, 3, 1, ScoreToProb::softmax, &warnings).size() == 3);
  CHECK(warnings.empty());
}

TEST_CASE("removals come from edges and additions from non-edges") {
  const Graph g(3, {{0, 1}});
  const auto s = scores_on_triangle(0.9, 0.8, 0.0);
  const auto p = sample_perturbations(s, g, 2, 4);
  for (const auto& f : p.flips) CHECK((f.op == FlipOp::remove) == g.has_edge(f.u, f.v));
}

TEST_CASE("best of samples keeps the first maximum and wraps evaluator failures") {
  const Graph g(3, {});
  const auto s = scores_on_triangle(0.5, 0.3, 0.2);
  const std::vector<double> fixed{1.0, 3.0, 3.0, 2.0};
  std::size_t call = 0;
  const auto r = best_of_samples(s, g, 1, 4, [&](const PerturbationSet&) { return fixed[call++]; }, 9);
  CHECK(r.index == 1);
  CHECK(r.score == 3.0);
  CHECK(r.candidate_scores == fixed);
  CHECK(r.flips == sample_perturbations(s, g, 1, derive_seed(9, 0xca7d, 1)));

  call = 0;
  try {
    best_of_samples(s, g, 1, 4, [&](const PerturbationSet&) {
      if (call++ == 2) throw std::runtime_error("boom");
      return 1.0;
    }, 9);
    FAIL("expected an error");
  } catch (const RuntimeError& e) {
    CHECK(std::string(e.what()).find("candidate 2") != std::string::npos);
  }
  CHECK_THROWS_AS(best_of_samples(s, g, 1, 0, [](const PerturbationSet&) { return 0.0; }, 9), InputError);
}

TEST_CASE("best of samples with a retrained self-loss evaluator beats the median candidate") {
  const auto sbm = generate_sbm(100, 2, 0.3, 0.02, 3);
  const Dataset d = finalize_dataset(sbm.graph, sbm.features, sbm.labels, std::nullopt, false, 3);
  const Features x(d.features);
  AttackConfig cfg;
  cfg.eps = 1e-2;
  cfg.eta = 50.0;
  cfg.iters = 30;
  const auto atk = run_attack(d.graph, x, d.labels, d.split, cfg);
  TrainConfig retrain;
  retrain.epochs = 50;
  const auto eval = self_loss_evaluator(d.graph, x, d.labels, d.split, atk.setup.pseudo, retrain);
  const auto r = best_of_samples(difference_scores(atk.q, d.graph), d.graph,
                                 budget_from_rate(0.05, d.graph.num_edges()), 10, eval, 4);
  auto sorted = r.candidate_scores;
  std::sort(sorted.begin(), sorted.end());
  CHECK(r.score >= 0.5 * (sorted[4] + sorted[5]));
  CHECK(r.score == sorted.back());
}

TEST_CASE("DICE removes same-label edges and adds different-label non-edges") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto sbm = generate_sbm(60, 3, 0.3, 0.05, seed);
    const auto p = dice_attack(sbm.graph, sbm.labels, 25, seed);
    CHECK(p.size() == 25);
    CHECK_NOTHROW(validate_perturbations(sbm.graph, p));
    for (const auto& f : p.flips) {
      if (f.op == FlipOp::remove) CHECK(sbm.labels[f.u] == sbm.labels[f.v]);
      else CHECK(sbm.labels[f.u] != sbm.labels[f.v]);
    }
    CHECK(dice_attack(sbm.graph, sbm.labels, 25, seed) == p);
  }
}

TEST_CASE("DICE with an exhausted pool uses the other") {
  // Every edge crosses labels, so only additions are possible.
  const Graph g(4, {{0, 1}, {2, 3}});
  const LabelVector y{{0, 1, 0, 1}, 2};
  const auto p = dice_attack(g, y, 2, 1);
  for (const auto& f : p.flips) CHECK(f.op == FlipOp::add);
  CHECK_THROWS_AS(dice_attack(g, y, 3, 1), InputError);

  // Unlabeled nodes never take part.
  const LabelVector partial{{0, 1, -1, 1}, 2};
  for (const auto& f : dice_attack(g, partial, 1, 2).flips) CHECK((f.u != 2 && f.v != 2));
}

TEST_CASE("budget from rate") {
  CHECK(budget_from_rate(0.05, 800) == 40);
  CHECK(budget_from_rate(0.05, 5069) == 253);
  CHECK(budget_from_rate(0.01, 10) == 1);
  CHECK(budget_from_rate(0.0, 10) == 0);
  CHECK(budget_from_rate(0.05, 30) == 2);  // 1.5 rounds up
  CHECK_THROWS_AS(budget_from_rate(-0.1, 10), InputError);
}
