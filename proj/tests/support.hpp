#pragma once

// Random small instances shared by the test binaries and the acceptance harness.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dga/attack.hpp"
#include "dga/gcn.hpp"
#include "dga/graph.hpp"
#include "oracles.hpp"

namespace testing_support {

using namespace dga;

inline Matrix random_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Matrix m(r, c);
  for (auto& v : m.values()) v = nd(rng);
  return m;
}

inline Matrix random_sparse(std::size_t r, std::size_t c, double density, std::mt19937_64& rng) {
  std::bernoulli_distribution keep(density);
  std::uniform_real_distribution<double> val(0.1, 2.0);
  Matrix m(r, c);
  for (auto& v : m.values())
    if (keep(rng)) v = val(rng);
  return m;
}

inline Graph random_graph(std::size_t n, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution coin(p);
  std::vector<Edge> e;
  for (NodeId i = 0; i < n; ++i)
    for (NodeId j = i + 1; j < n; ++j)
      if (coin(rng)) e.push_back({i, j});
  return Graph(n, e);
}

/// A tiny problem: random graph, features, labels, relaxed sample and params.
struct Instance {
  Graph graph;
  Features x;
  LabelVector labels;
  Split split;
  SurrogateParams params;
  RelaxedGraph relaxed;
  LossTarget target;
};

inline Instance random_instance(std::uint64_t seed, std::size_t n, std::size_t hidden, std::size_t dims = 3,
                                std::size_t classes = 2, bool self_loss = false) {
  std::mt19937_64 rng(seed);
  Instance in;
  in.graph = random_graph(n, 0.4, rng);
  in.x = Features(random_matrix(n, dims, rng));
  std::uniform_int_distribution<int> lab(0, static_cast<int>(classes) - 1);
  in.labels.num_classes = static_cast<int>(classes);
  for (std::size_t i = 0; i < n; ++i) in.labels.labels.push_back(lab(rng));
  std::vector<NodeId> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  in.split.train.assign(order.begin(), order.begin() + 2);
  in.split.val.assign(order.begin() + 2, order.begin() + 3);
  in.split.test.assign(order.begin() + 3, order.end());
  for (auto* v : {&in.split.train, &in.split.val, &in.split.test}) std::sort(v->begin(), v->end());
  in.params = init_params(dims, hidden, classes, seed + 1);
  // Larger weights keep the ReLU pattern away from the kinks.
  for (auto* w : {&in.params.w1, &in.params.w2})
    for (auto& v : w->values()) v *= 3.0;

  LogProbMatrix q = init_log_prob(in.graph, 1e-2);
  std::normal_distribution<double> nd(0.0, 0.5);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) q.q(i, j) = q.q(j, i) = q.q(i, j) + nd(rng);
  const std::size_t k = std::max<std::size_t>(1, n / 3);
  SampledGraph s = gumbel_top_k_sample(q, k, 1.0, seed + 2);
  s.include_edges(in.graph);
  in.relaxed = s.relaxed(q);

  if (self_loss) {
    LabelVector pseudo = in.labels;
    for (auto& l : pseudo.labels) l = lab(rng);
    in.target = make_loss_target(LossKind::self_ce, in.labels, in.split, &pseudo);
  } else {
    in.target = make_loss_target(LossKind::train_ce, in.labels, in.split);
  }
  return in;
}

inline oracle::DenseProblem dense_problem(const Instance& in) {
  oracle::DenseProblem p;
  p.n = in.graph.num_nodes();
  p.d = in.x.cols();
  p.h = in.params.w1.cols();
  p.c = in.params.w2.cols();
  for (double v : in.x.dense().values()) p.x.push_back(v);
  p.pairs = in.relaxed.pairs;
  p.labels = in.target.labels;
  p.mask = in.target.mask;
  return p;
}

inline std::vector<oracle::Real> to_real(const std::vector<double>& v) { return {v.begin(), v.end()}; }

inline double rel_err(double analytic, double numeric) {
  return std::abs(analytic - numeric) / (std::abs(analytic) + 1e-8);
}

/// Fresh empty directory under the system temp dir.
inline std::string temp_dir(const std::string& tag) {
  namespace fs = std::filesystem;
  static std::uint64_t counter = 0;
  std::random_device rd;
  const auto dir = fs::temp_directory_path() /
                   ("dga_" + tag + "_" + std::to_string(rd()) + "_" + std::to_string(counter++));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace testing_support
