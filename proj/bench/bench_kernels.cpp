// Serial vs OpenMP kernels. Run with OMP_NUM_THREADS set to the thread count to compare.

#include <benchmark/benchmark.h>

#include <cmath>
#include <random>

#include "dga/attack.hpp"
#include "dga/graph.hpp"
#include "dga/kernels.hpp"

using namespace dga;

namespace {

Matrix random_dense(std::size_t r, std::size_t c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  Matrix m(r, c);
  for (auto& v : m.values()) v = nd(rng);
  return m;
}

Graph random_graph(std::size_t n, double avg_degree, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<Edge> edges;
  const auto m = static_cast<std::size_t>(avg_degree * n / 2);
  while (edges.size() < m) {
    const auto u = pick(rng), v = pick(rng);
    if (u != v) edges.push_back(Edge::of(static_cast<NodeId>(u), static_cast<NodeId>(v)));
  }
  return Graph(n, edges);
}

CsrRect sparse_features(std::size_t n, std::size_t d, double density, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution keep(density);
  Matrix m(n, d);
  for (auto& v : m.values())
    if (keep(rng)) v = 1.0;
  return CsrRect::from_dense(m);
}

Exec policy(const benchmark::State& st) { return st.range(0) ? Exec::parallel : Exec::serial; }

void label(benchmark::State& st) { st.SetLabel(st.range(0) ? "parallel" : "serial"); }

void BM_Matmul(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(1));
  const Matrix a = random_dense(n, 256, 1), b = random_dense(256, 64, 2);
  set_exec(policy(st));
  for (auto _ : st) benchmark::DoNotOptimize(kernels::matmul(a, b));
  label(st);
}

void BM_MatmulTN(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(1));
  const Matrix a = random_dense(n, 64, 3), b = random_dense(n, 16, 4);
  set_exec(policy(st));
  for (auto _ : st) benchmark::DoNotOptimize(kernels::matmul_tn(a, b));
  label(st);
}

void BM_SpmmAdjacency(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(1));
  const CsrMatrix adj = gcn_normalize_sparse(random_graph(n, 4.0, 5));
  const Matrix h = random_dense(n, 16, 6);
  set_exec(policy(st));
  for (auto _ : st) benchmark::DoNotOptimize(kernels::spmm(adj, h));
  label(st);
}

void BM_SpmmFeatures(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(1));
  const CsrRect x = sparse_features(n, 1433, 0.013, 7);
  const Matrix w = random_dense(1433, 16, 8);
  set_exec(policy(st));
  for (auto _ : st) benchmark::DoNotOptimize(kernels::spmm(x, w));
  label(st);
}

void BM_SpmmFeaturesTN(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(1));
  const CsrRect x = sparse_features(n, 1433, 0.013, 9);
  const Matrix g = random_dense(n, 16, 10);
  set_exec(policy(st));
  for (auto _ : st) benchmark::DoNotOptimize(kernels::spmm_tn(x, g));
  label(st);
}

void BM_GumbelTopK(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(1));
  const LogProbMatrix q = init_log_prob(random_graph(n, 4.0, 11), 1e-8);
  set_exec(policy(st));
  std::uint64_t seed = 0;
  for (auto _ : st) benchmark::DoNotOptimize(gumbel_top_k_sample(q, 2, 1.0, seed++));
  label(st);
}

void sizes(benchmark::internal::Benchmark* b) {
  for (int par : {0, 1})
    for (int n : {500, 2500}) b->Args({par, n});
  b->Unit(benchmark::kMillisecond);
}

}  // namespace

BENCHMARK(BM_Matmul)->Apply(sizes);
BENCHMARK(BM_MatmulTN)->Apply(sizes);
BENCHMARK(BM_SpmmAdjacency)->Apply(sizes);
BENCHMARK(BM_SpmmFeatures)->Apply(sizes);
BENCHMARK(BM_SpmmFeaturesTN)->Apply(sizes);
BENCHMARK(BM_GumbelTopK)->Apply(sizes);

BENCHMARK_MAIN();
