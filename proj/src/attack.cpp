#include "dga/attack.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "dga/error.hpp"
#include "dga/random.hpp"

namespace dga {

namespace {

SurrogateParams axpy(const SurrogateParams& p, double a, const ParamGrad& g) {
  SurrogateParams out = p;
  auto step = [a](Matrix& w, const Matrix& d) {
    auto& wv = w.values();
    const auto& dv = d.values();
    for (std::size_t i = 0; i < wv.size(); ++i) wv[i] += a * dv[i];
  };
  step(out.w1, g.d_w1);
  step(out.w2, g.d_w2);
  return out;
}

double norm(const ParamGrad& g) {
  const double a = frobenius_norm(g.d_w1), b = frobenius_norm(g.d_w2);
  return std::sqrt(a * a + b * b);
}

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

bool finite(const ParamGrad& g) { return all_finite(g.d_w1) && all_finite(g.d_w2); }

}  // namespace

Matrix LogProbMatrix::probabilities() const {
  Matrix p = q;
  for (auto& v : p.values()) v = std::exp(v);
  return p;
}

LogProbMatrix init_log_prob(const Graph& a, double eps) {
  if (!(eps > 0.0)) throw InputError("init_log_prob: eps must be positive");
  const std::size_t n = a.num_nodes();
  LogProbMatrix out;
  out.log_eps = std::log(eps);
  out.q = Matrix(n, n, out.log_eps);
  const double on = std::log1p(eps);
  for (const auto& e : a.edges()) {
    out.q(e.u, e.v) = on;
    out.q(e.v, e.u) = on;
  }
  return out;
}

RelaxedGraph SampledGraph::relaxed(const LogProbMatrix& q) const {
  RelaxedGraph r;
  r.num_nodes = num_nodes;
  r.pairs = pairs;
  r.q.reserve(pairs.size());
  for (const auto& e : pairs) r.q.push_back(q.q(e.u, e.v));
  return r;
}

void SampledGraph::include_edges(const Graph& g) {
  std::vector<Edge> merged;
  merged.reserve(pairs.size() + g.num_edges());
  std::set_union(pairs.begin(), pairs.end(), g.edges().begin(), g.edges().end(), std::back_inserter(merged));
  pairs = std::move(merged);
  if (selected.size() < num_nodes) selected.resize(num_nodes);
  for (std::size_t i = 0; i < num_nodes && i < g.num_nodes(); ++i) {
    const auto nb = g.neighbors(static_cast<NodeId>(i));
    std::vector<NodeId> row;
    row.reserve(selected[i].size() + nb.size());
    std::set_union(selected[i].begin(), selected[i].end(), nb.begin(), nb.end(), std::back_inserter(row));
    selected[i] = std::move(row);
  }
}

SampledGraph gumbel_top_k_sample(const LogProbMatrix& q, std::size_t k, double tau, std::uint64_t seed,
                                 SamplerOptions opts) {
  const std::size_t n = q.num_nodes();
  if (!(tau > 0.0)) throw InputError("gumbel_top_k_sample: tau must be positive");
  if (n > 0 && k > n - 1) throw InputError("gumbel_top_k_sample: k exceeds N - 1");
  SampledGraph s;
  s.num_nodes = n;
  s.selected.assign(n, {});

  const auto rows = static_cast<std::ptrdiff_t>(n);
  const bool par = exec() == Exec::parallel;
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t r = 0; r < rows; ++r) {
    const auto i = static_cast<std::size_t>(r);
    std::mt19937_64 rng(derive_seed(seed, i));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<std::pair<double, NodeId>> keys;
    keys.reserve(n - 1);
    const auto row = q.q.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      if (opts.skip && opts.skip->has_edge(static_cast<NodeId>(i), static_cast<NodeId>(j))) continue;
      double g = 0.0;
      if (!opts.zero_noise) {
        double u = unif(rng);
        if (u <= 0.0) u = std::numeric_limits<double>::min();
        g = -std::log(-std::log(u));
      }
      keys.emplace_back((g + row[j]) / tau, static_cast<NodeId>(j));
    }
    auto by_key = [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); };
    const std::size_t take = std::min(k, keys.size());
    std::partial_sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(take), keys.end(), by_key);
    auto& sel = s.selected[i];
    sel.reserve(take);
    for (std::size_t t = 0; t < take; ++t) sel.push_back(keys[t].second);
    std::sort(sel.begin(), sel.end());
  }

  for (std::size_t i = 0; i < n; ++i)
    for (auto j : s.selected[i]) s.pairs.push_back(Edge::of(static_cast<NodeId>(i), j));
  std::sort(s.pairs.begin(), s.pairs.end());
  s.pairs.erase(std::unique(s.pairs.begin(), s.pairs.end()), s.pairs.end());
  return s;
}

SurrogateParams single_step_adapt(const SurrogateParams& theta, const RelaxedGraph& sampled, double alpha,
                                  const Features& x, const LossTarget& train_target) {
  if (alpha < 0.0) throw InputError("single_step_adapt: alpha must be non-negative");
  if (alpha == 0.0) return theta;
  const auto g = loss_and_grads(theta, x, sampled, train_target, false).params;
  if (!finite(g)) throw RuntimeError("single_step_adapt: non-finite training gradient");
  return axpy(theta, -alpha, g);
}

std::vector<double> hyper_gradient_foa(const SurrogateParams& theta_hat, const RelaxedGraph& sampled,
                                       const Features& x, const LossTarget& attack_target) {
  auto d = grad_edge_logprobs(theta_hat, x, sampled, attack_target);
  for (auto& v : d) v = -v;
  return d;
}

std::vector<double> fda_mixed_term(const SurrogateParams& theta, const ParamGrad& direction, double delta,
                                   const RelaxedGraph& sampled, const Features& x, const LossTarget& train_target) {
  if (!(delta > 0.0)) throw InputError("fda: delta must be positive");
  std::vector<double> out(sampled.pairs.size(), 0.0);
  if (norm(direction) == 0.0) return out;
  const auto plus = grad_edge_logprobs(axpy(theta, delta, direction), x, sampled, train_target);
  const auto minus = grad_edge_logprobs(axpy(theta, -delta, direction), x, sampled, train_target);
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = (plus[k] - minus[k]) / (2.0 * delta);
    if (!std::isfinite(out[k]))
      throw RuntimeError("fda: non-finite finite-difference probe; try a smaller delta");
  }
  return out;
}

std::vector<double> hyper_gradient_fda(const SurrogateParams& theta, const SurrogateParams& theta_hat,
                                       const RelaxedGraph& sampled, double alpha, std::optional<double> delta,
                                       const Features& x, const LossTarget& train_target,
                                       const LossTarget& attack_target) {
  if (delta && !(*delta > 0.0)) throw InputError("fda: delta must be positive");
  auto atk = loss_and_grads(theta_hat, x, sampled, attack_target, true);
  std::vector<double> out = std::move(atk.d_q);
  for (auto& v : out) v = -v;
  if (alpha == 0.0) return out;

  // grad_theta L_atk = -grad_theta (selected loss)
  ParamGrad dir = std::move(atk.params);
  for (auto* m : {&dir.d_w1, &dir.d_w2})
    for (auto& v : m->values()) v = -v;
  const double dn = norm(dir);
  if (dn == 0.0) return out;
  const double step = delta ? *delta : 1e-2 / dn;
  const auto term = fda_mixed_term(theta, dir, step, sampled, x, train_target);
  for (std::size_t k = 0; k < out.size(); ++k) out[k] -= alpha * term[k];
  return out;
}

std::vector<QGradEntry> to_directed(const std::vector<Edge>& pairs, std::span<const double> grad) {
  std::vector<QGradEntry> out;
  out.reserve(2 * pairs.size());
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    out.push_back({pairs[k].u, pairs[k].v, grad[k]});
    out.push_back({pairs[k].v, pairs[k].u, grad[k]});
  }
  return out;
}

void update_q(LogProbMatrix& q, std::span<const QGradEntry> d_q, double eta, double momentum, Matrix& buffer) {
  if (!(eta > 0.0)) throw InputError("update_q: step size must be positive");
  const std::size_t n = q.num_nodes();
  if (!buffer.same_shape(q.q)) buffer = Matrix(n, n);
  for (auto& v : buffer.values()) v *= momentum;
  for (const auto& e : d_q) buffer(e.row, e.col) += e.value;

  const auto rows = static_cast<std::ptrdiff_t>(n);
  const bool par = exec() == Exec::parallel;
  auto& m = q.q;
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t r = 0; r < rows; ++r) {
    const auto i = static_cast<std::size_t>(r);
    for (std::size_t j = i + 1; j < n; ++j) {
      const double s = 0.5 * ((m(i, j) - eta * buffer(i, j)) + (m(j, i) - eta * buffer(j, i)));
      m(i, j) = s;
      m(j, i) = s;
    }
    m(i, i) = q.log_eps;
  }
}

double sampling_error(const LogProbMatrix& q, const SampledGraph& sampled) {
  const std::size_t n = q.num_nodes();
  double total = 0.0;
  std::vector<char> picked(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (i < sampled.selected.size())
      for (auto j : sampled.selected[i]) picked[j] = 1;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i && !picked[j]) total += q.q(i, j) * q.q(i, j);
    if (i < sampled.selected.size())
      for (auto j : sampled.selected[i]) picked[j] = 0;
  }
  return std::sqrt(total);
}

void AttackConfig::validate() const {
  if (iters < 1) throw InputError("attack: iters must be >= 1");
  if (!(eta > 0.0)) throw InputError("attack: eta must be > 0");
  if (alpha < 0.0) throw InputError("attack: alpha must be >= 0");
  if (!(gumbel_tau > 0.0)) throw InputError("attack: gumbel tau must be > 0");
  if (momentum < 0.0 || momentum >= 1.0) throw InputError("attack: momentum must be in [0, 1)");
  if (delta && !(*delta > 0.0)) throw InputError("attack: fda delta must be > 0");
  if (!(eps > 0.0)) throw InputError("attack: eps must be > 0");
}

std::size_t default_gumbel_k(const Graph& g) {
  if (g.num_nodes() == 0) return 1;
  const double avg_degree = 2.0 * static_cast<double>(g.num_edges()) / static_cast<double>(g.num_nodes());
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(avg_degree)));
}

double AttackDiagnostics::avg_err() const {
  if (sampling_error.empty()) return 0.0;
  double s = 0.0;
  for (double e : sampling_error) s += e * e;
  return s / static_cast<double>(sampling_error.size());
}

AttackSetup prepare_attack(const Graph& g, const Features& x, const LabelVector& labels, const Split& split,
                           const AttackConfig& cfg) {
  AttackSetup s;
  s.theta = train_surrogate(g, x, labels, split, cfg.surrogate).params;
  s.pseudo = pseudo_labels(s.theta, g, x, labels, split);
  s.train_target = make_loss_target(LossKind::train_ce, labels, split);
  s.attack_target = make_loss_target(cfg.loss, labels, split, &s.pseudo, cfg.self_loss_includes_train);
  return s;
}

AttackResult run_attack(const Graph& g, const Features& x, const LabelVector& labels, const Split& split,
                        const AttackConfig& cfg) {
  cfg.validate();
  return run_attack(g, x, prepare_attack(g, x, labels, split, cfg), cfg);
}

AttackResult run_attack(const Graph& g, const Features& x, const AttackSetup& setup, const AttackConfig& cfg) {
  cfg.validate();
  const std::size_t n = g.num_nodes();
  if (n < 2) throw InputError("attack: graph needs at least two nodes");
  const std::size_t k = std::min(cfg.gumbel_k ? cfg.gumbel_k : default_gumbel_k(g), n - 1);

  AttackResult r;
  r.setup = setup;
  r.q = init_log_prob(g, cfg.eps);
  Matrix buffer(n, n);
  auto& diag = r.diagnostics;

  for (int t = 0; t < cfg.iters; ++t) {
    SamplerOptions opts;
    if (cfg.explore_non_edges) opts.skip = &g;
    SampledGraph sampled = gumbel_top_k_sample(r.q, k, cfg.gumbel_tau, derive_seed(cfg.seed, 0x5eed, t), opts);
    if (cfg.force_original_edges) sampled.include_edges(g);
    const RelaxedGraph relaxed = sampled.relaxed(r.q);

    const SurrogateParams theta_hat = single_step_adapt(setup.theta, relaxed, cfg.alpha, x, setup.train_target);
    auto atk = loss_and_grads(theta_hat, x, relaxed, setup.attack_target, true);
    std::vector<double> grad = std::move(atk.d_q);
    for (auto& v : grad) v = -v;
    if (cfg.mode == HyperGradMode::fda && cfg.alpha != 0.0) {
      ParamGrad dir = std::move(atk.params);
      for (auto* m : {&dir.d_w1, &dir.d_w2})
        for (auto& v : m->values()) v = -v;
      const double dn = norm(dir);
      if (dn > 0.0) {
        const double step = cfg.delta ? *cfg.delta : 1e-2 / dn;
        const auto term = fda_mixed_term(setup.theta, dir, step, relaxed, x, setup.train_target);
        for (std::size_t p = 0; p < grad.size(); ++p) grad[p] -= cfg.alpha * term[p];
      }
    }

    diag.attack_loss.push_back(-atk.loss);
    diag.grad_norm.push_back(norm(grad));
    diag.sampling_error.push_back(sampling_error(r.q, sampled));

    update_q(r.q, to_directed(relaxed.pairs, grad), cfg.eta, cfg.momentum, buffer);
    if (cfg.q_max)
      for (auto& v : r.q.q.values()) v = std::min(v, *cfg.q_max);
  }
  return r;
}

}  // namespace dga
