#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "dga/gcn.hpp"
#include "dga/graph.hpp"

namespace dga {

/// Symmetric matrix of unnormalized edge log-probabilities. The diagonal is
/// pinned at log(eps).
struct LogProbMatrix {
  Matrix q;
  double log_eps = 0.0;

  std::size_t num_nodes() const { return q.rows(); }
  /// exp(Q) entrywise.
  Matrix probabilities() const;
};

/// Q0 = log(A + eps). Throws InputError when eps <= 0.
LogProbMatrix init_log_prob(const Graph& a_orig, double eps);

/// Result of one Gumbel top-k draw.
struct SampledGraph {
  std::size_t num_nodes = 0;
  /// Per-node sampled entries: min(k, candidates) Gumbel picks, sorted.
  std::vector<std::vector<NodeId>> selected;
  /// Symmetrized union of the picks (plus any force-included pairs), sorted, u < v.
  std::vector<Edge> pairs;

  /// Weighted view: pair weights exp(Q_uv) on `pairs`.
  RelaxedGraph relaxed(const LogProbMatrix& q) const;
  /// Adds the edges of g to `pairs` and each node's neighbours to its `selected` row.
  void include_edges(const Graph& g);
};

struct SamplerOptions {
  /// Drop the Gumbel noise, leaving a deterministic top-k of Q's rows.
  bool zero_noise = false;
  /// When set, pairs that are edges of this graph are not candidates; rows
  /// with fewer than k candidates keep all of them.
  const Graph* skip = nullptr;
};

/// Per row i, keeps the k largest (G_ij + Q_ij) / tau over j != i with
/// G_ij = -log(-log u), u ~ U(0,1). Rows draw from independent streams derived
/// from `seed`, so the result does not depend on the thread count.
SampledGraph gumbel_top_k_sample(const LogProbMatrix& q, std::size_t k, double tau, std::uint64_t seed,
                                 SamplerOptions opts = {});

/// theta_hat = theta - alpha * grad_theta l_train(theta, q~). Throws RuntimeError on a non-finite gradient.
SurrogateParams single_step_adapt(const SurrogateParams& theta, const RelaxedGraph& sampled, double alpha,
                                  const Features& x, const LossTarget& train_target);

/// Attack hyper-gradient with the mixed second-order term dropped:
/// grad_q L_atk(theta_hat, q) with L_atk = -(selected loss). Aligned with sampled.pairs.
std::vector<double> hyper_gradient_foa(const SurrogateParams& theta_hat, const RelaxedGraph& sampled,
                                       const Features& x, const LossTarget& attack_target);

/// Central difference (grad_q L_train(theta+, q) - grad_q L_train(theta-, q)) / (2 delta)
/// with theta+- = theta +- delta * direction. Zero when the direction vanishes.
std::vector<double> fda_mixed_term(const SurrogateParams& theta, const ParamGrad& direction, double delta,
                                   const RelaxedGraph& sampled, const Features& x, const LossTarget& train_target);

/// grad_q L_atk(theta_hat, q) - alpha * (finite-difference Hessian-vector term).
/// With no delta, the probe is 1e-2 / ||grad_theta L_atk(theta_hat, q)||.
std::vector<double> hyper_gradient_fda(const SurrogateParams& theta, const SurrogateParams& theta_hat,
                                       const RelaxedGraph& sampled, double alpha, std::optional<double> delta,
                                       const Features& x, const LossTarget& train_target,
                                       const LossTarget& attack_target);

/// One directed entry of a sparse gradient on Q.
struct QGradEntry {
  NodeId row = 0;
  NodeId col = 0;
  double value = 0.0;
};

/// buffer <- momentum * buffer + d_q;  Q <- sym(Q - eta * buffer);  diag(Q) <- log eps.
void update_q(LogProbMatrix& q, std::span<const QGradEntry> d_q, double eta, double momentum, Matrix& buffer);

/// Both directed entries for every pair of a pair-aligned gradient.
std::vector<QGradEntry> to_directed(const std::vector<Edge>& pairs, std::span<const double> grad);

/// ||q~ - q||_2 where q~ keeps only the per-node Gumbel picks off the diagonal.
double sampling_error(const LogProbMatrix& q, const SampledGraph& sampled);

enum class HyperGradMode { foa, fda };

struct AttackConfig {
  int iters = 200;
  double eta = 1e-3;
  double alpha = 1e-3;
  std::optional<double> delta;  // FDA probe; unset means relative 1e-2 / ||grad||
  std::size_t gumbel_k = 0;     // 0 means round(average degree)
  double gumbel_tau = 1.0;
  double momentum = 0.9;
  LossKind loss = LossKind::self_ce;
  HyperGradMode mode = HyperGradMode::foa;
  std::uint64_t seed = 0;
  double eps = 1e-8;
  bool force_original_edges = true;
  /// Gumbel picks come from each row's non-edges; edges enter via force_original_edges.
  bool explore_non_edges = true;
  /// Upper bound applied to Q after each update (0 keeps P <= 1); unset disables it.
  std::optional<double> q_max = 0.0;
  bool self_loss_includes_train = false;
  TrainConfig surrogate{};

  /// Throws InputError on an out-of-range field.
  void validate() const;
};

/// k used when AttackConfig::gumbel_k is 0: round(2|E| / N), at least 1.
std::size_t default_gumbel_k(const Graph& g);

struct AttackDiagnostics {
  std::vector<double> attack_loss;
  std::vector<double> grad_norm;
  std::vector<double> sampling_error;

  /// Mean of the squared sampling errors over the iterations.
  double avg_err() const;
};

/// Surrogate state shared by every attack iteration.
struct AttackSetup {
  SurrogateParams theta;
  LabelVector pseudo;
  LossTarget train_target;
  LossTarget attack_target;
};

AttackSetup prepare_attack(const Graph& g, const Features& x, const LabelVector& labels, const Split& split,
                           const AttackConfig& cfg);

struct AttackResult {
  LogProbMatrix q;
  AttackDiagnostics diagnostics;
  AttackSetup setup;
};

/// Runs cfg.iters rounds of sample -> adapt -> hyper-gradient -> update starting
/// from log(A + eps). No budget is enforced here.
AttackResult run_attack(const Graph& g, const Features& x, const LabelVector& labels, const Split& split,
                        const AttackConfig& cfg);
AttackResult run_attack(const Graph& g, const Features& x, const AttackSetup& setup, const AttackConfig& cfg);

}  // namespace dga
