#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dga/graph.hpp"
#include "dga/kernels.hpp"

namespace dga {

/// Node features plus a sparse copy used for the X*W and X^T*G products.
class Features {
 public:
  Features() = default;
  explicit Features(FeatureMatrix x);

  std::size_t rows() const { return sparse_.rows; }
  std::size_t cols() const { return sparse_.cols; }
  /// The matrix as constructed (without dropout).
  const FeatureMatrix& dense() const { return *dense_; }

  Matrix times(const Matrix& w) const;
  Matrix transpose_times(const Matrix& g) const;

  /// Inverted dropout on the non-zero entries; keeps the surviving values scaled by 1/(1-p).
  template <typename Rng>
  Features dropout(double p, Rng& rng) const;

 private:
  std::shared_ptr<const FeatureMatrix> dense_ = std::make_shared<FeatureMatrix>();
  CsrRect sparse_;
};

/// Weights of the two-layer GCN  logits = A relu(A X W1) W2.
struct SurrogateParams {
  Matrix w1;  // D x H
  Matrix w2;  // H x C

  std::size_t hidden() const { return w1.cols(); }
  bool operator==(const SurrogateParams&) const = default;
};

enum class LossKind { train_ce, self_ce };

/// Labels and node mask the cross-entropy is averaged over.
struct LossTarget {
  std::vector<int> labels;
  std::vector<NodeId> mask;
};

/// train_ce: true labels on the train split. self_ce: pseudo-labels on the
/// unlabeled nodes (all nodes when self_includes_train is set).
LossTarget make_loss_target(LossKind kind, const LabelVector& labels, const Split& split,
                            const LabelVector* pseudo = nullptr, bool self_includes_train = false);

/// Intermediates kept for the backward pass.
struct ForwardPass {
  Matrix xw;      // X W1
  Matrix z1;      // A X W1
  Matrix hidden;  // relu(z1), after dropout when enabled
  Matrix hw;      // hidden W2
  Matrix logits;  // A hidden W2
  Matrix hidden_scale;  // dropout multipliers (0 or 1/(1-p)); empty without dropout
};

/// `rng` enables inverted dropout on the hidden layer with rate `hidden_dropout`.
ForwardPass forward_pass(const SurrogateParams& params, const Features& x, const CsrMatrix& adj,
                         double hidden_dropout = 0.0, std::mt19937_64* rng = nullptr);
Matrix forward(const SurrogateParams& params, const Features& x, const CsrMatrix& adj);
Matrix forward(const SurrogateParams& params, const FeatureMatrix& x, const Matrix& norm_adj);

double cross_entropy(const Matrix& logits, std::span<const int> labels, std::span<const NodeId> mask);
double cross_entropy(const Matrix& logits, const LossTarget& target);

/// Gradient of the mean cross-entropy with respect to the logits.
Matrix cross_entropy_grad(const Matrix& logits, const LossTarget& target);

double accuracy(const Matrix& logits, const LabelVector& labels, std::span<const NodeId> nodes);

/// Rowwise argmax; ties go to the lowest class index.
std::vector<int> argmax_rows(const Matrix& logits);

struct ParamGrad {
  Matrix d_w1;
  Matrix d_w2;
};

ParamGrad grad_params(const SurrogateParams& params, const Features& x, const CsrMatrix& adj,
                      const LossTarget& target);

/// Backward pass from the logit gradient of a recorded forward pass.
ParamGrad backward_params(const SurrogateParams& params, const Features& x, const CsrMatrix& adj,
                          const ForwardPass& fp, const Matrix& d_logits);

/// A symmetric graph whose pair weights are exp(q): the relaxed input of the
/// attack. `pairs` are unique with u < v; `q[k]` belongs to `pairs[k]`.
struct RelaxedGraph {
  std::size_t num_nodes = 0;
  std::vector<Edge> pairs;
  std::vector<double> q;

  std::vector<WeightedEdge> weighted() const;
  CsrMatrix normalized() const;
};

/// d loss / d q for every pair of g, through the exp weights and the symmetric
/// normalization. Result is aligned with g.pairs.
std::vector<double> grad_edge_logprobs(const SurrogateParams& params, const Features& x, const RelaxedGraph& g,
                                       const LossTarget& target);

struct LossAndGrads {
  double loss = 0.0;
  ParamGrad params;
  std::vector<double> d_q;  // aligned with RelaxedGraph::pairs; empty unless requested
};

LossAndGrads loss_and_grads(const SurrogateParams& params, const Features& x, const RelaxedGraph& g,
                            const LossTarget& target, bool want_edges);

struct TrainConfig {
  double lr = 1e-2;
  double weight_decay = 5e-4;
  int epochs = 200;
  std::size_t hidden = 16;
  double dropout = 0.0;
  std::uint64_t seed = 0;
};

struct TrainResult {
  SurrogateParams params;
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::vector<double> val_acc;
  int best_epoch = -1;
};

/// Glorot-uniform initialization.
SurrogateParams init_params(std::size_t in_dim, std::size_t hidden, std::size_t classes, std::uint64_t seed);

/// Adam on the train cross-entropy; returns the weights of the epoch with the
/// best validation accuracy, ties going to the lower validation loss. Throws RuntimeError on a non-finite loss.
TrainResult train_gcn(const CsrMatrix& adj, const Features& x, const LabelVector& labels, const Split& split,
                      const TrainConfig& cfg);
TrainResult train_surrogate(const Graph& g, const Features& x, const LabelVector& labels, const Split& split,
                            const TrainConfig& cfg);

/// Clean-graph argmax for unlabeled nodes; train nodes keep their true label.
LabelVector pseudo_labels(const SurrogateParams& params, const Graph& g, const Features& x,
                          const LabelVector& labels, const Split& split);

void save_checkpoint(const std::string& path, const SurrogateParams& params, const TrainConfig& cfg);
std::pair<SurrogateParams, TrainConfig> load_checkpoint(const std::string& path);

// --- template definitions ---

template <typename Rng>
Features Features::dropout(double p, Rng& rng) const {
  Features out = *this;
  if (p <= 0.0) return out;
  const double scale = 1.0 / (1.0 - p);
  std::bernoulli_distribution drop(p);
  for (auto& v : out.sparse_.values) v = drop(rng) ? 0.0 : v * scale;
  return out;
}

}  // namespace dga
