#include "dga/gcn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "dga/error.hpp"

namespace dga {

namespace {

struct Backward {
  ParamGrad params;
  Matrix d_z1;  // gradient at the pre-activation of layer one
};

Backward backward(const SurrogateParams& p, const Features& x, const CsrMatrix& adj, const ForwardPass& fp,
                  const Matrix& d_logits) {
  Backward b;
  const Matrix d_hw = kernels::spmm(adj, d_logits);
  b.params.d_w2 = kernels::matmul_tn(fp.hidden, d_hw);
  Matrix d_hidden = kernels::matmul_nt(d_hw, p.w2);
  auto& dh = d_hidden.values();
  const auto& z = fp.z1.values();
  for (std::size_t i = 0; i < dh.size(); ++i) {
    if (z[i] <= 0.0) dh[i] = 0.0;
    else if (!fp.hidden_scale.empty()) dh[i] *= fp.hidden_scale.values()[i];
  }
  b.d_z1 = std::move(d_hidden);
  const Matrix d_xw = kernels::spmm(adj, b.d_z1);
  b.params.d_w1 = x.transpose_times(d_xw);
  return b;
}

void check_shapes(const SurrogateParams& p, const Features& x, std::size_t n) {
  if (x.rows() != n)
    throw InputError("forward: feature rows (" + std::to_string(x.rows()) + ") != nodes (" + std::to_string(n) + ")");
  if (p.w1.rows() != x.cols())
    throw InputError("forward: W1 rows (" + std::to_string(p.w1.rows()) + ") != feature dim (" +
                     std::to_string(x.cols()) + ")");
  if (p.w2.rows() != p.w1.cols()) throw InputError("forward: W1/W2 hidden dimension mismatch");
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::size_t csr_find(const CsrMatrix& s, std::size_t row, std::size_t col) {
  auto first = s.col_idx.begin() + static_cast<std::ptrdiff_t>(s.row_ptr[row]);
  auto last = s.col_idx.begin() + static_cast<std::ptrdiff_t>(s.row_ptr[row + 1]);
  auto it = std::lower_bound(first, last, col);
  return static_cast<std::size_t>(it - s.col_idx.begin());
}

nlohmann::json matrix_json(const Matrix& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.values()}};
}

Matrix matrix_from_json(const nlohmann::json& j) {
  Matrix m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
  auto data = j.at("data").get<std::vector<double>>();
  if (data.size() != m.size()) throw InputError("checkpoint: matrix data length does not match its shape");
  m.values() = std::move(data);
  return m;
}

}  // namespace

Features::Features(FeatureMatrix x)
    : dense_(std::make_shared<FeatureMatrix>(std::move(x))), sparse_(CsrRect::from_dense(*dense_)) {}

Matrix Features::times(const Matrix& w) const { return kernels::spmm(sparse_, w); }
Matrix Features::transpose_times(const Matrix& g) const { return kernels::spmm_tn(sparse_, g); }

LossTarget make_loss_target(LossKind kind, const LabelVector& labels, const Split& split, const LabelVector* pseudo,
                            bool self_includes_train) {
  LossTarget t;
  if (kind == LossKind::train_ce) {
    t.labels = labels.labels;
    t.mask = split.train;
    return t;
  }
  if (!pseudo) throw InputError("self-training loss requires pseudo-labels");
  t.labels = pseudo->labels;
  if (self_includes_train) {
    t.mask.resize(labels.size());
    for (std::size_t i = 0; i < t.mask.size(); ++i) t.mask[i] = static_cast<NodeId>(i);
  } else {
    t.mask = split.unlabeled(labels.size());
  }
  return t;
}

ForwardPass forward_pass(const SurrogateParams& p, const Features& x, const CsrMatrix& adj, double hidden_dropout,
                         std::mt19937_64* rng) {
  check_shapes(p, x, adj.n);
  ForwardPass fp;
  fp.xw = x.times(p.w1);
  fp.z1 = kernels::spmm(adj, fp.xw);
  fp.hidden = fp.z1;
  for (auto& v : fp.hidden.values()) v = v > 0.0 ? v : 0.0;
  if (rng && hidden_dropout > 0.0) {
    fp.hidden_scale = Matrix(fp.hidden.rows(), fp.hidden.cols());
    std::bernoulli_distribution drop(hidden_dropout);
    const double keep = 1.0 / (1.0 - hidden_dropout);
    auto& h = fp.hidden.values();
    auto& s = fp.hidden_scale.values();
    for (std::size_t i = 0; i < h.size(); ++i) {
      s[i] = drop(*rng) ? 0.0 : keep;
      h[i] *= s[i];
    }
  }
  fp.hw = kernels::matmul(fp.hidden, p.w2);
  fp.logits = kernels::spmm(adj, fp.hw);
  return fp;
}

Matrix forward(const SurrogateParams& p, const Features& x, const CsrMatrix& adj) {
  return forward_pass(p, x, adj).logits;
}

Matrix forward(const SurrogateParams& p, const FeatureMatrix& x, const Matrix& norm_adj) {
  if (norm_adj.rows() != norm_adj.cols()) throw InputError("forward: adjacency must be square");
  CsrMatrix s;
  s.n = norm_adj.rows();
  for (std::size_t i = 0; i < s.n; ++i) {
    for (std::size_t j = 0; j < s.n; ++j) {
      if (norm_adj(i, j) != 0.0) {
        s.col_idx.push_back(j);
        s.values.push_back(norm_adj(i, j));
      }
    }
    s.row_ptr.push_back(s.col_idx.size());
  }
  return forward(p, Features(x), s);
}

double cross_entropy(const Matrix& logits, std::span<const int> labels, std::span<const NodeId> mask) {
  if (mask.empty()) throw InputError("cross_entropy: empty node mask");
  double total = 0.0;
  for (auto i : mask) {
    auto row = logits.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    total += std::log(z) + mx - row[static_cast<std::size_t>(labels[i])];
  }
  return total / static_cast<double>(mask.size());
}

double cross_entropy(const Matrix& logits, const LossTarget& t) { return cross_entropy(logits, t.labels, t.mask); }

Matrix cross_entropy_grad(const Matrix& logits, const LossTarget& t) {
  if (t.mask.empty()) throw InputError("cross_entropy: empty node mask");
  Matrix g(logits.rows(), logits.cols());
  const double inv = 1.0 / static_cast<double>(t.mask.size());
  for (auto i : t.mask) {
    auto row = logits.row(i);
    auto out = g.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (std::size_t c = 0; c < row.size(); ++c) {
      out[c] = std::exp(row[c] - mx);
      z += out[c];
    }
    for (auto& v : out) v = v / z * inv;
    out[static_cast<std::size_t>(t.labels[i])] -= inv;
  }
  return g;
}

std::vector<int> argmax_rows(const Matrix& logits) {
  std::vector<int> out(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto row = logits.row(i);
    out[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

double accuracy(const Matrix& logits, const LabelVector& labels, std::span<const NodeId> nodes) {
  if (nodes.empty()) return 0.0;
  std::size_t hit = 0;
  for (auto i : nodes) {
    auto row = logits.row(i);
    const auto pred = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    hit += pred == labels[i];
  }
  return static_cast<double>(hit) / static_cast<double>(nodes.size());
}

ParamGrad backward_params(const SurrogateParams& p, const Features& x, const CsrMatrix& adj, const ForwardPass& fp,
                          const Matrix& d_logits) {
  return backward(p, x, adj, fp, d_logits).params;
}

ParamGrad grad_params(const SurrogateParams& p, const Features& x, const CsrMatrix& adj, const LossTarget& target) {
  const auto fp = forward_pass(p, x, adj);
  return backward(p, x, adj, fp, cross_entropy_grad(fp.logits, target)).params;
}

std::vector<WeightedEdge> RelaxedGraph::weighted() const {
  std::vector<WeightedEdge> w(pairs.size());
  for (std::size_t k = 0; k < pairs.size(); ++k) w[k] = {pairs[k].u, pairs[k].v, std::exp(q[k])};
  return w;
}

CsrMatrix RelaxedGraph::normalized() const { return gcn_normalize_sparse(num_nodes, weighted()); }

LossAndGrads loss_and_grads(const SurrogateParams& p, const Features& x, const RelaxedGraph& g,
                            const LossTarget& target, bool want_edges) {
  if (g.q.size() != g.pairs.size()) throw InputError("relaxed graph: q and pairs differ in length");
  const auto weights = g.weighted();
  const CsrMatrix adj = gcn_normalize_sparse(g.num_nodes, weights);
  const auto fp = forward_pass(p, x, adj);
  const Matrix d_logits = cross_entropy_grad(fp.logits, target);
  auto b = backward(p, x, adj, fp, d_logits);

  LossAndGrads out;
  out.loss = cross_entropy(fp.logits, target);
  out.params = std::move(b.params);
  if (!want_edges) return out;

  // Gradient w.r.t. each stored entry of the normalized adjacency:
  //   dL/dA_ij = <dlogits_i, hw_j> + <dz1_i, xw_j>
  const std::size_t n = g.num_nodes;
  const Matrix& d_z1 = b.d_z1;
  std::vector<double> e(adj.nnz());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = adj.row_ptr[i]; k < adj.row_ptr[i + 1]; ++k) {
      const auto j = adj.col_idx[k];
      e[k] = dot(d_logits.row(i), fp.hw.row(j)) + dot(d_z1.row(i), fp.xw.row(j));
    }

  std::vector<double> deg(n, 1.0);
  for (const auto& w : weights) {
    deg[w.u] += w.w;
    deg[w.v] += w.w;
  }
  // A_ij = (W+I)_ij / sqrt(d_i d_j), so dA_ij/dd_i = -A_ij / (2 d_i) for both A_ij and A_ji.
  std::vector<double> d_deg(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = adj.row_ptr[i]; k < adj.row_ptr[i + 1]; ++k) {
      const double c = e[k] * adj.values[k];
      d_deg[i] += c;
      d_deg[adj.col_idx[k]] += c;
    }
  for (std::size_t i = 0; i < n; ++i) d_deg[i] *= -0.5 / deg[i];

  out.d_q.resize(g.pairs.size());
  for (std::size_t k = 0; k < g.pairs.size(); ++k) {
    const auto [u, v] = g.pairs[k];
    const double w = weights[k].w;
    const double e_uv = e[csr_find(adj, u, v)];
    const double e_vu = e[csr_find(adj, v, u)];
    // exp chain: dw/dq = w
    out.d_q[k] = w * ((e_uv + e_vu) / std::sqrt(deg[u] * deg[v]) + d_deg[u] + d_deg[v]);
  }
  return out;
}

std::vector<double> grad_edge_logprobs(const SurrogateParams& p, const Features& x, const RelaxedGraph& g,
                                       const LossTarget& target) {
  return loss_and_grads(p, x, g, target, true).d_q;
}

SurrogateParams init_params(std::size_t in_dim, std::size_t hidden, std::size_t classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto glorot = [&](std::size_t r, std::size_t c) {
    Matrix m(r, c);
    const double a = std::sqrt(6.0 / static_cast<double>(r + c));
    std::uniform_real_distribution<double> u(-a, a);
    for (auto& v : m.values()) v = u(rng);
    return m;
  };
  SurrogateParams p;
  p.w1 = glorot(in_dim, hidden);
  p.w2 = glorot(hidden, classes);
  return p;
}

TrainResult train_gcn(const CsrMatrix& adj, const Features& x, const LabelVector& labels, const Split& split,
                      const TrainConfig& cfg) {
  split.validate(labels.size());
  if (labels.num_classes <= 0) throw InputError("train: number of classes must be positive");
  TrainResult r;
  r.params = init_params(x.cols(), cfg.hidden, static_cast<std::size_t>(labels.num_classes), cfg.seed);
  if (cfg.epochs <= 0) return r;

  const LossTarget train_target = make_loss_target(LossKind::train_ce, labels, split);
  LossTarget val_target{labels.labels, split.val};
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

  SurrogateParams best = r.params;
  double best_acc = -1.0, best_val_loss = std::numeric_limits<double>::infinity();
  Matrix* weights[2] = {&r.params.w1, &r.params.w2};
  Matrix m[2] = {Matrix(r.params.w1.rows(), r.params.w1.cols()), Matrix(r.params.w2.rows(), r.params.w2.cols())};
  Matrix v[2] = {m[0], m[1]};
  constexpr double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    ForwardPass fp;
    ParamGrad grad;
    if (cfg.dropout > 0.0) {
      const Features xd = x.dropout(cfg.dropout, rng);
      fp = forward_pass(r.params, xd, adj, cfg.dropout, &rng);
      grad = backward_params(r.params, xd, adj, fp, cross_entropy_grad(fp.logits, train_target));
    } else {
      fp = forward_pass(r.params, x, adj);
      grad = backward_params(r.params, x, adj, fp, cross_entropy_grad(fp.logits, train_target));
    }
    const double loss = cross_entropy(fp.logits, train_target);
    if (!std::isfinite(loss)) {
      std::ostringstream msg;
      msg << "training diverged at epoch " << epoch << " (loss " << loss << "); loss trace:";
      for (double l : r.train_loss) msg << ' ' << l;
      throw RuntimeError(msg.str());
    }
    r.train_loss.push_back(loss);

    const Matrix* grads[2] = {&grad.d_w1, &grad.d_w2};
    const double t = epoch + 1;
    const double c1 = 1.0 - std::pow(beta1, t), c2 = 1.0 - std::pow(beta2, t);
    for (int k = 0; k < 2; ++k) {
      auto& w = weights[k]->values();
      const auto& g = grads[k]->values();
      auto& mk = m[k].values();
      auto& vk = v[k].values();
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = g[i] + cfg.weight_decay * w[i];
        mk[i] = beta1 * mk[i] + (1.0 - beta1) * gi;
        vk[i] = beta2 * vk[i] + (1.0 - beta2) * gi * gi;
        w[i] -= cfg.lr * (mk[i] / c1) / (std::sqrt(vk[i] / c2) + adam_eps);
      }
    }

    const Matrix logits = forward(r.params, x, adj);
    const double acc = split.val.empty() ? 0.0 : accuracy(logits, labels, split.val);
    r.val_acc.push_back(acc);
    const double val_loss = split.val.empty() ? 0.0 : cross_entropy(logits, val_target);
    r.val_loss.push_back(val_loss);
    if (split.val.empty() || acc > best_acc || (acc == best_acc && val_loss < best_val_loss)) {
      best_acc = acc;
      best_val_loss = val_loss;
      best = r.params;
      r.best_epoch = epoch;
    }
  }
  r.params = std::move(best);
  return r;
}

TrainResult train_surrogate(const Graph& g, const Features& x, const LabelVector& labels, const Split& split,
                            const TrainConfig& cfg) {
  return train_gcn(gcn_normalize_sparse(g), x, labels, split, cfg);
}

LabelVector pseudo_labels(const SurrogateParams& p, const Graph& g, const Features& x, const LabelVector& labels,
                          const Split& split) {
  const auto pred = argmax_rows(forward(p, x, gcn_normalize_sparse(g)));
  LabelVector out{pred, labels.num_classes};
  for (auto i : split.train) out.labels[i] = labels[i];
  return out;
}

void save_checkpoint(const std::string& path, const SurrogateParams& p, const TrainConfig& cfg) {
  nlohmann::json j;
  j["w1"] = matrix_json(p.w1);
  j["w2"] = matrix_json(p.w2);
  j["hyper"] = {{"lr", cfg.lr},           {"weight_decay", cfg.weight_decay}, {"epochs", cfg.epochs},
                {"hidden", cfg.hidden},   {"dropout", cfg.dropout},           {"seed", cfg.seed}};
  std::ofstream out(path);
  if (!out) throw RuntimeError("cannot write checkpoint " + path);
  out << j.dump(2) << '\n';
}

std::pair<SurrogateParams, TrainConfig> load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open checkpoint " + path);
  nlohmann::json j;
  try {
    in >> j;
    SurrogateParams p{matrix_from_json(j.at("w1")), matrix_from_json(j.at("w2"))};
    if (p.w1.cols() != p.w2.rows()) throw InputError("checkpoint: W1/W2 hidden dimension mismatch");
    const auto& h = j.at("hyper");
    TrainConfig cfg;
    cfg.lr = h.at("lr").get<double>();
    cfg.weight_decay = h.at("weight_decay").get<double>();
    cfg.epochs = h.at("epochs").get<int>();
    cfg.hidden = h.at("hidden").get<std::size_t>();
    cfg.dropout = h.at("dropout").get<double>();
    cfg.seed = h.at("seed").get<std::uint64_t>();
    return {std::move(p), cfg};
  } catch (const nlohmann::json::exception& e) {
    throw InputError("checkpoint " + path + ": " + e.what());
  }
}

}  // namespace dga
