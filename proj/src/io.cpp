#include "dga/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "dga/error.hpp"

namespace dga {

namespace fs = std::filesystem;

namespace {

std::ifstream open_in(const std::string& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw InputError("cannot open " + path);
  return in;
}

std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode);
  if (!out) throw RuntimeError("cannot write " + path);
  return out;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

[[noreturn]] void bad_line(const std::string& path, std::size_t line, const std::string& why) {
  throw InputError(path + ":" + std::to_string(line) + ": " + why);
}

template <typename T>
T parse_number(const std::string& s, const std::string& path, std::size_t line) {
  T v{};
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) bad_line(path, line, "cannot parse '" + s + "' as a number");
  return v;
}

template <>
double parse_number<double>(const std::string& s, const std::string& path, std::size_t line) {
  if (s == "nan" || s == "NaN") return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) bad_line(path, line, "cannot parse '" + s + "' as a number");
  return v;
}

// Calls fn(fields, line_number) for every non-blank line.
template <typename Fn>
void for_each_row(const std::string& path, std::size_t expected_fields, Fn&& fn) {
  auto in = open_in(path);
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (trim(line).empty()) continue;
    auto f = split_fields(line);
    if (expected_fields && f.size() != expected_fields)
      bad_line(path, no, "expected " + std::to_string(expected_fields) + " fields, got " + std::to_string(f.size()));
    fn(f, no);
  }
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::vector<std::pair<std::size_t, std::size_t>> read_edges_csv(const std::string& path) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for_each_row(path, 2, [&](const auto& f, std::size_t no) {
    out.emplace_back(parse_number<std::size_t>(f[0], path, no), parse_number<std::size_t>(f[1], path, no));
  });
  return out;
}

void write_edges_csv(const std::string& path, const Graph& g) {
  auto out = open_out(path);
  for (const auto& e : g.edges()) out << e.u << ',' << e.v << '\n';
}

FeatureMatrix read_features_csv(const std::string& path) {
  std::vector<std::vector<double>> rows;
  for_each_row(path, 0, [&](const auto& f, std::size_t no) {
    if (!rows.empty() && f.size() != rows.front().size())
      bad_line(path, no, "row has " + std::to_string(f.size()) + " values, expected " +
                             std::to_string(rows.front().size()));
    std::vector<double> r;
    r.reserve(f.size());
    for (const auto& s : f) {
      const double v = parse_number<double>(s, path, no);
      if (!std::isfinite(v)) bad_line(path, no, "non-finite feature value");
      r.push_back(v);
    }
    rows.push_back(std::move(r));
  });
  FeatureMatrix x(rows.size(), rows.empty() ? 0 : rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy(rows[i].begin(), rows[i].end(), x.row(i).begin());
  return x;
}

FeatureMatrix read_features_triplet(const std::string& path, std::size_t num_nodes, std::size_t dims) {
  struct T {
    std::size_t node, dim;
    double value;
  };
  std::vector<T> entries;
  std::size_t max_node = 0, max_dim = 0;
  for_each_row(path, 3, [&](const auto& f, std::size_t no) {
    T t{parse_number<std::size_t>(f[0], path, no), parse_number<std::size_t>(f[1], path, no),
        parse_number<double>(f[2], path, no)};
    if (!std::isfinite(t.value)) bad_line(path, no, "non-finite feature value");
    if (num_nodes && t.node >= num_nodes) bad_line(path, no, "node index out of range");
    if (dims && t.dim >= dims) bad_line(path, no, "feature index out of range");
    max_node = std::max(max_node, t.node + 1);
    max_dim = std::max(max_dim, t.dim + 1);
    entries.push_back(t);
  });
  FeatureMatrix x(num_nodes ? num_nodes : max_node, dims ? dims : max_dim);
  for (const auto& t : entries) x(t.node, t.dim) = t.value;
  return x;
}

void write_features_csv(const std::string& path, const FeatureMatrix& x) {
  auto out = open_out(path);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) out << (j ? "," : "") << format_double(x(i, j));
    out << '\n';
  }
}

LabelVector read_labels_csv(const std::string& path, std::size_t num_nodes) {
  std::vector<std::pair<std::size_t, int>> rows;
  std::size_t n = num_nodes;
  for_each_row(path, 2, [&](const auto& f, std::size_t no) {
    const auto node = parse_number<std::size_t>(f[0], path, no);
    const auto label = parse_number<int>(f[1], path, no);
    if (label < 0) bad_line(path, no, "negative label");
    if (num_nodes && node >= num_nodes) bad_line(path, no, "node index out of range");
    n = std::max(n, node + 1);
    rows.emplace_back(node, label);
  });
  LabelVector out;
  out.labels.assign(n, -1);
  for (const auto& [node, label] : rows) {
    out.labels[node] = label;
    out.num_classes = std::max(out.num_classes, label + 1);
  }
  return out;
}

void write_labels_csv(const std::string& path, const LabelVector& labels) {
  auto out = open_out(path);
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] >= 0) out << i << ',' << labels[i] << '\n';
}

Split read_split_json(const std::string& path) {
  auto in = open_in(path);
  try {
    nlohmann::json j;
    in >> j;
    Split s;
    s.train = j.at("train").get<std::vector<NodeId>>();
    s.val = j.value("val", std::vector<NodeId>{});
    s.test = j.at("test").get<std::vector<NodeId>>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path + ": " + e.what());
  }
}

void write_split_json(const std::string& path, const Split& s) {
  auto out = open_out(path);
  out << nlohmann::json{{"train", s.train}, {"val", s.val}, {"test", s.test}}.dump() << '\n';
}

Split stratified_split(const LabelVector& labels, std::uint64_t seed, double train_frac, double val_frac) {
  std::vector<std::vector<NodeId>> by_class(static_cast<std::size_t>(std::max(labels.num_classes, 0)));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) throw InputError("split: node " + std::to_string(i) + " has no label");
    by_class[static_cast<std::size_t>(labels[i])].push_back(static_cast<NodeId>(i));
  }
  std::mt19937_64 rng(seed);
  Split s;
  for (auto& members : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    const double m = static_cast<double>(members.size());
    const auto n_train = static_cast<std::size_t>(std::llround(train_frac * m));
    const auto n_val = std::min(members.size() - n_train, static_cast<std::size_t>(std::llround(val_frac * m)));
    s.train.insert(s.train.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.val.insert(s.val.end(), members.begin() + static_cast<std::ptrdiff_t>(n_train),
                 members.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    s.test.insert(s.test.end(), members.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), members.end());
  }
  for (auto* v : {&s.train, &s.val, &s.test}) std::sort(v->begin(), v->end());
  return s;
}

Dataset finalize_dataset(const Graph& g, const FeatureMatrix& x, const LabelVector& labels,
                         const std::optional<Split>& split, bool identity_features, std::uint64_t split_seed) {
  auto lcc = largest_connected_component(g, x, labels);
  Dataset d;
  d.identity_features = identity_features;
  d.graph = std::move(lcc.graph);
  d.labels = std::move(lcc.labels);
  d.features = identity_features ? Matrix::identity(d.graph.num_nodes()) : std::move(lcc.features);
  if (split) {
    std::vector<std::int64_t> remap(g.num_nodes(), -1);
    for (std::size_t k = 0; k < lcc.id_map.size(); ++k) remap[lcc.id_map[k]] = static_cast<std::int64_t>(k);
    auto map_set = [&](const std::vector<NodeId>& in) {
      std::vector<NodeId> out;
      for (auto i : in) {
        if (i >= g.num_nodes()) throw InputError("split.json: node " + std::to_string(i) + " out of range");
        if (remap[i] >= 0) out.push_back(static_cast<NodeId>(remap[i]));
      }
      return out;
    };
    d.split = Split{map_set(split->train), map_set(split->val), map_set(split->test)};
    for (const auto* set : {&d.split.train, &d.split.val, &d.split.test})
      for (auto i : *set)
        if (d.labels[i] < 0) throw InputError("split: node " + std::to_string(i) + " has no label");
  } else {
    d.split = stratified_split(d.labels, split_seed);
  }
  d.split.validate(d.graph.num_nodes());
  return d;
}

Dataset ingest(const std::string& dir, std::uint64_t split_seed) {
  const fs::path root(dir);
  const auto edges_path = root / "edges.csv";
  const auto labels_path = root / "labels.csv";
  if (!fs::exists(edges_path)) throw InputError("missing " + edges_path.string());
  if (!fs::exists(labels_path)) throw InputError("missing " + labels_path.string());

  const auto edge_list = read_edges_csv(edges_path.string());
  LabelVector labels = read_labels_csv(labels_path.string());
  std::size_t n = labels.size();
  for (const auto& [a, b] : edge_list) n = std::max({n, a + 1, b + 1});

  FeatureMatrix x;
  bool identity = false;
  if (fs::exists(root / "features.csv")) {
    x = read_features_csv((root / "features.csv").string());
  } else if (fs::exists(root / "features.triplet")) {
    x = read_features_triplet((root / "features.triplet").string(), n);
  } else {
    identity = true;
  }
  if (!identity) {
    if (x.rows() < n) throw InputError("features cover " + std::to_string(x.rows()) + " of " + std::to_string(n) + " nodes");
    n = x.rows();
  } else {
    x = Matrix(n, 0);
  }
  labels.labels.resize(n, -1);

  std::optional<Split> split;
  if (fs::exists(root / "split.json")) split = read_split_json((root / "split.json").string());
  return finalize_dataset(build_graph(edge_list, n), x, labels, split, identity, split_seed);
}

void write_dataset(const std::string& dir, const Dataset& d) {
  fs::create_directories(dir);
  const fs::path root(dir);
  write_edges_csv((root / "edges.csv").string(), d.graph);
  write_labels_csv((root / "labels.csv").string(), d.labels);
  if (!d.identity_features) write_features_csv((root / "features.csv").string(), d.features);
  write_split_json((root / "split.json").string(), d.split);
}

SbmGraph generate_sbm(std::size_t n, std::size_t blocks, double p_in, double p_out, std::uint64_t seed) {
  if (blocks == 0 || n < blocks) throw InputError("sbm: every block needs at least one node");
  if (!(0.0 <= p_out && p_out < p_in && p_in <= 1.0)) throw InputError("sbm: need 0 <= p_out < p_in <= 1");
  SbmGraph out;
  out.labels.num_classes = static_cast<int>(blocks);
  out.labels.labels.resize(n);
  const std::size_t base = n / blocks, extra = n % blocks;
  std::size_t node = 0;
  for (std::size_t b = 0; b < blocks; ++b)
    for (std::size_t k = 0; k < base + (b < extra ? 1 : 0); ++k) out.labels.labels[node++] = static_cast<int>(b);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double p = out.labels[i] == out.labels[j] ? p_in : p_out;
      if (unif(rng) < p) edges.push_back(Edge{static_cast<NodeId>(i), static_cast<NodeId>(j)});
    }
  out.graph = Graph(n, std::move(edges));

  std::normal_distribution<double> noise(0.0, 0.1);
  out.features = Matrix(n, blocks);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t b = 0; b < blocks; ++b)
      out.features(i, b) = (static_cast<int>(b) == out.labels[i] ? 1.0 : 0.0) + noise(rng);
  return out;
}

void write_perturbations_csv(const std::string& path, const PerturbationSet& p) {
  auto out = open_out(path);
  for (const auto& f : p.flips) out << f.u << ',' << f.v << ',' << (f.op == FlipOp::add ? "add" : "remove") << '\n';
}

PerturbationSet read_perturbations_csv(const std::string& path) {
  PerturbationSet p;
  for_each_row(path, 3, [&](const auto& f, std::size_t no) {
    Flip flip;
    const auto a = parse_number<NodeId>(f[0], path, no), b = parse_number<NodeId>(f[1], path, no);
    flip.u = std::min(a, b);
    flip.v = std::max(a, b);
    if (f[2] == "add") flip.op = FlipOp::add;
    else if (f[2] == "remove") flip.op = FlipOp::remove;
    else bad_line(path, no, "op must be 'add' or 'remove'");
    p.flips.push_back(flip);
  });
  return p;
}

void write_diagnostics_csv(const std::string& path, const AttackDiagnostics& d) {
  auto out = open_out(path);
  out << "iter,attack_loss,grad_norm,sampling_error\n";
  for (std::size_t t = 0; t < d.attack_loss.size(); ++t)
    out << t << ',' << format_double(d.attack_loss[t]) << ',' << format_double(d.grad_norm[t]) << ','
        << format_double(d.sampling_error[t]) << '\n';
}

AttackDiagnostics read_diagnostics_csv(const std::string& path) {
  AttackDiagnostics d;
  bool header = true;
  for_each_row(path, 4, [&](const auto& f, std::size_t no) {
    if (header) {
      header = false;
      if (f[0] == "iter") return;
    }
    d.attack_loss.push_back(parse_number<double>(f[1], path, no));
    d.grad_norm.push_back(parse_number<double>(f[2], path, no));
    d.sampling_error.push_back(parse_number<double>(f[3], path, no));
  });
  return d;
}

void write_qmatrix(const std::string& path, const Matrix& q) {
  static_assert(std::endian::native == std::endian::little, "qmatrix.bin writer assumes a little-endian host");
  if (q.rows() != q.cols()) throw InputError("qmatrix: matrix must be square");
  auto out = open_out(path, std::ios::binary);
  const std::uint64_t n = q.rows();
  out.write(reinterpret_cast<const char*>(&n), sizeof n);
  out.write(reinterpret_cast<const char*>(q.values().data()), static_cast<std::streamsize>(q.size() * sizeof(double)));
  if (!out) throw RuntimeError("write failed: " + path);
}

Matrix read_qmatrix(const std::string& path) {
  auto in = open_in(path, std::ios::binary);
  std::uint64_t n = 0;
  if (!in.read(reinterpret_cast<char*>(&n), sizeof n)) throw InputError(path + ": truncated header");
  const auto expected = static_cast<std::uintmax_t>(sizeof n + n * n * sizeof(double));
  if (fs::file_size(path) != expected) throw InputError(path + ": size does not match the N in its header");
  Matrix q(n, n);
  in.read(reinterpret_cast<char*>(q.values().data()), static_cast<std::streamsize>(q.size() * sizeof(double)));
  return q;
}

}  // namespace dga
