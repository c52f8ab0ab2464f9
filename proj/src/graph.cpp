#include "robinit/graph.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string_view>

namespace robinit {

namespace {

std::vector<double> inverse_sqrt_degrees(const Matrix& b) {
  std::vector<double> s(b.rows(), 0.0);
  for (std::size_t i = 0; i < b.rows(); ++i) {
    double d = 0.0;
    for (double x : b.row(i)) d += x;
    s[i] = d > 0.0 ? 1.0 / std::sqrt(d) : 0.0;
  }
  return s;
}

Matrix with_self_loops(const Matrix& a, bool add_self_loops) {
  Matrix b = a;
  if (add_self_loops) {
    for (std::size_t i = 0; i < b.rows(); ++i) b(i, i) += 1.0;
  }
  return b;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

[[noreturn]] void parse_fail(const std::filesystem::path& file, std::size_t line,
                             const std::string& msg) {
  throw ParseError(file.filename().string() + ":" + std::to_string(line) + ": " + msg);
}

template <typename T>
T parse_number(std::string_view token, const std::filesystem::path& file, std::size_t line) {
  token = trim(token);
  T value{};
  const auto* first = token.data();
  const auto* last = token.data() + token.size();
  if (!token.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || token.empty()) {
    parse_fail(file, line, "cannot parse number '" + std::string(token) + "'");
  }
  return value;
}

std::ifstream open_input(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ParseError("missing dataset file: " + file.string());
  return in;
}

}  // namespace

const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
    case Split::kNone: break;
  }
  return "none";
}

std::size_t Graph::num_edges() const {
  std::size_t count = 0;
  for (std::size_t i = 0; i < adjacency.rows(); ++i)
    for (std::size_t j = i + 1; j < adjacency.cols(); ++j)
      if (adjacency(i, j) != 0.0) ++count;
  return count;
}

std::vector<std::size_t> Graph::mask(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < splits.size(); ++i)
    if (splits[i] == s) out.push_back(i);
  return out;
}

void Graph::validate() const {
  const std::size_t n = num_nodes();
  if (adjacency.rows() != n || adjacency.cols() != n) {
    throw GraphError("adjacency is not " + std::to_string(n) + "x" + std::to_string(n));
  }
  if (features.rows() != n) throw GraphError("features must have one row per node");
  if (splits.size() != n) throw GraphError("splits must have one entry per node");
  for (std::size_t i = 0; i < n; ++i) {
    if (adjacency(i, i) != 0.0) throw GraphError("adjacency has a self-loop at " + std::to_string(i));
    for (std::size_t j = i + 1; j < n; ++j) {
      const double a = adjacency(i, j);
      if (a != 0.0 && a != 1.0) throw GraphError("adjacency is not binary");
      if (a != adjacency(j, i)) throw GraphError("adjacency is not symmetric");
    }
  }
  for (int y : labels) {
    if (y < 0 || y >= num_classes) throw GraphError("label " + std::to_string(y) + " out of range");
  }
}

Matrix adjacency_from_edges(std::size_t n,
                            const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  Matrix a(n, n);
  for (const auto& [i, j] : edges) {
    if (i >= n || j >= n) throw GraphError("edge endpoint out of range");
    if (i == j) continue;
    a(i, j) = 1.0;
    a(j, i) = 1.0;
  }
  return a;
}

Matrix normalize_dense(const Matrix& adjacency, bool add_self_loops) {
  if (adjacency.rows() != adjacency.cols()) throw DimensionError("normalize_dense: not square");
  Matrix b = with_self_loops(adjacency, add_self_loops);
  const auto s = inverse_sqrt_degrees(b);
  for (std::size_t i = 0; i < b.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) b(i, j) *= s[i] * s[j];
  return b;
}

Matrix normalize_dense_backward(const Matrix& adjacency, const Matrix& grad_normalized,
                                bool add_self_loops) {
  const Matrix b = with_self_loops(adjacency, add_self_loops);
  if (grad_normalized.rows() != b.rows() || grad_normalized.cols() != b.cols()) {
    throw DimensionError("normalize_dense_backward: gradient shape mismatch");
  }
  const std::size_t n = b.rows();
  const auto s = inverse_sqrt_degrees(b);
  const Matrix& g = grad_normalized;

  // dL/d(degree_k) through s_k = degree_k^{-1/2}, which scales row k and column k.
  std::vector<double> grad_degree(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    if (s[k] == 0.0) continue;
    double via_s = 0.0;
    for (std::size_t j = 0; j < n; ++j) via_s += g(k, j) * b(k, j) * s[j];
    for (std::size_t i = 0; i < n; ++i) via_s += g(i, k) * b(i, k) * s[i];
    grad_degree[k] = via_s * (-0.5 * s[k] * s[k] * s[k]);
  }
  Matrix out(n, n);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t l = 0; l < n; ++l) out(k, l) = g(k, l) * s[k] * s[l] + grad_degree[k];
  return out;
}

NormalizedAdjacency normalize_adjacency(const Graph& g, bool add_self_loops) {
  NormalizedAdjacency na;
  na.ahat = normalize_dense(g.adjacency, add_self_loops);
  na.degrees.resize(g.num_nodes());
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    double d = add_self_loops ? 1.0 : 0.0;
    for (double x : g.adjacency.row(i)) d += x;
    na.degrees[i] = static_cast<int>(d);
  }
  return na;
}

WalkSums walk_sums(const NormalizedAdjacency& na, std::size_t length) {
  WalkSums ws;
  ws.length = length;
  ws.per_node = matrix_power_apply(na.ahat, length, Vector(na.ahat.rows(), 1.0));
  ws.total = ws.per_node.sum();
  return ws;
}

WalkSums walk_sums_bruteforce(const Graph& g, std::size_t length, bool add_self_loops) {
  const std::size_t n = g.num_nodes();
  if (n > kBruteforceMaxNodes || length > kBruteforceMaxLength) {
    throw std::invalid_argument("walk_sums_bruteforce: enumeration guard exceeded (n=" +
                                std::to_string(n) + ", length=" + std::to_string(length) + ")");
  }
  std::vector<double> degree(n, add_self_loops ? 1.0 : 0.0);
  std::vector<std::vector<std::size_t>> neighbors(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (add_self_loops) neighbors[i].push_back(i);
    for (std::size_t j = 0; j < n; ++j) {
      if (g.adjacency(i, j) != 0.0) {
        degree[i] += 1.0;
        neighbors[i].push_back(j);
      }
    }
    std::sort(neighbors[i].begin(), neighbors[i].end());
  }

  std::function<double(std::size_t, std::size_t)> walk = [&](std::size_t at, std::size_t left) {
    if (left == 0) return 1.0;
    double total = 0.0;
    for (std::size_t next : neighbors[at]) {
      const double weight = 1.0 / std::sqrt(degree[at] * degree[next]);
      total += weight * walk(next, left - 1);
    }
    return total;
  };

  WalkSums ws;
  ws.length = length;
  ws.per_node = Vector(n);
  for (std::size_t u = 0; u < n; ++u) ws.per_node[u] = walk(u, length);
  ws.total = ws.per_node.sum();
  return ws;
}

int max_degree(const Graph& g) {
  int best = 0;
  for (std::size_t i = 0; i < g.adjacency.rows(); ++i) {
    int d = 0;
    for (double x : g.adjacency.row(i)) d += x != 0.0 ? 1 : 0;
    best = std::max(best, d);
  }
  return best;
}

double feature_norm_bound(const Graph& g) {
  if (g.features.empty()) return 0.0;
  return spectral_norm_estimate(g.features);
}

Graph load_graph(const std::filesystem::path& dir) {
  Graph g;
  std::string line;

  {
    const auto file = dir / "labels.csv";
    auto in = open_input(file);
    std::size_t lineno = 0;
    int max_label = -1;
    while (std::getline(in, line)) {
      ++lineno;
      const auto t = trim(line);
      if (t.empty()) continue;
      const int y = parse_number<int>(t, file, lineno);
      if (y < 0) parse_fail(file, lineno, "label " + std::to_string(y) + " out of range");
      g.labels.push_back(y);
      max_label = std::max(max_label, y);
    }
    g.num_classes = max_label + 1;
  }
  const std::size_t n = g.labels.size();
  if (n == 0) throw ParseError("labels.csv: no nodes");

  {
    const auto file = dir / "features.csv";
    auto in = open_input(file);
    std::size_t lineno = 0;
    std::vector<double> values;
    std::size_t cols = 0;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto t = trim(line);
      if (t.empty()) continue;
      std::size_t count = 0;
      std::string_view rest = t;
      while (true) {
        const auto comma = rest.find(',');
        values.push_back(parse_number<double>(rest.substr(0, comma), file, lineno));
        ++count;
        if (comma == std::string_view::npos) break;
        rest.remove_prefix(comma + 1);
      }
      if (rows == 0) cols = count;
      if (count != cols) {
        parse_fail(file, lineno, "ragged row: expected " + std::to_string(cols) + " columns, got " +
                                     std::to_string(count));
      }
      ++rows;
    }
    if (rows != n) {
      parse_fail(file, lineno, "expected " + std::to_string(n) + " rows, got " + std::to_string(rows));
    }
    g.features = Matrix(rows, cols, std::move(values));
  }

  {
    const auto file = dir / "edges.tsv";
    auto in = open_input(file);
    std::size_t lineno = 0;
    g.adjacency = Matrix(n, n);
    while (std::getline(in, line)) {
      ++lineno;
      const auto t = trim(line);
      if (t.empty()) continue;
      const auto sep = t.find_first_of("\t ");
      if (sep == std::string_view::npos) parse_fail(file, lineno, "expected two node indices");
      const auto i = parse_number<std::size_t>(t.substr(0, sep), file, lineno);
      const auto j = parse_number<std::size_t>(trim(t.substr(sep + 1)), file, lineno);
      if (i >= n || j >= n) {
        parse_fail(file, lineno, "node index out of range (n=" + std::to_string(n) + ")");
      }
      if (i == j) continue;
      g.adjacency(i, j) = 1.0;
      g.adjacency(j, i) = 1.0;
    }
  }

  {
    const auto file = dir / "splits.csv";
    auto in = open_input(file);
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto t = trim(line);
      if (t.empty()) continue;
      if (t == "train") g.splits.push_back(Split::kTrain);
      else if (t == "val") g.splits.push_back(Split::kVal);
      else if (t == "test") g.splits.push_back(Split::kTest);
      else if (t == "none") g.splits.push_back(Split::kNone);
      else parse_fail(file, lineno, "unknown split '" + std::string(t) + "'");
    }
    if (g.splits.size() != n) {
      parse_fail(file, lineno, "expected " + std::to_string(n) + " entries, got " +
                                   std::to_string(g.splits.size()));
    }
  }

  g.validate();
  return g;
}

void save_graph(const Graph& g, const std::filesystem::path& dir) {
  g.validate();
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "edges.tsv");
    for (std::size_t i = 0; i < g.num_nodes(); ++i)
      for (std::size_t j = i + 1; j < g.num_nodes(); ++j)
        if (g.adjacency(i, j) != 0.0) out << i << '\t' << j << '\n';
  }
  {
    std::ofstream out(dir / "features.csv");
    for (std::size_t i = 0; i < g.features.rows(); ++i) {
      const auto r = g.features.row(i);
      for (std::size_t j = 0; j < r.size(); ++j) {
        if (j) out << ',';
        write_number(out, r[j]);
      }
      out << '\n';
    }
  }
  {
    std::ofstream out(dir / "labels.csv");
    for (int y : g.labels) out << y << '\n';
  }
  {
    std::ofstream out(dir / "splits.csv");
    for (Split s : g.splits) out << split_name(s) << '\n';
  }
}

Graph gen_sbm(const SbmParams& p) {
  if (!(p.p_out >= 0.0 && p.p_out <= p.p_in && p.p_in <= 1.0)) {
    throw std::invalid_argument("gen_sbm: need 0 <= p_out <= p_in <= 1");
  }
  if (p.num_classes < 1 || p.num_nodes == 0 ||
      p.num_nodes % static_cast<std::size_t>(p.num_classes) != 0) {
    throw std::invalid_argument("gen_sbm: num_nodes must be a positive multiple of num_classes");
  }
  if (p.feature_dim < static_cast<std::size_t>(p.num_classes)) {
    throw std::invalid_argument("gen_sbm: feature_dim must be >= num_classes");
  }
  const std::size_t n = p.num_nodes;
  const std::size_t block = n / static_cast<std::size_t>(p.num_classes);

  Graph g;
  g.num_classes = p.num_classes;
  g.labels.resize(n);
  g.splits.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    g.labels[i] = static_cast<int>(i / block);
    const std::size_t pos = i % block;
    const auto train = static_cast<std::size_t>(std::llround(0.6 * static_cast<double>(block)));
    const auto val = static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(block)));
    g.splits[i] = pos < train ? Split::kTrain : pos < train + val ? Split::kVal : Split::kTest;
  }

  std::mt19937_64 rng(p.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  g.adjacency = Matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double prob = g.labels[i] == g.labels[j] ? p.p_in : p.p_out;
      if (unit(rng) < prob) {
        g.adjacency(i, j) = 1.0;
        g.adjacency(j, i) = 1.0;
      }
    }
  }

  std::normal_distribution<double> noise(0.0, 1.0);
  g.features = Matrix(n, p.feature_dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < p.feature_dim; ++k) {
      g.features(i, k) = noise(rng) + (static_cast<int>(k) == g.labels[i] ? 1.0 : 0.0);
    }
  }
  return g;
}

Graph gen_blobs(const BlobParams& p) {
  if (p.num_classes < 1 || p.num_samples == 0 || p.feature_dim == 0) {
    throw std::invalid_argument("gen_blobs: need samples, classes and feature_dim >= 1");
  }
  if (!(p.center_scale >= 0.0) || !(p.spread >= 0.0)) {
    throw std::invalid_argument("gen_blobs: center_scale and spread must be >= 0");
  }
  const std::size_t n = p.num_samples;
  const auto classes = static_cast<std::size_t>(p.num_classes);
  std::mt19937_64 rng(p.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  Matrix centers(classes, p.feature_dim);
  for (auto& x : centers.data()) x = p.center_scale * normal(rng);

  Graph g;
  g.num_classes = p.num_classes;
  g.adjacency = Matrix(n, n);
  g.features = Matrix(n, p.feature_dim);
  g.labels.resize(n);
  g.splits.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % classes;
    g.labels[i] = static_cast<int>(c);
    const std::size_t pos = (i / classes) % 5;
    g.splits[i] = pos < 3 ? Split::kTrain : pos == 3 ? Split::kVal : Split::kTest;
    for (std::size_t k = 0; k < p.feature_dim; ++k) g.features(i, k) = centers(c, k) + p.spread * normal(rng);
  }
  return g;
}

Graph gen_erdos_renyi(std::size_t n, double p, std::uint64_t seed) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("gen_erdos_renyi: p outside [0, 1]");
  Graph g;
  g.num_classes = 1;
  g.labels.assign(n, 0);
  g.splits.assign(n, Split::kTrain);
  g.features = Matrix::identity(n);
  g.adjacency = Matrix(n, n);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (unit(rng) < p) {
        g.adjacency(i, j) = 1.0;
        g.adjacency(j, i) = 1.0;
      }
    }
  }
  return g;
}

}  // namespace robinit
