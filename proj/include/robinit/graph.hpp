#ifndef ROBINIT_GRAPH_HPP_
#define ROBINIT_GRAPH_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "robinit/linalg.hpp"

namespace robinit {

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class GraphError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Split : std::uint8_t { kNone, kTrain, kVal, kTest };

const char* split_name(Split s);

// Node-classification graph. Each node sits in exactly one split, which makes
// the train/val/test masks disjoint by construction.
struct Graph {
  Matrix adjacency;  // symmetric, binary, zero diagonal
  Matrix features;   // n x d
  std::vector<int> labels;
  std::vector<Split> splits;
  int num_classes = 0;

  std::size_t num_nodes() const { return labels.size(); }
  std::size_t feature_dim() const { return features.cols(); }
  std::size_t num_edges() const;

  /// Node indices in ascending order.
  std::vector<std::size_t> mask(Split s) const;

  /// Throws GraphError naming the first violated invariant.
  void validate() const;
};

struct NormalizedAdjacency {
  Matrix ahat;
  std::vector<int> degrees;
};

struct WalkSums {
  std::size_t length = 0;
  Vector per_node;
  double total = 0.0;
};

/// D^{-1/2} A D^{-1/2}, optionally on A + I. Isolated nodes get zero rows.
NormalizedAdjacency normalize_adjacency(const Graph& g, bool add_self_loops = false);

/// Symmetric normalization of a real-valued (possibly relaxed) adjacency,
/// with degrees taken as row sums. Used by the structural attack.
Matrix normalize_dense(const Matrix& adjacency, bool add_self_loops = false);

/// Pulls a gradient with respect to normalize_dense's output back onto its
/// input, treating every entry of `adjacency` as an independent variable.
Matrix normalize_dense_backward(const Matrix& adjacency, const Matrix& grad_normalized,
                                bool add_self_loops = false);

/// Entry u is the total weight of length-`length` walks starting at u, each
/// walk weighted by the product of Â entries along it (Â^length · 1).
WalkSums walk_sums(const NormalizedAdjacency& na, std::size_t length);

inline constexpr std::size_t kBruteforceMaxNodes = 12;
inline constexpr std::size_t kBruteforceMaxLength = 6;

/// Same quantity as walk_sums by explicit walk enumeration. Refuses graphs
/// larger than kBruteforceMaxNodes or walks longer than kBruteforceMaxLength.
WalkSums walk_sums_bruteforce(const Graph& g, std::size_t length, bool add_self_loops = false);

int max_degree(const Graph& g);

/// ‖X‖₂, the feature bound B.
double feature_norm_bound(const Graph& g);

// Dataset directory: edges.tsv, features.csv, labels.csv, splits.csv.
Graph load_graph(const std::filesystem::path& dir);
void save_graph(const Graph& g, const std::filesystem::path& dir);

struct SbmParams {
  std::size_t num_nodes = 200;
  int num_classes = 4;
  double p_in = 0.1;
  double p_out = 0.01;
  std::size_t feature_dim = 16;
  std::uint64_t seed = 0;
};

/// Stochastic block model with equal contiguous blocks and features drawn
/// as one-hot class direction plus unit Gaussian noise. Splits are 60/20/20
/// by node index within each class.
Graph gen_sbm(const SbmParams& params);

struct BlobParams {
  std::size_t num_samples = 2000;
  int num_classes = 10;
  std::size_t feature_dim = 20;
  double center_scale = 1.0;  // class centres ~ N(0, center_scale² I)
  double spread = 1.0;        // within-class std
  std::uint64_t seed = 0;
};

/// Independent samples (no edges): Gaussian blobs around per-class centres.
/// Labels cycle through the classes; splits are 60/20/20 by the sample's
/// rank within its class, modulo five.
Graph gen_blobs(const BlobParams& params);

/// G(n, p) with identity features and a single class, all nodes in the
/// train split.
Graph gen_erdos_renyi(std::size_t n, double p, std::uint64_t seed);

/// Builds a graph from an undirected edge list, dropping self-loops and
/// duplicates.
Matrix adjacency_from_edges(std::size_t n,
                            const std::vector<std::pair<std::size_t, std::size_t>>& edges);

}  // namespace robinit

#endif  // ROBINIT_GRAPH_HPP_
