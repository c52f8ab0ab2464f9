#ifndef ROBINIT_TESTS_TEST_UTIL_HPP_
#define ROBINIT_TESTS_TEST_UTIL_HPP_

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "robinit/graph.hpp"
#include "robinit/init.hpp"
#include "robinit/linalg.hpp"
#include "robinit/nn.hpp"

namespace robinit::testing {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(rows, cols);
  for (auto& x : m.data()) x = normal(rng);
  return m;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a.data()[i] - b.data()[i]));
  return d;
}

inline Graph path2() {
  Graph g;
  g.adjacency = Matrix{{0, 1}, {1, 0}};
  g.features = Matrix{{1}, {2}};
  g.labels = {0, 1};
  g.splits = {Split::kTrain, Split::kTest};
  g.num_classes = 2;
  return g;
}

inline Graph triangle() {
  Graph g;
  g.adjacency = Matrix{{0, 1, 1}, {1, 0, 1}, {1, 1, 0}};
  g.features = Matrix::identity(3);
  g.labels = {0, 1, 2};
  g.splits = {Split::kTrain, Split::kVal, Split::kTest};
  g.num_classes = 3;
  return g;
}

inline Graph star(std::size_t leaves) {
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t i = 1; i <= leaves; ++i) edges.emplace_back(0, i);
  Graph g;
  g.adjacency = adjacency_from_edges(leaves + 1, edges);
  g.features = Matrix::identity(leaves + 1);
  g.labels.assign(leaves + 1, 0);
  g.splits.assign(leaves + 1, Split::kTrain);
  g.num_classes = 1;
  return g;
}

inline Graph small_sbm(std::uint64_t seed = 5) {
  SbmParams p;
  p.num_nodes = 40;
  p.num_classes = 2;
  p.p_in = 0.3;
  p.p_out = 0.03;
  p.feature_dim = 4;
  p.seed = seed;
  return gen_sbm(p);
}

inline Model trained_model(Arch arch, const Graph& g, std::size_t epochs = 60) {
  const Model m = build_model(ModelSpec{arch, {g.feature_dim(), 8, static_cast<std::size_t>(g.num_classes)}, Activation::kTanh},
                              GaussianInit{0.0, 0.5}, 3);
  TrainOptions opts;
  opts.epochs = epochs;
  opts.eta = arch == Arch::kGin ? 1e-2 : 1e-1;
  return *train_gd(m, g, opts).final_model;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("robinit_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace robinit::testing

#endif  // ROBINIT_TESTS_TEST_UTIL_HPP_
