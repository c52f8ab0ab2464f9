#ifndef ROBINIT_TESTS_FD_ORACLE_HPP_
#define ROBINIT_TESTS_FD_ORACLE_HPP_

// Central finite differences of the masked cross-entropy, computed only from
// forward passes. Independent of the reverse-mode code it checks.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "robinit/graph.hpp"
#include "robinit/nn.hpp"

namespace robinit::testing {

inline constexpr double kFdStep = 1e-5;
// Relative error |a − n| / max(|a|, |n|, kFdFloor); the floor keeps entries
// whose true gradient is ~0 from dividing rounding noise by ~0.
inline constexpr double kFdFloor = 1e-6;

inline double fd_relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), kFdFloor});
}

struct FdSetup {
  Model model;
  Matrix adjacency;  // ignored for MLP
  Matrix features;
  std::vector<int> labels;
  std::vector<std::size_t> mask;
  bool self_loops = false;

  double loss() const {
    const Matrix prop = propagation_matrix(model.arch, adjacency, self_loops);
    return cross_entropy(forward_with_propagation(model, prop, features).logits, labels, mask);
  }
};

inline double central_difference(FdSetup& s, double& slot) {
  const double saved = slot;
  slot = saved + kFdStep;
  const double up = s.loss();
  slot = saved - kFdStep;
  const double down = s.loss();
  slot = saved;
  return (up - down) / (2 * kFdStep);
}

struct FdReport {
  double worst = 0.0;
  std::string where;
  std::size_t checked = 0;

  void record(double err, const std::string& at) {
    ++checked;
    if (err > worst) {
      worst = err;
      where = at;
    }
  }
};

/// Compares analytic gradients with central differences for every weight,
/// bias, feature and (for graph models) adjacency entry.
inline FdReport check_gradients(FdSetup s) {
  const Matrix prop = propagation_matrix(s.model.arch, s.adjacency, s.self_loops);
  const ForwardCache cache = forward_with_propagation(s.model, prop, s.features);
  const bool graph = s.model.arch != Arch::kMlp;
  const Gradients g = backward(s.model, cache, s.labels, s.mask, graph ? &s.adjacency : nullptr, s.self_loops);

  FdReport report;
  for (std::size_t l = 0; l < s.model.num_layers(); ++l) {
    auto& w = s.model.layers[l].weights.data();
    for (std::size_t k = 0; k < w.size(); ++k) {
      report.record(fd_relative_error(g.weights[l].data()[k], central_difference(s, w[k])),
                    "W" + std::to_string(l) + "[" + std::to_string(k) + "]");
    }
    if (s.model.layers[l].bias) {
      auto& b = s.model.layers[l].bias->data();
      for (std::size_t k = 0; k < b.size(); ++k) {
        report.record(fd_relative_error((*g.biases[l])[k], central_difference(s, b[k])),
                      "b" + std::to_string(l) + "[" + std::to_string(k) + "]");
      }
    }
  }
  for (std::size_t k = 0; k < s.features.size(); ++k) {
    report.record(fd_relative_error(g.input.data()[k], central_difference(s, s.features.data()[k])),
                  "X[" + std::to_string(k) + "]");
  }
  if (graph) {
    for (std::size_t k = 0; k < s.adjacency.size(); ++k) {
      report.record(fd_relative_error(g.adjacency->data()[k], central_difference(s, s.adjacency.data()[k])),
                    "A[" + std::to_string(k) + "]");
    }
  }
  return report;
}

}  // namespace robinit::testing

#endif  // ROBINIT_TESTS_FD_ORACLE_HPP_
