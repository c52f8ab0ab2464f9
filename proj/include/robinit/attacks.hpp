#ifndef ROBINIT_ATTACKS_HPP_
#define ROBINIT_ATTACKS_HPP_

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "robinit/graph.hpp"
#include "robinit/nn.hpp"

namespace robinit {

enum class AttackKind { kFeaturePgd, kStructurePgd, kDice, kRandomFlip };

const char* attack_name(AttackKind k);
AttackKind parse_attack(const std::string& s);
bool is_structural(AttackKind k);

// Feature-attack budget set: one Frobenius ball over the whole feature matrix
// (node classification) or one Euclidean ball per row (independent samples).
enum class BallScope { kWholeMatrix, kPerRow };

struct AttackConfig {
  AttackKind kind = AttackKind::kFeaturePgd;
  double budget = 0.0;  // ε for feature attacks, flip rate r ∈ [0, 1] for structural ones
  int steps = 100;
  double step_size = 0.1;
  std::uint64_t seed = 0;
  bool random_start = false;
  BallScope scope = BallScope::kWholeMatrix;
  bool self_loops = false;
  Split target = Split::kTest;  // nodes whose loss the gradient attacks ascend

  void validate() const;
};

struct PerturbedGraph {
  Graph graph;
  AttackKind kind = AttackKind::kFeaturePgd;
  double delta_feature_norm = 0.0;  // Frobenius, or max row norm for kPerRow
  std::size_t num_flips = 0;
  std::size_t requested_flips = 0;
  bool unperturbed = false;  // zero gradient or budget below one flip
  bool partial = false;      // candidate pools ran out before the budget
  std::size_t deleted = 0;
  std::size_t added = 0;
  double clean_loss = 0.0;
  double attack_loss = 0.0;
};

/// ⌊rate · |E|⌋.
std::size_t flip_budget(const Graph& g, double rate);

/// Normalized-gradient ascent on the target-node cross-entropy with
/// projection onto the ε-ball. Returns the highest-loss iterate visited.
PerturbedGraph feature_pgd(const Model& m, const Graph& g, const AttackConfig& cfg);

/// Gradient ascent over a relaxed flip-score matrix on the upper triangle,
/// projected onto {0 ≤ s ≤ 1, Σ s ≤ k}; then flips the top-k pairs (ties
/// in ascending (i, j) order).
PerturbedGraph structure_pgd(const Model& m, const Graph& g, const AttackConfig& cfg);

/// Disconnect internally, connect externally: each flip deletes an intra-class
/// edge or adds an inter-class edge with equal odds. Deletions that would
/// isolate a node are re-drawn up to 100 times.
PerturbedGraph dice_attack(const Graph& g, const AttackConfig& cfg);

/// ⌊rate · |E|⌋ distinct uniformly random upper-triangle pairs flipped.
PerturbedGraph random_flip(const Graph& g, const AttackConfig& cfg);

/// Dispatches on cfg.kind.
PerturbedGraph run_attack(const Model& m, const Graph& g, const AttackConfig& cfg);

struct Verification {
  bool ok = true;
  std::vector<std::string> failures;
};

/// Recomputes every budget contract from the two graphs alone, without
/// trusting the counters the attack reported.
Verification verify_perturbation(const Graph& original, const PerturbedGraph& result, const AttackConfig& cfg);

/// Upper-triangle pair with linear index idx, row-major over i < j.
std::pair<std::size_t, std::size_t> pair_from_index(std::uint64_t idx, std::size_t n);

}  // namespace robinit

#endif  // ROBINIT_ATTACKS_HPP_
