#ifndef ROBINIT_METRICS_HPP_
#define ROBINIT_METRICS_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>

#include "robinit/attacks.hpp"
#include "robinit/graph.hpp"
#include "robinit/nn.hpp"

namespace robinit {

// sup_distance is an empirical sup over heuristic attacks, i.e. a lower
// bound on the true adversarial risk, not an estimate of γ.
struct RiskEstimate {
  AttackKind attack = AttackKind::kFeaturePgd;
  double budget = 0.0;
  std::size_t trials = 0;
  double sup_distance = 0.0;
  double clean_accuracy = 0.0;
  double attacked_accuracy = 0.0;
  double success_rate = 0.0;
  double max_adjacency_change = 0.0;  // max over runs of ‖Ã − A‖₂; not serialized

  static std::string csv_header();
  std::string csv_row() const;
};

/// Fraction of masked rows whose argmax (lowest index on ties) equals the label.
double accuracy(const Matrix& logits, std::span<const int> labels, std::span<const std::size_t> mask);
double accuracy(const Model& m, const Graph& g, Split split, bool self_loops = false);

/// clean − attacked, unclamped.
double success_rate(double clean, double attacked);

/// Output distance on the target rows: spectral norm of the logit difference
/// for graph models; for MLPs the per-sample ℓ₂ distance.
double output_distance(const Matrix& clean_logits, const Matrix& attacked_logits,
                       std::span<const std::size_t> rows);

/// Run 0 is the deterministic attack with cfg.seed; runs 1..trials−1 use
/// sub-seeds seed+r with random starts. sup_distance is the max over runs of
/// the logit distance on target rows (for MLPs: the mean over samples of the
/// per-sample max). Accuracy fields come from the run with the lowest
/// attacked accuracy.
RiskEstimate empirical_risk(const Model& m, const Graph& g, const AttackConfig& cfg, std::size_t trials,
                            std::uint64_t seed);

}  // namespace robinit

#endif  // ROBINIT_METRICS_HPP_
