#ifndef ROBINIT_BOUNDS_HPP_
#define ROBINIT_BOUNDS_HPP_

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "robinit/init.hpp"
#include "robinit/nn.hpp"

namespace robinit {

// Robustness ceilings γ as functions of initial and converged weight norms.
//
// Every evaluator shares one per-layer factor
//
//   F_i = c^t ‖W₀^(i)‖ + 2 c^t ‖W*^(i)‖
//
// with c = 2 (kPow2) or c = 1 + η·L̂ (kSharpened). kPow2 is the published
// form; kSharpened replaces the doubling per epoch with the smoothness-based
// growth factor. With P = Π F_i:
//
//   gcn_feature       γ = ε · P · Σ_u ŵ_u
//   gcn_structural    γ = ε · P · ‖X‖ · (1 + T·P)
//   gin_feature       γ = P · (B · T · max_deg + ε)
//   dnn               γ = ε · P
//   strong_convex     γ = ε · Π((1 − μ/L̂)^t ‖W₀^(i)‖ + 2‖W*^(i)‖)
//   gaussian_expected γ = gcn_feature with ‖W₀^(i)‖ → sqrt(‖μ‖² + tr Σ)
//
// In the structural bound, "epochs" is t. Assumption flags (η·L̂ ≤ 1, W*
// converged) annotate the report; they never block evaluation.

class BoundInputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class BoundVariant { kPow2, kSharpened };
enum class Theorem { kGcnFeature, kGcnStructural, kGinFeature, kDnn, kStrongConvex, kGaussianExpected };

const char* variant_name(BoundVariant v);
BoundVariant parse_variant(const std::string& s);
const char* theorem_name(Theorem t);

struct BoundInput {
  double epsilon = 0.0;
  std::size_t epochs = 0;
  double eta = 0.0;
  std::optional<double> smoothness;  // L̂
  std::vector<double> w0_norms;
  std::vector<double> wstar_norms;
  std::optional<double> walk_total;  // Σ_u ŵ_u
  std::optional<double> x_norm;      // ‖X‖
  std::optional<double> feat_bound;  // B
  std::optional<int> max_degree;
  std::optional<double> strong_convexity;  // μ
  BoundVariant variant = BoundVariant::kPow2;
  bool wstar_converged = true;
};

struct BoundReport {
  Theorem theorem = Theorem::kDnn;
  BoundVariant variant = BoundVariant::kPow2;
  double epsilon = 0.0;
  std::size_t epochs = 0;
  double gamma = 0.0;
  std::vector<double> per_layer_factors;
  double prefactor = 1.0;  // ε, or 1 for the GIN form
  double tail = 1.0;       // term multiplying the factor product
  std::optional<bool> eta_l_ok;
  bool converged = true;

  /// prefactor · Π factors · tail, evaluated from the stored fields.
  double rederive() const;

  static std::string csv_header(std::size_t num_layers);
  std::string csv_row() const;
};

/// c^t ‖W₀‖ + 2 c^t ‖W*‖.
double layer_factor(double growth, std::size_t epochs, double w0_norm, double wstar_norm);
double growth_factor(const BoundInput& b);

BoundReport gcn_feature_bound(const BoundInput& b);
BoundReport gcn_structural_bound(const BoundInput& b);
BoundReport gin_feature_bound(const BoundInput& b);
BoundReport dnn_bound(const BoundInput& b);
BoundReport strong_convex_bound(const BoundInput& b);
BoundReport gaussian_expected_bound(const BoundInput& b, const InitScheme& scheme,
                                    const std::vector<std::pair<std::size_t, std::size_t>>& shapes,
                                    MeanReading reading = MeanReading::kVectorized);

struct RecursionRow {
  std::size_t epoch = 0;
  std::size_t layer = 0;
  double norm = 0.0;
  double bound = 0.0;
  double slack = 0.0;  // bound − norm
  bool pass = true;
};

struct RecursionReport {
  std::vector<RecursionRow> rows;
  bool pass = true;
  double min_slack = 0.0;
};

inline constexpr double kRecursionSlack = 1e-9;

/// Checks ‖W_e‖ ≤ (1 + ηL)^e ‖W₀‖ + 2^{e+1} ‖W*‖ at every recorded epoch e.
RecursionReport norm_recursion_check(const std::vector<std::vector<double>>& per_epoch_norms,
                                     const std::vector<double>& wstar_norms, double smoothness, double eta,
                                     double slack_tol = kRecursionSlack);
/// Uses the trajectory's own W* proxy.
RecursionReport norm_recursion_check(const Trajectory& traj, double smoothness, double eta);

/// Checks ‖W_e‖ ≤ (1 − μ/L)^e ‖W₀‖ + 2‖W*‖.
RecursionReport strong_convex_recursion_check(const std::vector<std::vector<double>>& per_epoch_norms,
                                              const std::vector<double>& wstar_norms, double mu, double smoothness,
                                              double slack_tol = kRecursionSlack);

}  // namespace robinit

#endif  // ROBINIT_BOUNDS_HPP_
