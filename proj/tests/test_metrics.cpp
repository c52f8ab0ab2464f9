#include <random>

#include "doctest.h"
#include "robinit/metrics.hpp"
#include "test_util.hpp"

using namespace robinit;
using namespace robinit::testing;

namespace {

AttackConfig feature_attack(double eps) {
  AttackConfig c;
  c.kind = AttackKind::kFeaturePgd;
  c.budget = eps;
  c.steps = 20;
  return c;
}

}  // namespace

TEST_CASE("accuracy examples") {
  const Matrix logits{{2, 1}, {0, 3}, {5, -1}};
  const std::vector<int> labels{0, 1, 0};
  const std::vector<std::size_t> all{0, 1, 2};
  CHECK(accuracy(logits, labels, all) == 1.0);
  CHECK(accuracy(logits, std::vector<int>{1, 1, 0}, std::vector<std::size_t>{0}) == 0.0);
  CHECK_THROWS(accuracy(logits, labels, std::vector<std::size_t>{}));

  // Zero logits always predict class 0, so accuracy counts label-0 rows.
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> cls(0, 4);
  const std::size_t n = 5000;
  std::vector<int> random_labels(n);
  std::vector<std::size_t> mask(n);
  std::size_t zeros = 0;
  for (std::size_t i = 0; i < n; ++i) {
    random_labels[i] = cls(rng);
    mask[i] = i;
    zeros += random_labels[i] == 0 ? 1 : 0;
  }
  const double acc = accuracy(Matrix(n, 5), random_labels, mask);
  CHECK(acc == static_cast<double>(zeros) / n);
  CHECK(acc == doctest::Approx(0.2).epsilon(0.1));
}

TEST_CASE("success_rate examples") {
  CHECK(success_rate(0.8, 0.7) == doctest::Approx(0.1).epsilon(1e-12));
  for (double x : {0.0, 0.3, 1.0}) CHECK(success_rate(x, x) == 0.0);
  CHECK(success_rate(0.5, 0.6) < 0.0);
}

TEST_CASE("output distance on test rows") {
  const Matrix a{{1, 0}, {0, 1}, {9, 9}};
  const Matrix b{{1, 0}, {0, 4}, {0, 0}};
  CHECK(output_distance(a, b, std::vector<std::size_t>{0, 1}) == doctest::Approx(3.0).epsilon(1e-9));
  CHECK(output_distance(a, a, std::vector<std::size_t>{0, 1, 2}) == 0.0);
}

TEST_CASE("empirical risk at zero budget") {
  const Graph g = small_sbm();
  const Model m = trained_model(Arch::kGcn, g);
  for (AttackKind kind : {AttackKind::kFeaturePgd, AttackKind::kStructurePgd, AttackKind::kDice}) {
    AttackConfig c = feature_attack(0.0);
    c.kind = kind;
    const RiskEstimate r = empirical_risk(m, g, c, 3, 1);
    CHECK(r.sup_distance == 0.0);
    CHECK(r.attacked_accuracy == r.clean_accuracy);
    CHECK(r.success_rate == 0.0);
  }
}

TEST_CASE("single-trial risk equals the deterministic attack") {
  const Graph g = small_sbm();
  const Model m = trained_model(Arch::kGcn, g);
  const AttackConfig c = feature_attack(1.0);
  const RiskEstimate r = empirical_risk(m, g, c, 1, 99);
  const PerturbedGraph p = feature_pgd(m, g, c);
  const auto mask = g.mask(Split::kTest);
  const Matrix clean = forward(m, g).logits;
  const Matrix attacked = forward(m, p.graph).logits;
  CHECK(r.sup_distance == output_distance(clean, attacked, mask));
  CHECK(r.attacked_accuracy == accuracy(attacked, g.labels, mask));
  CHECK(r.clean_accuracy == accuracy(clean, g.labels, mask));
  CHECK(std::abs(r.success_rate - (r.clean_accuracy - r.attacked_accuracy)) <= 1e-12);
}

TEST_CASE("sup distance is monotone in nested trial sets") {
  const Graph g = small_sbm();
  const Model m = trained_model(Arch::kGcn, g);
  double prev = 0.0;
  for (std::size_t trials : {1u, 2u, 4u, 6u}) {
    const RiskEstimate r = empirical_risk(m, g, feature_attack(0.5), trials, 10);
    CHECK(r.sup_distance >= prev);
    CHECK(r.attacked_accuracy >= 0.0);
    CHECK(r.attacked_accuracy <= 1.0);
    prev = r.sup_distance;
  }
}

TEST_CASE("feature-attack sup distance respects the Lipschitz product bound") {
  const Graph g = small_sbm(8);
  const Model m = trained_model(Arch::kGcn, g, 100);
  double prod = 1.0;
  for (const auto& layer : m.layers) prod *= spectral_norm(layer.weights);
  const double walks = walk_sums(normalize_adjacency(g), m.num_layers() - 1).total;
  for (double eps : {0.1, 0.5, 1.0, 3.0}) {
    const RiskEstimate r = empirical_risk(m, g, feature_attack(eps), 4, 1);
    CHECK(r.sup_distance > 0.0);
    CHECK(r.sup_distance <= prod * eps * walks);
  }
}

TEST_CASE("MLP risk uses the mean per-sample sup") {
  const Graph g = small_sbm();
  const Model m = trained_model(Arch::kMlp, g);
  AttackConfig c = feature_attack(0.5);
  c.scope = BallScope::kPerRow;
  const RiskEstimate r = empirical_risk(m, g, c, 1, 0);
  const PerturbedGraph p = feature_pgd(m, g, c);
  const Matrix d = subtract(forward(m, p.graph).logits, forward(m, g).logits);
  const auto mask = g.mask(Split::kTest);
  double mean = 0.0;
  for (std::size_t i : mask) {
    double s = 0.0;
    for (double v : d.row(i)) s += v * v;
    mean += std::sqrt(s);
  }
  mean /= static_cast<double>(mask.size());
  CHECK(r.sup_distance == doctest::Approx(mean).epsilon(1e-12));
}

TEST_CASE("risk estimate csv") {
  RiskEstimate r;
  r.attack = AttackKind::kDice;
  r.budget = 0.25;
  r.trials = 3;
  r.sup_distance = 1.5;
  r.clean_accuracy = 0.75;
  r.attacked_accuracy = 0.5;
  r.success_rate = 0.25;
  CHECK(RiskEstimate::csv_header() == "attack,budget,trials,sup_distance,clean_acc,attacked_acc,success_rate");
  CHECK(r.csv_row() == "dice,0.25,3,1.5,0.75,0.5,0.25");
  CHECK_THROWS(empirical_risk(trained_model(Arch::kGcn, small_sbm(), 1), small_sbm(), feature_attack(0.1), 0, 0));
}
