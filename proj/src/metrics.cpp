#include "robinit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace robinit {

namespace {

std::vector<double> row_distances(const Matrix& a, const Matrix& b, std::span<const std::size_t> rows) {
  std::vector<double> out;
  out.reserve(rows.size());
  for (std::size_t i : rows) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) {
      const double d = a(i, j) - b(i, j);
      s += d * d;
    }
    out.push_back(std::sqrt(s));
  }
  return out;
}

}  // namespace

std::string RiskEstimate::csv_header() {
  return "attack,budget,trials,sup_distance,clean_acc,attacked_acc,success_rate";
}

std::string RiskEstimate::csv_row() const {
  std::ostringstream os;
  os << attack_name(attack) << ',';
  write_number(os, budget);
  os << ',' << trials << ',';
  write_number(os, sup_distance);
  os << ',';
  write_number(os, clean_accuracy);
  os << ',';
  write_number(os, attacked_accuracy);
  os << ',';
  write_number(os, success_rate);
  return os.str();
}

double accuracy(const Matrix& logits, std::span<const int> labels, std::span<const std::size_t> mask) {
  if (mask.empty()) throw std::invalid_argument("accuracy: empty mask");
  std::size_t correct = 0;
  for (std::size_t i : mask) {
    if (i >= logits.rows() || i >= labels.size()) throw DimensionError("accuracy: mask index out of range");
    const auto row = logits.row(i);
    const auto best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    if (best == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(mask.size());
}

double accuracy(const Model& m, const Graph& g, Split split, bool self_loops) {
  return accuracy(forward(m, g, self_loops).logits, g.labels, g.mask(split));
}

double success_rate(double clean, double attacked) { return clean - attacked; }

double output_distance(const Matrix& clean_logits, const Matrix& attacked_logits,
                       std::span<const std::size_t> rows) {
  if (rows.empty()) return 0.0;
  return spectral_norm_estimate(subtract(select_rows(attacked_logits, rows), select_rows(clean_logits, rows)));
}

RiskEstimate empirical_risk(const Model& m, const Graph& g, const AttackConfig& cfg, std::size_t trials,
                            std::uint64_t seed) {
  if (trials < 1) throw std::invalid_argument("empirical_risk: trials must be >= 1");
  const auto mask = g.mask(cfg.target);
  const Matrix clean_logits = forward(m, g, cfg.self_loops).logits;

  RiskEstimate est;
  est.attack = cfg.kind;
  est.budget = cfg.budget;
  est.trials = trials;
  est.clean_accuracy = accuracy(clean_logits, g.labels, mask);
  est.attacked_accuracy = est.clean_accuracy;

  const bool per_sample = m.arch == Arch::kMlp;
  std::vector<double> sample_sup(per_sample ? mask.size() : 0, 0.0);
  double worst_acc = INFINITY;

  for (std::size_t r = 0; r < trials; ++r) {
    AttackConfig run = cfg;
    if (r > 0) {
      run.seed = seed + r;
      run.random_start = true;
    }
    const PerturbedGraph pg = run_attack(m, g, run);
    const Matrix logits = forward(m, pg.graph, cfg.self_loops).logits;
    if (is_structural(cfg.kind) && pg.num_flips > 0)
      est.max_adjacency_change =
          std::max(est.max_adjacency_change, spectral_norm_estimate(subtract(pg.graph.adjacency, g.adjacency)));
    if (per_sample) {
      const auto d = row_distances(clean_logits, logits, mask);
      for (std::size_t i = 0; i < d.size(); ++i) sample_sup[i] = std::max(sample_sup[i], d[i]);
    } else {
      est.sup_distance = std::max(est.sup_distance, output_distance(clean_logits, logits, mask));
    }
    const double acc = accuracy(logits, g.labels, mask);
    if (acc < worst_acc) worst_acc = acc;
  }
  if (per_sample && !sample_sup.empty()) {
    double s = 0.0;
    for (double v : sample_sup) s += v;
    est.sup_distance = s / static_cast<double>(sample_sup.size());
  }
  est.attacked_accuracy = worst_acc;
  est.success_rate = success_rate(est.clean_accuracy, est.attacked_accuracy);
  return est;
}

}  // namespace robinit
