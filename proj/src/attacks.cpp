#include "robinit/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <stdexcept>

namespace robinit {

namespace {

constexpr int kDiceRetries = 100;

struct LossGrad {
  double loss;
  Matrix grad;
};

double norm_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

// Shrinks x − clean to a relative 1e-12 inside the radius, measured on the
// realized difference, so that membership survives rounding in clean + δ and
// any summation order of the norm.
void project_ball(std::span<double> x, std::span<const double> clean, double radius) {
  std::vector<double> delta(x.size());
  for (int guard = 0; guard < 64; ++guard) {
    for (std::size_t k = 0; k < x.size(); ++k) delta[k] = x[k] - clean[k];
    const double n = norm_of(delta);
    if (n <= radius) return;
    const double factor = radius * (1.0 - 1e-12 * (guard + 1)) / n;
    for (std::size_t k = 0; k < x.size(); ++k) x[k] = clean[k] + delta[k] * factor;
  }
  std::copy(clean.begin(), clean.end(), x.begin());
}

void project(Matrix& x, const Matrix& clean, double radius, BallScope scope) {
  if (scope == BallScope::kWholeMatrix) {
    project_ball(x.data(), clean.data(), radius);
  } else {
    for (std::size_t i = 0; i < x.rows(); ++i) project_ball(x.row(i), clean.row(i), radius);
  }
}

double ball_norm(const Matrix& delta, BallScope scope) {
  if (scope == BallScope::kWholeMatrix) return frobenius_norm(delta);
  double best = 0.0;
  for (std::size_t i = 0; i < delta.rows(); ++i) {
    double s = 0.0;
    for (double v : delta.row(i)) s += v * v;
    best = std::max(best, std::sqrt(s));
  }
  return best;
}

PerturbedGraph unchanged(const Graph& g, AttackKind kind) {
  PerturbedGraph out;
  out.graph = g;
  out.kind = kind;
  return out;
}

// Projection of s onto {0 ≤ s ≤ 1, Σ s ≤ budget} over the listed entries.
void project_scores(std::vector<double>& s, double budget) {
  auto clipped_sum = [&](double shift) {
    double total = 0.0;
    for (double v : s) total += std::clamp(v - shift, 0.0, 1.0);
    return total;
  };
  if (clipped_sum(0.0) <= budget) {
    for (double& v : s) v = std::clamp(v, 0.0, 1.0);
    return;
  }
  double lo = 0.0;
  double hi = *std::max_element(s.begin(), s.end());
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (clipped_sum(mid) > budget) lo = mid;
    else hi = mid;
  }
  for (double& v : s) v = std::clamp(v - hi, 0.0, 1.0);
}

void flip(Matrix& a, std::size_t i, std::size_t j) {
  const double v = a(i, j) != 0.0 ? 0.0 : 1.0;
  a(i, j) = v;
  a(j, i) = v;
}

int degree(const Matrix& a, std::size_t i) {
  int d = 0;
  for (double x : a.row(i)) d += x != 0.0 ? 1 : 0;
  return d;
}

}  // namespace

const char* attack_name(AttackKind k) {
  switch (k) {
    case AttackKind::kFeaturePgd: return "feature_pgd";
    case AttackKind::kStructurePgd: return "structure_pgd";
    case AttackKind::kDice: return "dice";
    case AttackKind::kRandomFlip: break;
  }
  return "random_flip";
}

AttackKind parse_attack(const std::string& s) {
  if (s == "feature_pgd") return AttackKind::kFeaturePgd;
  if (s == "structure_pgd") return AttackKind::kStructurePgd;
  if (s == "dice") return AttackKind::kDice;
  if (s == "random_flip" || s == "random") return AttackKind::kRandomFlip;
  throw std::invalid_argument("unknown attack '" + s + "'");
}

bool is_structural(AttackKind k) { return k != AttackKind::kFeaturePgd; }

void AttackConfig::validate() const {
  if (!(budget >= 0.0) || !std::isfinite(budget)) throw std::invalid_argument("attack: budget must be >= 0");
  if (is_structural(kind) && budget > 1.0) throw std::invalid_argument("attack: flip rate must be <= 1");
  const bool pgd = kind == AttackKind::kFeaturePgd || kind == AttackKind::kStructurePgd;
  if (pgd && steps < 1) throw std::invalid_argument("attack: PGD needs steps >= 1");
  if (pgd && !(step_size > 0.0)) throw std::invalid_argument("attack: PGD needs step_size > 0");
}

std::size_t flip_budget(const Graph& g, double rate) {
  return static_cast<std::size_t>(std::floor(rate * static_cast<double>(g.num_edges())));
}

std::pair<std::size_t, std::size_t> pair_from_index(std::uint64_t idx, std::size_t n) {
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const std::uint64_t row = n - 1 - i;
    if (idx < row) return {i, i + 1 + idx};
    idx -= row;
  }
  throw std::out_of_range("pair_from_index: index beyond n(n-1)/2");
}

PerturbedGraph feature_pgd(const Model& m, const Graph& g, const AttackConfig& cfg) {
  cfg.validate();
  if (cfg.kind != AttackKind::kFeaturePgd) throw std::invalid_argument("feature_pgd: wrong attack kind");
  PerturbedGraph out = unchanged(g, AttackKind::kFeaturePgd);
  const auto mask = g.mask(cfg.target);
  if (mask.empty()) throw std::invalid_argument("feature_pgd: target split is empty");

  const Matrix propagation = propagation_matrix(m.arch, g.adjacency, cfg.self_loops);
  auto evaluate = [&](const Matrix& x) {
    const ForwardCache cache = forward_with_propagation(m, propagation, x);
    const double loss = cross_entropy(cache.logits, g.labels, mask);
    Gradients gr = backward_from_logits(m, cache, cross_entropy_grad(cache.logits, g.labels, mask));
    return LossGrad{loss, std::move(gr.input)};
  };

  const Matrix& clean = g.features;
  LossGrad at_clean = evaluate(clean);
  out.clean_loss = at_clean.loss;
  out.attack_loss = at_clean.loss;
  if (cfg.budget == 0.0) return out;

  Matrix current = clean;
  LossGrad state = std::move(at_clean);
  if (cfg.random_start) {
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Matrix delta(clean.rows(), clean.cols());
    for (auto& v : delta.data()) v = normal(rng);
    const auto rescale = [&](std::span<double> d) {
      double s = 0.0;
      for (double v : d) s += v * v;
      const double r = cfg.budget * unit(rng) / std::max(std::sqrt(s), 1e-300);
      for (double& v : d) v *= r;
    };
    if (cfg.scope == BallScope::kWholeMatrix) rescale(delta.data());
    else
      for (std::size_t i = 0; i < delta.rows(); ++i) rescale(delta.row(i));
    current = add(clean, delta);
    project(current, clean, cfg.budget, cfg.scope);
    state = evaluate(current);
  }

  Matrix best = current;
  double best_loss = state.loss;
  if (best_loss < out.clean_loss) {
    best = clean;
    best_loss = out.clean_loss;
  }

  for (int step = 0; step < cfg.steps; ++step) {
    Matrix direction = state.grad;
    if (cfg.scope == BallScope::kWholeMatrix) {
      const double gn = frobenius_norm(direction);
      if (gn == 0.0) {
        if (step == 0) out.unperturbed = true;
        break;
      }
      direction = scale(direction, 1.0 / gn);
    } else {
      bool any = false;
      for (std::size_t i = 0; i < direction.rows(); ++i) {
        auto r = direction.row(i);
        double s = 0.0;
        for (double v : r) s += v * v;
        if (s == 0.0) continue;
        any = true;
        const double inv = 1.0 / std::sqrt(s);
        for (double& v : r) v *= inv;
      }
      if (!any) {
        if (step == 0) out.unperturbed = true;
        break;
      }
    }
    current = add(current, scale(direction, cfg.step_size));
    project(current, clean, cfg.budget, cfg.scope);
    state = evaluate(current);
    if (state.loss > best_loss) {
      best_loss = state.loss;
      best = current;
    }
  }

  out.attack_loss = best_loss;
  out.delta_feature_norm = ball_norm(subtract(best, clean), cfg.scope);
  out.graph.features = std::move(best);
  if (out.delta_feature_norm == 0.0) out.unperturbed = true;
  return out;
}

PerturbedGraph structure_pgd(const Model& m, const Graph& g, const AttackConfig& cfg) {
  cfg.validate();
  if (cfg.kind != AttackKind::kStructurePgd) throw std::invalid_argument("structure_pgd: wrong attack kind");
  if (m.arch == Arch::kMlp) throw std::invalid_argument("structure_pgd: needs a GCN or GIN model");
  PerturbedGraph out = unchanged(g, AttackKind::kStructurePgd);
  const std::size_t k = flip_budget(g, cfg.budget);
  out.requested_flips = k;
  if (k < 1) {
    out.unperturbed = true;
    return out;
  }
  const auto mask = g.mask(cfg.target);
  if (mask.empty()) throw std::invalid_argument("structure_pgd: target split is empty");

  const std::size_t n = g.num_nodes();
  const std::size_t pairs = n * (n - 1) / 2;
  std::vector<double> scores(pairs, 0.0);
  if (cfg.random_start) {
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> unit(0.0, 2.0 * static_cast<double>(k) / static_cast<double>(pairs));
    for (double& s : scores) s = unit(rng);
    project_scores(scores, static_cast<double>(k));
  }

  const Matrix& a = g.adjacency;
  Matrix relaxed(n, n);
  std::vector<double> grad(pairs);
  for (int step = 0; step < cfg.steps; ++step) {
    std::size_t p = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j, ++p) {
        const double v = a(i, j) + (1.0 - 2.0 * a(i, j)) * scores[p];
        relaxed(i, j) = v;
        relaxed(j, i) = v;
      }
    }
    const ForwardCache cache =
        forward_with_propagation(m, propagation_matrix(m.arch, relaxed, cfg.self_loops), g.features);
    if (step == 0) out.clean_loss = cross_entropy(cache.logits, g.labels, mask);
    const Gradients gr = backward(m, cache, g.labels, mask, &relaxed, cfg.self_loops);
    const Matrix& ga = *gr.adjacency;
    double norm = 0.0;
    p = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j, ++p) {
        grad[p] = (ga(i, j) + ga(j, i)) * (1.0 - 2.0 * a(i, j));
        norm += grad[p] * grad[p];
      }
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) break;
    const double lr = cfg.step_size * std::sqrt(static_cast<double>(k)) / std::sqrt(step + 1.0) / norm;
    for (std::size_t q = 0; q < pairs; ++q) scores[q] += lr * grad[q];
    project_scores(scores, static_cast<double>(k));
  }

  std::vector<std::size_t> order(pairs);
  for (std::size_t q = 0; q < pairs; ++q) order[q] = q;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return scores[x] > scores[y]; });
  Matrix& adj = out.graph.adjacency;
  for (std::size_t q = 0; q < k; ++q) {
    const auto [i, j] = pair_from_index(order[q], n);
    if (adj(i, j) != 0.0) ++out.deleted;
    else ++out.added;
    flip(adj, i, j);
  }
  out.num_flips = k;
  out.attack_loss =
      cross_entropy(forward(m, out.graph, cfg.self_loops).logits, g.labels, mask);
  return out;
}

PerturbedGraph dice_attack(const Graph& g, const AttackConfig& cfg) {
  cfg.validate();
  if (cfg.kind != AttackKind::kDice) throw std::invalid_argument("dice_attack: wrong attack kind");
  PerturbedGraph out = unchanged(g, AttackKind::kDice);
  const std::size_t k = flip_budget(g, cfg.budget);
  out.requested_flips = k;
  if (k < 1) {
    out.unperturbed = true;
    return out;
  }
  const std::size_t n = g.num_nodes();
  Matrix& adj = out.graph.adjacency;
  std::mt19937_64 rng(cfg.seed);
  std::bernoulli_distribution coin(0.5);

  std::vector<std::pair<std::size_t, std::size_t>> intra;
  std::uint64_t inter_pairs = 0;
  std::uint64_t inter_edges = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool same = g.labels[i] == g.labels[j];
      if (!same) ++inter_pairs;
      if (adj(i, j) == 0.0) continue;
      if (same) intra.emplace_back(i, j);
      else ++inter_edges;
    }
  }
  std::uint64_t inter_available = inter_pairs - inter_edges;
  const std::uint64_t all_pairs = static_cast<std::uint64_t>(n) * (n - 1) / 2;

  auto try_delete = [&]() {
    for (int attempt = 0; attempt < kDiceRetries && !intra.empty(); ++attempt) {
      std::uniform_int_distribution<std::size_t> pick(0, intra.size() - 1);
      const std::size_t idx = pick(rng);
      const auto [i, j] = intra[idx];
      if (degree(adj, i) <= 1 || degree(adj, j) <= 1) continue;
      flip(adj, i, j);
      intra[idx] = intra.back();
      intra.pop_back();
      ++out.deleted;
      return true;
    }
    return false;
  };

  auto try_add = [&]() {
    if (inter_available == 0) return false;
    auto accept = [&](std::size_t i, std::size_t j) {
      flip(adj, i, j);
      --inter_available;
      ++out.added;
      return true;
    };
    // Rejection sampling while the pool is dense; enumeration once sparse.
    if (inter_available * 20 >= all_pairs) {
      std::uniform_int_distribution<std::uint64_t> pick(0, all_pairs - 1);
      while (true) {
        const auto [i, j] = pair_from_index(pick(rng), n);
        if (g.labels[i] != g.labels[j] && adj(i, j) == 0.0) return accept(i, j);
      }
    }
    std::vector<std::pair<std::size_t, std::size_t>> pool;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (g.labels[i] != g.labels[j] && adj(i, j) == 0.0) pool.emplace_back(i, j);
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    const auto [i, j] = pool[pick(rng)];
    return accept(i, j);
  };

  for (std::size_t f = 0; f < k; ++f) {
    const bool prefer_delete = coin(rng);
    const bool done = prefer_delete ? (try_delete() || try_add()) : (try_add() || try_delete());
    if (!done) {
      out.partial = true;
      break;
    }
  }
  out.num_flips = out.deleted + out.added;
  return out;
}

PerturbedGraph random_flip(const Graph& g, const AttackConfig& cfg) {
  cfg.validate();
  if (cfg.kind != AttackKind::kRandomFlip) throw std::invalid_argument("random_flip: wrong attack kind");
  PerturbedGraph out = unchanged(g, AttackKind::kRandomFlip);
  std::size_t k = flip_budget(g, cfg.budget);
  out.requested_flips = k;
  const std::size_t n = g.num_nodes();
  const std::uint64_t all_pairs = static_cast<std::uint64_t>(n) * (n - 1) / 2;
  if (k > all_pairs) {
    k = all_pairs;
    out.partial = true;
  }
  if (k < 1) {
    out.unperturbed = true;
    return out;
  }
  // Floyd's sampling of k distinct indices from [0, all_pairs).
  std::mt19937_64 rng(cfg.seed);
  std::set<std::uint64_t> chosen;
  for (std::uint64_t j = all_pairs - k; j < all_pairs; ++j) {
    std::uniform_int_distribution<std::uint64_t> pick(0, j);
    const std::uint64_t t = pick(rng);
    if (!chosen.insert(t).second) chosen.insert(j);
  }
  for (std::uint64_t idx : chosen) {
    const auto [i, j] = pair_from_index(idx, n);
    if (out.graph.adjacency(i, j) != 0.0) ++out.deleted;
    else ++out.added;
    flip(out.graph.adjacency, i, j);
  }
  out.num_flips = k;
  return out;
}

PerturbedGraph run_attack(const Model& m, const Graph& g, const AttackConfig& cfg) {
  switch (cfg.kind) {
    case AttackKind::kFeaturePgd: return feature_pgd(m, g, cfg);
    case AttackKind::kStructurePgd: return structure_pgd(m, g, cfg);
    case AttackKind::kDice: return dice_attack(g, cfg);
    case AttackKind::kRandomFlip: break;
  }
  return random_flip(g, cfg);
}

Verification verify_perturbation(const Graph& original, const PerturbedGraph& result, const AttackConfig& cfg) {
  Verification v;
  auto fail = [&](std::string msg) {
    v.ok = false;
    v.failures.push_back(std::move(msg));
  };
  const Graph& p = result.graph;
  const std::size_t n = original.num_nodes();
  if (p.num_nodes() != n || p.adjacency.rows() != n || p.adjacency.cols() != n) {
    fail("node count changed");
    return v;
  }
  if (p.labels != original.labels) fail("labels changed");
  if (p.splits != original.splits) fail("splits changed");
  for (std::size_t i = 0; i < n; ++i) {
    if (p.adjacency(i, i) != 0.0) fail("self-loop at node " + std::to_string(i));
    for (std::size_t j = i + 1; j < n; ++j) {
      const double x = p.adjacency(i, j);
      if (x != 0.0 && x != 1.0) fail("non-binary adjacency entry");
      if (x != p.adjacency(j, i)) fail("asymmetric adjacency entry");
    }
  }

  if (cfg.kind == AttackKind::kFeaturePgd) {
    if (!(p.adjacency == original.adjacency)) fail("feature attack changed the adjacency");
    if (p.features.rows() != original.features.rows() || p.features.cols() != original.features.cols()) {
      fail("feature shape changed");
      return v;
    }
    double whole = 0.0;
    double worst_row = 0.0;
    for (std::size_t i = 0; i < p.features.rows(); ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < p.features.cols(); ++j) {
        const double d = p.features(i, j) - original.features(i, j);
        row += d * d;
      }
      whole += row;
      worst_row = std::max(worst_row, std::sqrt(row));
    }
    const double measured = cfg.scope == BallScope::kWholeMatrix ? std::sqrt(whole) : worst_row;
    if (measured > cfg.budget) fail("perturbation leaves the budget ball");
    return v;
  }

  if (!(p.features == original.features)) fail("structural attack changed the features");
  std::size_t diff = 0;
  std::size_t removed_same = 0, removed_diff = 0, added_same = 0, added_diff = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double before = original.adjacency(i, j);
      const double after = p.adjacency(i, j);
      if (before == after) continue;
      ++diff;
      const bool same = original.labels[i] == original.labels[j];
      if (before != 0.0) (same ? removed_same : removed_diff)++;
      else (same ? added_same : added_diff)++;
    }
  }
  if (diff != result.num_flips) fail("reported flip count does not match the adjacency diff");
  const std::size_t expected = flip_budget(original, cfg.budget);
  if (result.partial) {
    if (diff > expected) fail("partial result exceeds the flip budget");
  } else if (diff != expected) {
    fail("flip count " + std::to_string(diff) + " differs from budget " + std::to_string(expected));
  }
  if (cfg.kind == AttackKind::kDice) {
    if (removed_diff != 0) fail("DICE removed an inter-class edge");
    if (added_same != 0) fail("DICE added an intra-class edge");
    for (std::size_t i = 0; i < n; ++i) {
      if (degree(original.adjacency, i) > 0 && degree(p.adjacency, i) == 0) {
        fail("DICE isolated node " + std::to_string(i));
      }
    }
  }
  return v;
}

}  // namespace robinit
