#include "robinit/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace robinit {

namespace {

void require_layers(const BoundInput& b) {
  if (b.w0_norms.empty()) throw BoundInputError("bound: w0_norms is empty");
  if (b.wstar_norms.size() != b.w0_norms.size()) {
    throw BoundInputError("bound: w0_norms and wstar_norms differ in length");
  }
  for (double v : b.w0_norms)
    if (!(v >= 0.0)) throw BoundInputError("bound: negative or NaN initial norm");
  for (double v : b.wstar_norms)
    if (!(v >= 0.0)) throw BoundInputError("bound: negative or NaN W* norm");
  if (!(b.epsilon >= 0.0)) throw BoundInputError("bound: epsilon must be >= 0");
}

template <typename T>
T required(const std::optional<T>& v, const char* name) {
  if (!v) throw BoundInputError(std::string("bound: missing required field ") + name);
  return *v;
}

BoundReport base_report(Theorem theorem, const BoundInput& b) {
  BoundReport r;
  r.theorem = theorem;
  r.variant = b.variant;
  r.epsilon = b.epsilon;
  r.epochs = b.epochs;
  r.converged = b.wstar_converged;
  if (b.smoothness) r.eta_l_ok = b.eta * *b.smoothness <= 1.0;
  return r;
}

std::vector<double> factors(const BoundInput& b) {
  const double c = growth_factor(b);
  std::vector<double> f;
  for (std::size_t i = 0; i < b.w0_norms.size(); ++i) {
    f.push_back(layer_factor(c, b.epochs, b.w0_norms[i], b.wstar_norms[i]));
  }
  return f;
}

double product(const std::vector<double>& v) {
  double p = 1.0;
  for (double x : v) p *= x;
  return p;
}

void finish(BoundReport& r) { r.gamma = r.rederive(); }

}  // namespace

const char* variant_name(BoundVariant v) { return v == BoundVariant::kPow2 ? "pow2" : "sharpened"; }

BoundVariant parse_variant(const std::string& s) {
  if (s == "pow2") return BoundVariant::kPow2;
  if (s == "sharpened") return BoundVariant::kSharpened;
  throw std::invalid_argument("unknown bound variant '" + s + "'");
}

const char* theorem_name(Theorem t) {
  switch (t) {
    case Theorem::kGcnFeature: return "gcn_feature";
    case Theorem::kGcnStructural: return "gcn_structural";
    case Theorem::kGinFeature: return "gin_feature";
    case Theorem::kDnn: return "dnn";
    case Theorem::kStrongConvex: return "strong_convex";
    case Theorem::kGaussianExpected: break;
  }
  return "gaussian_expected";
}

double BoundReport::rederive() const {
  double p = prefactor;
  for (double f : per_layer_factors) p *= f;
  return p * tail;
}

std::string BoundReport::csv_header(std::size_t num_layers) {
  std::string h = "theorem_id,variant,epsilon,epochs,gamma";
  for (std::size_t i = 1; i <= num_layers; ++i) h += ",factor_" + std::to_string(i);
  h += ",eta_L_ok,converged";
  return h;
}

std::string BoundReport::csv_row() const {
  std::ostringstream os;
  os << theorem_name(theorem) << ',' << variant_name(variant) << ',';
  write_number(os, epsilon);
  os << ',' << epochs << ',';
  write_number(os, gamma);
  for (double f : per_layer_factors) {
    os << ',';
    write_number(os, f);
  }
  os << ',' << (eta_l_ok ? (*eta_l_ok ? "true" : "false") : "na") << ',' << (converged ? "true" : "false");
  return os.str();
}

double layer_factor(double growth, std::size_t epochs, double w0_norm, double wstar_norm) {
  const double ct = std::pow(growth, static_cast<double>(epochs));
  return ct * w0_norm + 2.0 * ct * wstar_norm;
}

double growth_factor(const BoundInput& b) {
  if (b.variant == BoundVariant::kPow2) return 2.0;
  const double l = required(b.smoothness, "smoothness");
  if (!(b.eta > 0.0) || !(l >= 0.0)) throw BoundInputError("bound: sharpened variant needs eta > 0, L >= 0");
  return 1.0 + b.eta * l;
}

BoundReport gcn_feature_bound(const BoundInput& b) {
  require_layers(b);
  BoundReport r = base_report(Theorem::kGcnFeature, b);
  r.per_layer_factors = factors(b);
  r.prefactor = b.epsilon;
  r.tail = required(b.walk_total, "walk_total");
  finish(r);
  return r;
}

BoundReport gcn_structural_bound(const BoundInput& b) {
  require_layers(b);
  BoundReport r = base_report(Theorem::kGcnStructural, b);
  r.per_layer_factors = factors(b);
  r.prefactor = b.epsilon;
  const double p = product(r.per_layer_factors);
  const double layers = static_cast<double>(b.w0_norms.size());
  r.tail = required(b.x_norm, "x_norm") * (1.0 + layers * p);
  finish(r);
  return r;
}

BoundReport gin_feature_bound(const BoundInput& b) {
  require_layers(b);
  BoundReport r = base_report(Theorem::kGinFeature, b);
  r.per_layer_factors = factors(b);
  r.prefactor = 1.0;
  const double layers = static_cast<double>(b.w0_norms.size());
  r.tail = required(b.feat_bound, "feat_bound") * layers * required(b.max_degree, "max_degree") + b.epsilon;
  finish(r);
  return r;
}

BoundReport dnn_bound(const BoundInput& b) {
  require_layers(b);
  BoundReport r = base_report(Theorem::kDnn, b);
  r.per_layer_factors = factors(b);
  r.prefactor = b.epsilon;
  r.tail = 1.0;
  finish(r);
  return r;
}

BoundReport strong_convex_bound(const BoundInput& b) {
  require_layers(b);
  const double mu = required(b.strong_convexity, "strong_convexity");
  const double l = required(b.smoothness, "smoothness");
  if (!(mu > 0.0 && mu <= l)) throw BoundInputError("bound: need 0 < mu <= L");
  BoundReport r = base_report(Theorem::kStrongConvex, b);
  const double contraction = std::pow(1.0 - mu / l, static_cast<double>(b.epochs));
  for (std::size_t i = 0; i < b.w0_norms.size(); ++i) {
    r.per_layer_factors.push_back(contraction * b.w0_norms[i] + 2.0 * b.wstar_norms[i]);
  }
  r.prefactor = b.epsilon;
  r.tail = 1.0;
  finish(r);
  return r;
}

BoundReport gaussian_expected_bound(const BoundInput& b, const InitScheme& scheme,
                                    const std::vector<std::pair<std::size_t, std::size_t>>& shapes,
                                    MeanReading reading) {
  if (shapes.size() != b.wstar_norms.size()) {
    throw BoundInputError("gaussian_expected_bound: one shape per layer required");
  }
  BoundInput expected = b;
  expected.w0_norms.clear();
  for (const auto& [rows, cols] : shapes) {
    const auto bound = expected_norm_bound(scheme, rows, cols, reading);
    if (!bound) throw BoundInputError("gaussian_expected_bound: scheme is not Gaussian");
    expected.w0_norms.push_back(*bound);
  }
  BoundReport r = gcn_feature_bound(expected);
  r.theorem = Theorem::kGaussianExpected;
  return r;
}

RecursionReport norm_recursion_check(const std::vector<std::vector<double>>& per_epoch_norms,
                                     const std::vector<double>& wstar_norms, double smoothness, double eta,
                                     double slack_tol) {
  RecursionReport report;
  report.min_slack = INFINITY;
  if (per_epoch_norms.empty()) return report;
  const auto& w0 = per_epoch_norms.front();
  if (wstar_norms.size() != w0.size()) throw BoundInputError("norm_recursion_check: layer count mismatch");
  const double growth = 1.0 + eta * smoothness;
  for (std::size_t e = 0; e < per_epoch_norms.size(); ++e) {
    const double ge = std::pow(growth, static_cast<double>(e));
    const double pe = std::pow(2.0, static_cast<double>(e + 1));
    for (std::size_t l = 0; l < w0.size(); ++l) {
      RecursionRow row;
      row.epoch = e;
      row.layer = l;
      row.norm = per_epoch_norms[e][l];
      row.bound = ge * w0[l] + pe * wstar_norms[l];
      row.slack = row.bound - row.norm;
      row.pass = row.norm <= row.bound + slack_tol;
      report.pass = report.pass && row.pass;
      report.min_slack = std::min(report.min_slack, row.slack);
      report.rows.push_back(row);
    }
  }
  return report;
}

RecursionReport norm_recursion_check(const Trajectory& traj, double smoothness, double eta) {
  return norm_recursion_check(traj.per_epoch_norms, wstar_proxy(traj).norms, smoothness, eta);
}

RecursionReport strong_convex_recursion_check(const std::vector<std::vector<double>>& per_epoch_norms,
                                              const std::vector<double>& wstar_norms, double mu, double smoothness,
                                              double slack_tol) {
  RecursionReport report;
  report.min_slack = INFINITY;
  if (per_epoch_norms.empty()) return report;
  if (!(mu > 0.0 && mu <= smoothness)) throw BoundInputError("strong_convex_recursion_check: need 0 < mu <= L");
  const auto& w0 = per_epoch_norms.front();
  if (wstar_norms.size() != w0.size()) throw BoundInputError("strong_convex_recursion_check: layer count mismatch");
  const double rate = 1.0 - mu / smoothness;
  for (std::size_t e = 0; e < per_epoch_norms.size(); ++e) {
    const double ce = std::pow(rate, static_cast<double>(e));
    for (std::size_t l = 0; l < w0.size(); ++l) {
      RecursionRow row;
      row.epoch = e;
      row.layer = l;
      row.norm = per_epoch_norms[e][l];
      row.bound = ce * w0[l] + 2.0 * wstar_norms[l];
      row.slack = row.bound - row.norm;
      row.pass = row.norm <= row.bound + slack_tol;
      report.pass = report.pass && row.pass;
      report.min_slack = std::min(report.min_slack, row.slack);
      report.rows.push_back(row);
    }
  }
  return report;
}

}  // namespace robinit
