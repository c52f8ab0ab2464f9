#include "robinit/init.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace robinit {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

Matrix standard_normal(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (auto& x : m.data()) x = normal(rng);
  return m;
}

Matrix uniform(std::size_t rows, std::size_t cols, double bound, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  if (bound == 0.0) return m;
  for (auto& x : m.data()) x = dist(rng);
  return m;
}

Matrix scaled_orthogonal(std::size_t rows, std::size_t cols, double beta, std::uint64_t seed) {
  // Re-sample on the (probability zero) rank-deficient draw.
  for (std::uint64_t attempt = 0;; ++attempt) {
    const bool tall = rows >= cols;
    const Matrix draw = tall ? standard_normal(rows, cols, mix_seed(seed, attempt))
                             : standard_normal(cols, rows, mix_seed(seed, attempt));
    try {
      Matrix q = orthogonalize(draw);
      if (!tall) q = transpose(q);
      return scale(q, beta);
    } catch (const RankDeficientError&) {
      if (attempt > 16) throw;
    }
  }
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string scheme_name(const InitScheme& s) {
  return std::visit(overloaded{
                        [](const GaussianInit&) { return std::string("gaussian"); },
                        [](const UniformInit&) { return std::string("uniform"); },
                        [](const ScaledOrthogonalInit&) { return std::string("orthogonal"); },
                        [](const GlorotInit&) { return std::string("glorot"); },
                        [](const KaimingInit&) { return std::string("kaiming"); },
                        [](const ConstantInit&) { return std::string("constant"); },
                    },
                    s);
}

InitScheme make_scheme(const std::string& name, double mu, double sigma, double beta, double constant) {
  InitScheme s;
  if (name == "gaussian") s = GaussianInit{mu, sigma};
  else if (name == "uniform") s = UniformInit{beta};
  else if (name == "orthogonal") s = ScaledOrthogonalInit{beta};
  else if (name == "glorot" || name == "xavier") s = GlorotInit{};
  else if (name == "kaiming") s = KaimingInit{};
  else if (name == "constant") s = ConstantInit{constant};
  else throw std::invalid_argument("unknown init scheme '" + name + "'");
  validate_scheme(s);
  return s;
}

void validate_scheme(const InitScheme& s) {
  auto check = [](double v, bool nonneg, const char* what) {
    if (!std::isfinite(v) || (nonneg && v < 0.0)) {
      throw std::invalid_argument(std::string("init: invalid ") + what);
    }
  };
  std::visit(overloaded{
                 [&](const GaussianInit& g) {
                   check(g.mu, false, "mu");
                   check(g.sigma, true, "sigma");
                 },
                 [&](const UniformInit& u) { check(u.beta, true, "beta"); },
                 [&](const ScaledOrthogonalInit& o) { check(o.beta, true, "beta"); },
                 [](const GlorotInit&) {},
                 [](const KaimingInit&) {},
                 [&](const ConstantInit& c) { check(c.value, false, "constant"); },
             },
             s);
}

Matrix initialize(const InitScheme& scheme, std::size_t rows, std::size_t cols, std::uint64_t seed) {
  if (rows == 0 || cols == 0) throw DimensionError("initialize: empty shape");
  validate_scheme(scheme);
  return std::visit(
      overloaded{
          [&](const GaussianInit& g) {
            Matrix m = standard_normal(rows, cols, seed);
            for (auto& x : m.data()) x = g.mu + g.sigma * x;
            return m;
          },
          [&](const UniformInit& u) { return uniform(rows, cols, u.beta, seed); },
          [&](const ScaledOrthogonalInit& o) { return scaled_orthogonal(rows, cols, o.beta, seed); },
          [&](const GlorotInit&) {
            return uniform(rows, cols, std::sqrt(6.0 / static_cast<double>(rows + cols)), seed);
          },
          [&](const KaimingInit&) {
            return scale(standard_normal(rows, cols, seed), std::sqrt(2.0 / static_cast<double>(rows)));
          },
          [&](const ConstantInit& c) { return Matrix(rows, cols, c.value); },
      },
      scheme);
}

std::optional<double> expected_norm_bound(const InitScheme& scheme, std::size_t rows, std::size_t cols,
                                          MeanReading reading) {
  const auto* g = std::get_if<GaussianInit>(&scheme);
  if (g == nullptr) return std::nullopt;
  const double entries = static_cast<double>(rows * cols);
  const double mean_sq = reading == MeanReading::kVectorized ? entries * g->mu * g->mu : g->mu * g->mu;
  return std::sqrt(mean_sq + entries * g->sigma * g->sigma);
}

Model build_model(const ModelSpec& spec, const InitScheme& scheme, std::uint64_t seed) {
  if (spec.dims.size() < 2) throw std::invalid_argument("build_model: need input and output dims");
  Model m;
  m.arch = spec.arch;
  for (std::size_t l = 0; l + 1 < spec.dims.size(); ++l) {
    Layer layer;
    layer.weights = initialize(scheme, spec.dims[l], spec.dims[l + 1], mix_seed(seed, l));
    layer.activation = l + 2 == spec.dims.size() ? Activation::kIdentity : spec.activation;
    if (spec.arch == Arch::kMlp) layer.bias = Vector(spec.dims[l + 1], 0.0);
    m.layers.push_back(std::move(layer));
  }
  m.validate();
  return m;
}

}  // namespace robinit
