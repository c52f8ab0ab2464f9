#ifndef ROBINIT_INIT_HPP_
#define ROBINIT_INIT_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "robinit/linalg.hpp"
#include "robinit/nn.hpp"

namespace robinit {

struct GaussianInit {
  double mu = 0.0;
  double sigma = 1.0;
};
struct UniformInit {
  double beta = 1.0;
};
struct ScaledOrthogonalInit {
  double beta = 1.0;
};
struct GlorotInit {};
// Fan-in normal with the relu gain, std = sqrt(2 / fan_in).
struct KaimingInit {};
struct ConstantInit {
  double value = 0.0;
};

using InitScheme =
    std::variant<GaussianInit, UniformInit, ScaledOrthogonalInit, GlorotInit, KaimingInit, ConstantInit>;

std::string scheme_name(const InitScheme& s);

/// Parses "gaussian", "uniform", "orthogonal", "glorot" (or "xavier"),
/// "kaiming", "constant" with the given numeric parameters.
InitScheme make_scheme(const std::string& name, double mu, double sigma, double beta, double constant);

/// Throws std::invalid_argument on negative σ/β or non-finite parameters.
void validate_scheme(const InitScheme& s);

/// rows x cols draw, reproducible per (scheme, shape, seed). Gaussian draws
/// share one standard-normal matrix per (shape, seed), so scaling σ rescales
/// the same sample.
Matrix initialize(const InitScheme& scheme, std::size_t rows, std::size_t cols, std::uint64_t seed);

enum class MeanReading {
  kVectorized,  // ‖μ‖² over all rows·cols entries
  kScalar,      // μ² once
};

/// sqrt(‖μ‖² + tr Σ) for a Gaussian scheme with Σ = σ²I; nullopt otherwise.
std::optional<double> expected_norm_bound(const InitScheme& scheme, std::size_t rows, std::size_t cols,
                                          MeanReading reading = MeanReading::kVectorized);

struct ModelSpec {
  Arch arch = Arch::kGcn;
  std::vector<std::size_t> dims;  // input, hidden..., output
  Activation activation = Activation::kTanh;
};

/// Layer l is drawn with a seed derived from (seed, l). MLP biases start at 0.
Model build_model(const ModelSpec& spec, const InitScheme& scheme, std::uint64_t seed);

/// splitmix64 step; used wherever sub-seeds are derived.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace robinit

#endif  // ROBINIT_INIT_HPP_
