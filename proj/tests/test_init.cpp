#include <cmath>

#include "doctest.h"
#include "robinit/init.hpp"
#include "test_util.hpp"

using namespace robinit;

TEST_CASE("constant initialization") {
  CHECK(initialize(ConstantInit{0.0}, 3, 4, 1) == Matrix(3, 4));
  CHECK(initialize(ConstantInit{2.5}, 2, 2, 9) == Matrix(2, 2, 2.5));
}

TEST_CASE("scaled orthogonal has spectral norm beta") {
  for (double beta : {0.5, 1.0, 2.0, 4.0}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      CHECK(std::abs(spectral_norm(initialize(ScaledOrthogonalInit{beta}, 8, 8, seed)) - beta) < 1e-8);
      CHECK(std::abs(spectral_norm(initialize(ScaledOrthogonalInit{beta}, 10, 4, seed)) - beta) < 1e-8);
      // Wide shapes use orthonormal rows.
      CHECK(std::abs(spectral_norm(initialize(ScaledOrthogonalInit{beta}, 4, 10, seed)) - beta) < 1e-8);
    }
  }
}

TEST_CASE("gaussian sample mean is within four standard errors") {
  for (double sigma : {0.1, 1.0, 3.0}) {
    const Matrix w = initialize(GaussianInit{0.0, sigma}, 50, 40, 17);
    double mean = 0.0;
    for (double x : w.data()) mean += x;
    mean /= static_cast<double>(w.size());
    CHECK(std::abs(mean) <= 4 * sigma / std::sqrt(50.0 * 40.0));
  }
}

TEST_CASE("gaussian with nonzero mean shifts the draw") {
  const Matrix a = initialize(GaussianInit{0.0, 1.0}, 5, 5, 3);
  const Matrix b = initialize(GaussianInit{2.0, 1.0}, 5, 5, 3);
  CHECK(robinit::testing::max_abs_diff(subtract(b, a), Matrix(5, 5, 2.0)) < 1e-15);
}

TEST_CASE("expected_norm_bound examples") {
  CHECK(*expected_norm_bound(GaussianInit{0.0, 1.0}, 2, 2) == 2.0);
  for (double sigma : {0.1, 0.5, 2.0})
    CHECK(*expected_norm_bound(GaussianInit{0.0, sigma}, 6, 3) == doctest::Approx(sigma * std::sqrt(18.0)));
  // Vectorized reading counts the mean once per entry.
  CHECK(*expected_norm_bound(GaussianInit{1.0, 0.0}, 3, 3) == doctest::Approx(3.0));
  CHECK(*expected_norm_bound(GaussianInit{1.0, 0.0}, 3, 3, MeanReading::kScalar) == doctest::Approx(1.0));
  CHECK_FALSE(expected_norm_bound(UniformInit{1.0}, 2, 2).has_value());
  CHECK_FALSE(expected_norm_bound(ScaledOrthogonalInit{1.0}, 2, 2).has_value());
}

TEST_CASE("expected_norm_bound dominates the Monte-Carlo mean norm") {
  for (const GaussianInit g : {GaussianInit{0.0, 1.0}, GaussianInit{0.3, 0.5}}) {
    const std::size_t rows = 4, cols = 3, draws = 10000;
    double frob = 0.0, spec = 0.0;
    for (std::size_t k = 0; k < draws; ++k) {
      const Matrix w = initialize(g, rows, cols, 100000 + k);
      frob += frobenius_norm(w);
      spec += spectral_norm(w);
    }
    const double bound = *expected_norm_bound(g, rows, cols);
    CHECK(frob / draws <= bound);
    CHECK(spec / draws <= bound);
  }
}

TEST_CASE("uniform entries are bounded by beta") {
  for (double beta : {0.5, 1.0, 4.0}) {
    const Matrix w = initialize(UniformInit{beta}, 7, 9, 5);
    CHECK(max_abs(w) <= beta);
    CHECK(spectral_norm(w) <= beta * std::sqrt(63.0));
  }
  CHECK(initialize(UniformInit{0.0}, 3, 3, 1) == Matrix(3, 3));
}

TEST_CASE("glorot and kaiming scales") {
  const Matrix g = initialize(GlorotInit{}, 30, 20, 4);
  CHECK(max_abs(g) <= std::sqrt(6.0 / 50.0));
  const Matrix k = initialize(KaimingInit{}, 200, 50, 4);
  double var = 0.0;
  for (double x : k.data()) var += x * x;
  var /= static_cast<double>(k.size());
  CHECK(var == doctest::Approx(2.0 / 200.0).epsilon(0.05));
}

TEST_CASE("gaussian norm is monotone in sigma for a fixed seed") {
  double prev = -1.0;
  for (double sigma : {0.0, 0.1, 0.5, 1.0, 2.0, 8.0}) {
    const double n = spectral_norm(initialize(GaussianInit{0.0, sigma}, 16, 16, 42));
    CHECK(n >= prev);
    prev = n;
  }
}

TEST_CASE("initialization is reproducible and seed-sensitive") {
  const InitScheme schemes[] = {GaussianInit{0.1, 0.7}, UniformInit{2.0}, ScaledOrthogonalInit{1.5},
                                GlorotInit{},           KaimingInit{},    ConstantInit{0.3}};
  for (const auto& s : schemes) {
    CHECK(initialize(s, 6, 4, 11) == initialize(s, 6, 4, 11));
    if (!std::holds_alternative<ConstantInit>(s)) CHECK_FALSE(initialize(s, 6, 4, 11) == initialize(s, 6, 4, 12));
  }
}

TEST_CASE("scheme parsing and validation") {
  CHECK(scheme_name(make_scheme("xavier", 0, 0, 0, 0)) == "glorot");
  CHECK(scheme_name(make_scheme("orthogonal", 0, 0, 2, 0)) == "orthogonal");
  CHECK_THROWS_AS(make_scheme("lsuv", 0, 1, 1, 0), std::invalid_argument);
  CHECK_THROWS_AS(make_scheme("gaussian", 0, -1, 1, 0), std::invalid_argument);
  CHECK_THROWS_AS(make_scheme("uniform", 0, 1, -0.5, 0), std::invalid_argument);
  CHECK_THROWS_AS(make_scheme("gaussian", NAN, 1, 1, 0), std::invalid_argument);
}

TEST_CASE("build_model layer seeds and shapes") {
  const Model m = build_model(ModelSpec{Arch::kMlp, {5, 16, 16, 3}, Activation::kRelu}, GaussianInit{0, 1}, 7);
  REQUIRE(m.num_layers() == 3);
  CHECK(m.layers[0].weights == initialize(GaussianInit{0, 1}, 5, 16, mix_seed(7, 0)));
  CHECK(m.layers[1].weights == initialize(GaussianInit{0, 1}, 16, 16, mix_seed(7, 1)));
  CHECK(m.layers[0].activation == Activation::kRelu);
  CHECK(m.layers[2].activation == Activation::kIdentity);
  CHECK(*m.layers[1].bias == Vector(16));

  const Model g = build_model(ModelSpec{Arch::kGcn, {5, 16, 3}, Activation::kTanh}, UniformInit{1}, 7);
  CHECK_FALSE(g.layers[0].bias.has_value());
  CHECK_THROWS(build_model(ModelSpec{Arch::kGcn, {5}, Activation::kTanh}, UniformInit{1}, 7));
}
