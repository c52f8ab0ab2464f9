#include <cmath>
#include <fstream>
#include <random>

#include "doctest.h"
#include "fd_oracle.hpp"
#include "robinit/init.hpp"
#include "robinit/nn.hpp"
#include "test_util.hpp"

using namespace robinit;
using namespace robinit::testing;

namespace {

Model single_layer(Arch arch, Matrix w, Activation act = Activation::kIdentity,
                   std::optional<Vector> bias = std::nullopt) {
  Model m;
  m.arch = arch;
  m.layers.push_back(Layer{std::move(w), std::move(bias), act});
  return m;
}

// 6-node graph: two triangles joined by the edge 2-3.
Graph six_nodes() {
  Graph g;
  g.adjacency = adjacency_from_edges(6, {{0, 1}, {0, 2}, {1, 2}, {2, 3}, {3, 4}, {3, 5}, {4, 5}});
  g.features = random_matrix(6, 3, 41);
  g.labels = {0, 0, 1, 1, 2, 2};
  g.splits = {Split::kTrain, Split::kTrain, Split::kTest, Split::kTrain, Split::kVal, Split::kTrain};
  g.num_classes = 3;
  return g;
}

FdSetup fd_setup(Arch arch, bool self_loops, std::uint64_t seed) {
  const Graph g = six_nodes();
  FdSetup s;
  s.model = build_model(ModelSpec{arch, {3, 4, 3}, Activation::kTanh}, GaussianInit{0.0, 0.7}, seed);
  if (arch == Arch::kMlp) {
    // Nonzero biases so their gradient path is exercised.
    for (auto& layer : s.model.layers)
      for (auto& b : layer.bias->data()) b = 0.1;
  }
  s.adjacency = g.adjacency;
  s.features = g.features;
  s.labels = g.labels;
  s.mask = g.mask(Split::kTrain);
  s.self_loops = self_loops;
  return s;
}

Objective quadratic(double target, double lambda) {
  return [=](std::span<const Matrix> p, std::vector<Matrix>& g) {
    const double w = p[0](0, 0);
    g.assign(1, Matrix{{lambda * (w - target)}});
    return 0.5 * lambda * (w - target) * (w - target);
  };
}

}  // namespace

TEST_CASE("gcn_forward examples") {
  const Matrix x = random_matrix(3, 2, 1);
  NormalizedAdjacency identity{Matrix::identity(3), {1, 1, 1}};
  CHECK(gcn_forward(single_layer(Arch::kGcn, Matrix::identity(2)), identity, x).logits == x);

  Model two;
  two.arch = Arch::kGcn;
  two.layers = {Layer{Matrix{{1}}, std::nullopt, Activation::kTanh},
                Layer{Matrix{{1}}, std::nullopt, Activation::kIdentity}};
  const auto cache = gcn_forward(two, normalize_adjacency(path2()), Matrix{{1}, {2}});
  CHECK(cache.pre[0] == Matrix{{2}, {1}});
  CHECK(cache.inputs[1] == Matrix{{std::tanh(2.0)}, {std::tanh(1.0)}});

  Model zero = two;
  for (auto& l : zero.layers) l.weights = Matrix(1, 1);
  CHECK(gcn_forward(zero, normalize_adjacency(path2()), Matrix{{1}, {2}}).logits == Matrix(2, 1));
}

TEST_CASE("gin_forward examples") {
  Graph edgeless = triangle();
  edgeless.adjacency = Matrix(3, 3);
  const Matrix w = random_matrix(3, 2, 5);
  Model m = single_layer(Arch::kGin, w);
  CHECK(gin_forward(m, edgeless, edgeless.features).logits == matmul(edgeless.features, w));

  Graph one;
  one.adjacency = Matrix(1, 1);
  one.features = Matrix{{4, -1}};
  one.labels = {0};
  one.splits = {Split::kTrain};
  one.num_classes = 1;
  CHECK(gin_forward(single_layer(Arch::kGin, Matrix::identity(2)), one, one.features).logits == one.features);

  CHECK(gin_forward(single_layer(Arch::kGin, Matrix{{1}}), path2(), Matrix{{1}, {2}}).logits ==
        Matrix{{3}, {3}});
}

TEST_CASE("mlp_forward examples") {
  const Matrix x = random_matrix(4, 3, 2);
  CHECK(mlp_forward(single_layer(Arch::kMlp, Matrix::identity(3), Activation::kIdentity, Vector(3)), x).logits ==
        x);
  CHECK(mlp_forward(single_layer(Arch::kMlp, Matrix{{2}}, Activation::kIdentity, Vector{1}), Matrix{{3}}).logits ==
        Matrix{{7}});

  Model tanh_net;
  tanh_net.arch = Arch::kMlp;
  tanh_net.layers = {Layer{random_matrix(3, 4, 3), Vector(4), Activation::kTanh},
                     Layer{random_matrix(4, 2, 4), Vector(2), Activation::kIdentity}};
  CHECK(mlp_forward(tanh_net, Matrix(5, 3)).logits == Matrix(5, 2));
}

TEST_CASE("model validation") {
  Model gcn_bias = single_layer(Arch::kGcn, Matrix::identity(2), Activation::kIdentity, Vector(2));
  CHECK_THROWS(gcn_bias.validate());
  Model tanh_last = single_layer(Arch::kGcn, Matrix::identity(2), Activation::kTanh);
  CHECK_THROWS(tanh_last.validate());
  Model broken;
  broken.arch = Arch::kGcn;
  broken.layers = {Layer{Matrix(2, 3), std::nullopt, Activation::kTanh},
                   Layer{Matrix(2, 2), std::nullopt, Activation::kIdentity}};
  CHECK_THROWS(broken.validate());
}

TEST_CASE("cross_entropy examples") {
  const std::vector<int> labels{0, 1, 2, 3};
  const std::vector<std::size_t> mask{0, 1, 2, 3};
  CHECK(cross_entropy(Matrix(4, 4, 0.7), labels, mask) == doctest::Approx(std::log(4.0)));

  CHECK(cross_entropy(Matrix{{50, 0}}, std::vector<int>{0}, std::vector<std::size_t>{0}) < 1e-6);
  CHECK(cross_entropy(Matrix{{0, std::log(3.0)}}, std::vector<int>{1}, std::vector<std::size_t>{0}) ==
        doctest::Approx(std::log(4.0 / 3.0)));

  // Large logits stay finite thanks to max subtraction.
  CHECK(std::isfinite(cross_entropy(Matrix{{1000, -1000}}, std::vector<int>{1}, std::vector<std::size_t>{0})));
  CHECK_THROWS(cross_entropy(Matrix(2, 2), std::vector<int>{0, 1}, std::vector<std::size_t>{}));
}

TEST_CASE("gradients match finite differences on a 6-node graph") {
  for (Arch arch : {Arch::kGcn, Arch::kGin, Arch::kMlp}) {
    for (bool loops : {false, true}) {
      if (arch != Arch::kGcn && loops) continue;
      for (std::uint64_t seed : {1u, 2u}) {
        const FdReport r = check_gradients(fd_setup(arch, loops, seed));
        INFO(arch_name(arch), " loops=", loops, " seed=", seed, " worst at ", r.where);
        CHECK(r.checked > 30);
        CHECK(r.worst <= 1e-4);
      }
    }
  }
}

TEST_CASE("relu gradients match finite differences away from kinks") {
  FdSetup s = fd_setup(Arch::kGcn, false, 3);
  s.model.layers[0].activation = Activation::kRelu;
  const FdReport r = check_gradients(s);
  INFO("worst at ", r.where);
  CHECK(r.worst <= 1e-4);
}

TEST_CASE("isolated node feature gradient is zero under GCN without self-loops") {
  Graph g = six_nodes();
  for (std::size_t j = 0; j < 6; ++j) g.adjacency(5, j) = g.adjacency(j, 5) = 0.0;
  g.splits[5] = Split::kTrain;
  const Model m = build_model(ModelSpec{Arch::kGcn, {3, 4, 3}, Activation::kTanh}, GaussianInit{0, 1}, 9);
  const auto cache = forward(m, g);
  const Gradients grad = backward(m, cache, g.labels, g.mask(Split::kTrain));
  for (std::size_t j = 0; j < 3; ++j) CHECK(grad.input(5, j) == 0.0);
}

TEST_CASE("gradient vanishes at the optimum of a convex toy problem") {
  // Zero inputs, balanced labels: logits = b and the loss is minimized at b = 0.
  const Model m = single_layer(Arch::kMlp, Matrix{{0.3, -0.2}}, Activation::kIdentity, Vector(2));
  const auto cache = mlp_forward(m, Matrix(2, 1));
  const Gradients g = backward(m, cache, std::vector<int>{0, 1}, std::vector<std::size_t>{0, 1});
  CHECK(max_abs(g.weights[0]) < 1e-8);
  CHECK(std::abs((*g.biases[0])[0]) < 1e-8);
  CHECK(std::abs((*g.biases[0])[1]) < 1e-8);
}

TEST_CASE("gradient descent on a 1-D quadratic follows the hand recursion") {
  const std::vector<std::size_t> tracked{0};
  std::vector<double> iterates;
  CheckpointFn record = [&](std::size_t, std::span<const Matrix> p, const Trajectory&) {
    iterates.push_back(p[0](0, 0));
  };
  const Trajectory t = gradient_descent(quadratic(3.0, 1.0), {Matrix{{0.0}}}, tracked, GdOptions{0.1, 2, 1}, record);
  REQUIRE(iterates.size() == 3);
  CHECK(iterates[0] == 0.0);
  CHECK(iterates[1] == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(iterates[2] == doctest::Approx(0.57).epsilon(1e-15));
  CHECK(t.per_epoch_norms.size() == 3);
  CHECK(t.loss_curve.size() == 3);
  CHECK(t.final_params[0](0, 0) == doctest::Approx(0.57));
}

TEST_CASE("gradient descent with zero epochs keeps the initial point") {
  const std::vector<std::size_t> tracked{0};
  const Trajectory t = gradient_descent(quadratic(3.0, 1.0), {Matrix{{-2.0}}}, tracked, GdOptions{0.1, 0, 0});
  REQUIRE(t.per_epoch_norms.size() == 1);
  CHECK(t.per_epoch_norms[0] == t.w0_norms);
  CHECK(t.w0_norms[0] == doctest::Approx(2.0));
  CHECK(t.final_params[0](0, 0) == -2.0);

  const WstarProxy w = wstar_proxy(t);
  CHECK_FALSE(w.converged);
  CHECK(w.norms == t.w0_norms);
  CHECK_THROWS(estimate_smoothness(t));
}

TEST_CASE("gradient descent reports the divergence epoch") {
  // Concave objective -w^2 grows the iterate by 3x per step until overflow.
  Objective concave = [](std::span<const Matrix> p, std::vector<Matrix>& g) {
    const double w = p[0](0, 0);
    g.assign(1, Matrix{{-2 * w}});
    return -w * w;
  };
  const std::vector<std::size_t> tracked{0};
  try {
    gradient_descent(concave, {Matrix{{1.0}}}, tracked, GdOptions{1.0, 2000, 0});
    FAIL("expected DivergenceError");
  } catch (const DivergenceError& e) {
    // 3^e exceeds sqrt(DBL_MAX) near e = 323.
    CHECK(e.epoch() > 300);
    CHECK(e.epoch() < 700);
  }
}

TEST_CASE("estimate_smoothness on a quadratic is 1.5 lambda") {
  const std::vector<std::size_t> tracked{0};
  for (double lambda : {0.5, 2.0, 7.0}) {
    const Trajectory t =
        gradient_descent(quadratic(1.0, lambda), {Matrix{{-4.0}}}, tracked, GdOptions{0.05, 10, 0});
    CHECK(estimate_smoothness(t) == doctest::Approx(1.5 * lambda).epsilon(1e-12));
  }
}

TEST_CASE("estimate_smoothness on linear least squares matches the Hessian eigenvalue") {
  // Columns of very different scale: the Hessian (2/n) XᵀX has a dominant eigenvalue.
  const std::size_t n = 40;
  Matrix x = random_matrix(n, 2, 12);
  for (std::size_t i = 0; i < n; ++i) {
    x(i, 0) *= 3.0;
    x(i, 1) *= 0.3;
  }
  const Matrix w_true{{1.0}, {-2.0}};
  const Matrix y = matmul(x, w_true);
  Objective mse = [&](std::span<const Matrix> p, std::vector<Matrix>& g) {
    const Matrix r = subtract(matmul(x, p[0]), y);
    g.assign(1, scale(matmul_tn(x, r), 2.0 / n));
    const double f = frobenius_norm(r);
    return f * f / n;
  };
  // Closed-form top eigenvalue of the 2x2 Gram (2/n) XᵀX.
  double a = 0, b = 0, d = 0;
  for (std::size_t i = 0; i < n; ++i) {
    a += x(i, 0) * x(i, 0);
    b += x(i, 0) * x(i, 1);
    d += x(i, 1) * x(i, 1);
  }
  a *= 2.0 / n;
  b *= 2.0 / n;
  d *= 2.0 / n;
  const double lambda_max = (a + d) / 2 + std::sqrt((a - d) * (a - d) / 4 + b * b);

  const std::vector<std::size_t> tracked{0};
  const Trajectory t =
      gradient_descent(mse, {Matrix{{0.0}, {0.0}}}, tracked, GdOptions{0.5 / lambda_max, 50, 0});
  const double lhat = estimate_smoothness(t) / 1.5;
  CHECK(lhat <= lambda_max * (1 + 1e-9));
  CHECK(lhat >= 0.95 * lambda_max);
}

TEST_CASE("wstar_proxy examples") {
  const std::vector<std::size_t> tracked{0};
  const Trajectory at_opt = gradient_descent(quadratic(3.0, 1.0), {Matrix{{3.0}}}, tracked, GdOptions{0.1, 5, 0});
  const WstarProxy w0 = wstar_proxy(at_opt);
  CHECK(w0.converged);
  CHECK(w0.epoch == 0);
  CHECK(w0.norms == at_opt.w0_norms);

  const double lambda = 1.0;
  const Trajectory long_run =
      gradient_descent(quadratic(3.0, lambda), {Matrix{{0.0}}}, tracked, GdOptions{0.1, 300, 0});
  const WstarProxy ws = wstar_proxy(long_run, 1e-3);
  CHECK(ws.converged);
  CHECK(std::abs(ws.norms[0] - 3.0) <= 1e-3 / lambda);
  CHECK(long_run.grad_norms[ws.epoch] < 1e-3);
  CHECK(long_run.grad_norms[ws.epoch - 1] >= 1e-3);
}

TEST_CASE("train_gd records a full trajectory and is bit-deterministic") {
  SbmParams p;
  p.num_nodes = 40;
  p.num_classes = 2;
  p.p_in = 0.3;
  p.p_out = 0.02;
  p.feature_dim = 4;
  p.seed = 3;
  const Graph g = gen_sbm(p);
  for (Arch arch : {Arch::kGcn, Arch::kGin, Arch::kMlp}) {
    const Model m = build_model(ModelSpec{arch, {4, 16, 2}, Activation::kTanh}, GaussianInit{0, 0.3}, 4);
    TrainOptions opts;
    opts.epochs = 25;
    opts.eta = arch == Arch::kGin ? 1e-3 : 1e-2;
    const Trajectory a = train_gd(m, g, opts);
    const Trajectory b = train_gd(m, g, opts);
    CHECK(a.per_epoch_norms.size() == 26);
    CHECK(a.loss_curve.size() == 26);
    CHECK(a.per_epoch_norms == b.per_epoch_norms);
    CHECK(a.loss_curve == b.loss_curve);
    CHECK(*a.final_model == *b.final_model);
    CHECK(a.loss_curve.back() < a.loss_curve.front());
    for (double l : a.loss_curve) CHECK(std::isfinite(l));
    CHECK(a.w0_norms[0] == doctest::Approx(spectral_norm(m.layers[0].weights)).epsilon(1e-8));
  }
}

TEST_CASE("train_gd with zero epochs returns the initial model") {
  const Graph g = six_nodes();
  const Model m = build_model(ModelSpec{Arch::kGcn, {3, 4, 3}, Activation::kTanh}, GaussianInit{0, 1}, 2);
  TrainOptions opts;
  opts.epochs = 0;
  const Trajectory t = train_gd(m, g, opts);
  CHECK(t.per_epoch_norms.size() == 1);
  CHECK(*t.final_model == m);
}

TEST_CASE("model and trajectory files round trip bit-exactly") {
  const auto dir = temp_dir("nn_io");
  const Model mlp = build_model(ModelSpec{Arch::kMlp, {3, 5, 2}, Activation::kRelu}, GaussianInit{0.1, 0.9}, 8);
  save_model(mlp, dir / "mlp.txt");
  CHECK(load_model(dir / "mlp.txt") == mlp);

  const Model gcn = build_model(ModelSpec{Arch::kGcn, {3, 4, 3}, Activation::kTanh}, UniformInit{2.0}, 8);
  save_model(gcn, dir / "gcn.txt");
  CHECK(load_model(dir / "gcn.txt") == gcn);

  TrainOptions opts;
  opts.epochs = 5;
  Trajectory t = train_gd(gcn, six_nodes(), opts);
  t.smoothness_estimate = estimate_smoothness(t);
  save_trajectory(t, dir / "traj.txt");
  const Trajectory back = load_trajectory(dir / "traj.txt");
  CHECK(back.eta == t.eta);
  CHECK(back.epochs == t.epochs);
  CHECK(back.per_epoch_norms == t.per_epoch_norms);
  CHECK(back.loss_curve == t.loss_curve);
  CHECK(back.grad_norms == t.grad_norms);
  CHECK(back.smoothness_estimate == t.smoothness_estimate);

  std::ofstream(dir / "bad.txt") << "robinit-model 1\narch gat\n";
  CHECK_THROWS(load_model(dir / "bad.txt"));
}

TEST_CASE("activations are 1-Lipschitz") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> normal(0.0, 3.0);
  for (int k = 0; k < 1000; ++k) {
    const double a = normal(rng), b = normal(rng);
    for (Activation act : {Activation::kTanh, Activation::kRelu, Activation::kIdentity})
      CHECK(std::abs(activate(act, a) - activate(act, b)) <= std::abs(a - b));
  }
}

TEST_CASE("MLP output distance is bounded by the product of weight norms") {
  const Model m = build_model(ModelSpec{Arch::kMlp, {5, 8, 8, 3}, Activation::kTanh}, GaussianInit{0, 1}, 21);
  double prod = 1.0;
  for (const auto& layer : m.layers) prod *= spectral_norm(layer.weights);
  std::mt19937_64 rng(22);
  std::normal_distribution<double> normal;
  for (int k = 0; k < 1000; ++k) {
    Matrix x(1, 5), y(1, 5);
    for (std::size_t j = 0; j < 5; ++j) {
      x(0, j) = normal(rng);
      y(0, j) = x(0, j) + 0.1 * normal(rng);
    }
    const double out = frobenius_norm(subtract(mlp_forward(m, x).logits, mlp_forward(m, y).logits));
    CHECK(out <= prod * frobenius_norm(subtract(x, y)) * (1 + 1e-12));
  }
}

TEST_CASE("GCN feature perturbation is bounded by weight norms times walk sums") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Graph g = gen_erdos_renyi(15, 0.3, 50 + seed);
    const Model m = build_model(ModelSpec{Arch::kGcn, {15, 8, 4}, Activation::kTanh}, GaussianInit{0, 1}, seed);
    double prod = 1.0;
    for (const auto& layer : m.layers) prod *= spectral_norm(layer.weights);
    const auto na = normalize_adjacency(g);
    const double walks = walk_sums(na, m.num_layers() - 1).total;
    for (std::uint64_t k = 0; k < 20; ++k) {
      const Matrix delta = random_matrix(15, 15, 1000 * seed + k, 0.05);
      const Matrix out = subtract(gcn_forward(m, na, g.features).logits,
                                  gcn_forward(m, na, add(g.features, delta)).logits);
      CHECK(spectral_norm(out) <= prod * spectral_norm(delta) * walks * (1 + 1e-8));
    }
  }
}

TEST_CASE("parameter packing round trips") {
  const Model m = build_model(ModelSpec{Arch::kMlp, {3, 4, 2}, Activation::kTanh}, GaussianInit{0, 1}, 1);
  const auto packed = pack_params(m);
  CHECK(packed.size() == 4);
  CHECK(weight_param_indices(m) == std::vector<std::size_t>{0, 2});
  CHECK(unpack_params(m, packed) == m);
}
