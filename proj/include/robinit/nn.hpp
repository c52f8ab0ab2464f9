#ifndef ROBINIT_NN_HPP_
#define ROBINIT_NN_HPP_

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "robinit/graph.hpp"
#include "robinit/linalg.hpp"

namespace robinit {

enum class Arch { kGcn, kGin, kMlp };
enum class Activation { kTanh, kRelu, kIdentity };

const char* arch_name(Arch a);
Arch parse_arch(const std::string& s);
const char* activation_name(Activation a);
Activation parse_activation(const std::string& s);

double activate(Activation a, double z);

struct Layer {
  Matrix weights;  // in_dim x out_dim
  std::optional<Vector> bias;
  Activation activation = Activation::kTanh;

  bool operator==(const Layer&) const = default;
};

struct Model {
  Arch arch = Arch::kGcn;
  std::vector<Layer> layers;

  std::size_t num_layers() const { return layers.size(); }
  std::size_t input_dim() const { return layers.front().weights.rows(); }
  std::size_t output_dim() const { return layers.back().weights.cols(); }

  /// Dimension chaining, bias placement (MLP only) and identity last layer.
  void validate() const;

  bool operator==(const Model&) const = default;
};

/// Intermediates of one forward pass. inputs[l] is h^(l) fed into layer l,
/// transformed[l] = h^(l) W^(l), pre[l] the pre-activation.
struct ForwardCache {
  Arch arch = Arch::kGcn;
  Matrix propagation;  // Â for GCN, I + A for GIN, empty for MLP
  std::vector<Matrix> inputs;
  std::vector<Matrix> transformed;
  std::vector<Matrix> pre;
  Matrix logits;

  /// h^(0) .. h^(T), the last being the logits.
  std::vector<Matrix> hiddens() const;
};

ForwardCache gcn_forward(const Model& m, const NormalizedAdjacency& na, const Matrix& x);
ForwardCache gin_forward(const Model& m, const Graph& g, const Matrix& x);
ForwardCache mlp_forward(const Model& m, const Matrix& x);

/// Â (GCN, via normalize_dense) or I + A (GIN) for a possibly relaxed
/// dense adjacency.
Matrix propagation_matrix(Arch arch, const Matrix& adjacency, bool self_loops);

/// Shared propagation forward: φ(P h W) per layer, or φ(h W + b) for MLP.
ForwardCache forward_with_propagation(const Model& m, const Matrix& propagation, const Matrix& x);

/// Dispatches on m.arch. For MLP the graph structure is ignored.
ForwardCache forward(const Model& m, const Graph& g, const Matrix& x, bool self_loops = false);
inline ForwardCache forward(const Model& m, const Graph& g, bool self_loops = false) {
  return forward(m, g, g.features, self_loops);
}

/// Mean masked cross-entropy with max-subtracted softmax.
double cross_entropy(const Matrix& logits, std::span<const int> labels,
                     std::span<const std::size_t> mask);
/// d cross_entropy / d logits.
Matrix cross_entropy_grad(const Matrix& logits, std::span<const int> labels,
                          std::span<const std::size_t> mask);

struct Gradients {
  std::vector<Matrix> weights;
  std::vector<std::optional<Vector>> biases;
  Matrix input;
  std::optional<Matrix> propagation;
  std::optional<Matrix> adjacency;
};

/// Reverse pass from an arbitrary logits gradient.
Gradients backward_from_logits(const Model& m, const ForwardCache& cache, const Matrix& grad_logits,
                               bool want_propagation = false);

/// Gradient of the masked cross-entropy with respect to weights, biases and
/// input features. When `adjacency` is given (GCN/GIN), also the gradient with
/// respect to each entry of that dense adjacency, through normalization.
Gradients backward(const Model& m, const ForwardCache& cache, std::span<const int> labels,
                   std::span<const std::size_t> mask, const Matrix* adjacency = nullptr,
                   bool self_loops = false);

Matrix adjacency_gradient(Arch arch, const Matrix& adjacency, bool self_loops,
                          const Matrix& grad_propagation);

// ---------------------------------------------------------------------------
// Gradient descent

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::size_t epoch)
      : std::runtime_error(what), epoch_(epoch) {}
  std::size_t epoch() const { return epoch_; }

 private:
  std::size_t epoch_;
};

/// Loss and its gradient at `params`; grads is resized by the callee.
using Objective = std::function<double(std::span<const Matrix> params, std::vector<Matrix>& grads)>;

struct Trajectory {
  double eta = 0.0;
  std::size_t epochs = 0;
  std::vector<double> w0_norms;
  std::vector<std::vector<double>> per_epoch_norms;  // epochs + 1 rows
  std::vector<double> grad_norms;                    // ‖∇𝓛(W_e)‖_F, epochs + 1 entries
  std::vector<double> loss_curve;                    // epochs + 1 entries
  // ‖∇𝓛(W_{e+1}) − ∇𝓛(W_e)‖_F / ‖W_{e+1} − W_e‖_F; skipped when the iterates coincide.
  std::vector<double> smoothness_ratios;
  double smoothness_estimate = 0.0;  // 0 until estimate_smoothness succeeds
  std::vector<Matrix> final_params;
  std::optional<Model> final_model;
};

using CheckpointFn =
    std::function<void(std::size_t epoch, std::span<const Matrix> params, const Trajectory& sofar)>;

struct GdOptions {
  double eta = 1e-2;
  std::size_t epochs = 300;
  std::size_t eval_every = 0;  // 0: only the final epoch is a checkpoint
};

/// Full-batch W ← W − η∇𝓛(W). Norms are tracked for params listed in
/// `tracked` (the weight matrices). Throws DivergenceError on non-finite loss.
Trajectory gradient_descent(const Objective& objective, std::vector<Matrix> params,
                            std::span<const std::size_t> tracked, const GdOptions& opts,
                            const CheckpointFn& on_checkpoint = {});

struct TrainOptions {
  double eta = 1e-2;
  std::size_t epochs = 300;
  std::size_t eval_every = 0;
  bool self_loops = false;
  Split split = Split::kTrain;
};

using ModelCheckpointFn =
    std::function<void(std::size_t epoch, const Model& model, const Trajectory& sofar)>;

/// Cross-entropy training on the nodes of `opts.split`.
Trajectory train_gd(const Model& m, const Graph& g, const TrainOptions& opts,
                    const ModelCheckpointFn& on_checkpoint = {});

inline constexpr double kSmoothnessInflation = 1.5;

/// L̂ = inflation · max recorded gradient-difference ratio.
double estimate_smoothness(const Trajectory& traj, double inflation = kSmoothnessInflation);

inline constexpr double kWstarGradTol = 1e-3;

struct WstarProxy {
  std::vector<double> norms;
  bool converged = false;
  std::size_t epoch = 0;
};

/// Norms of the first iterate whose full gradient norm is below grad_tol,
/// otherwise the final iterate with converged = false.
WstarProxy wstar_proxy(const Trajectory& traj, double grad_tol = kWstarGradTol);

// Parameter packing used by train_gd: W_0, [b_0], W_1, [b_1], ...
std::vector<Matrix> pack_params(const Model& m);
Model unpack_params(const Model& shape, std::span<const Matrix> params);
std::vector<std::size_t> weight_param_indices(const Model& m);

// Checkpoint and trajectory files; both are line-oriented text with
// shortest round-trip decimal values.
void save_model(const Model& m, const std::filesystem::path& file);
Model load_model(const std::filesystem::path& file);
void save_trajectory(const Trajectory& traj, const std::filesystem::path& file);
Trajectory load_trajectory(const std::filesystem::path& file);

}  // namespace robinit

#endif  // ROBINIT_NN_HPP_
