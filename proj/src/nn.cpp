#include "robinit/nn.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace robinit {

namespace {

double activation_slope(Activation a, double z) {
  switch (a) {
    case Activation::kTanh: {
      const double t = std::tanh(z);
      return 1.0 - t * t;
    }
    case Activation::kRelu: return z > 0.0 ? 1.0 : 0.0;
    case Activation::kIdentity: break;
  }
  return 1.0;
}

Matrix activate(Activation a, const Matrix& z) {
  if (a == Activation::kIdentity) return z;
  Matrix h = z;
  for (auto& x : h.data()) x = activate(a, x);
  return h;
}

void check_mask(std::span<const int> labels, std::span<const std::size_t> mask, std::size_t rows,
                std::size_t classes) {
  if (mask.empty()) throw std::invalid_argument("cross_entropy: empty mask");
  for (std::size_t i : mask) {
    if (i >= rows || i >= labels.size()) throw DimensionError("cross_entropy: mask index out of range");
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
      throw std::invalid_argument("cross_entropy: label out of range");
    }
  }
}

double frobenius_sq(std::span<const Matrix> ms) {
  double s = 0.0;
  for (const auto& m : ms)
    for (double x : m.data()) s += x * x;
  return s;
}

void write_values(std::ostream& os, std::span<const double> values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) os << ' ';
    write_number(os, values[i]);
  }
}

double read_double(std::istream& is) {
  std::string tok;
  if (!(is >> tok)) throw std::runtime_error("unexpected end of file while reading a number");
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw std::runtime_error("malformed number '" + tok + "'");
  }
  return v;
}

void expect(std::istream& is, const std::string& word) {
  std::string tok;
  if (!(is >> tok) || tok != word) {
    throw std::runtime_error("expected '" + word + "', found '" + tok + "'");
  }
}

std::vector<double> read_line_values(std::istream& is, const std::string& key) {
  std::string line;
  if (!std::getline(is >> std::ws, line)) throw std::runtime_error("missing '" + key + "' line");
  std::istringstream ls(line);
  expect(ls, key);
  std::vector<double> out;
  ls >> std::ws;
  while (ls.peek() != EOF) {
    out.push_back(read_double(ls));
    ls >> std::ws;
  }
  return out;
}

}  // namespace

const char* arch_name(Arch a) {
  switch (a) {
    case Arch::kGcn: return "gcn";
    case Arch::kGin: return "gin";
    case Arch::kMlp: break;
  }
  return "mlp";
}

Arch parse_arch(const std::string& s) {
  if (s == "gcn") return Arch::kGcn;
  if (s == "gin") return Arch::kGin;
  if (s == "mlp") return Arch::kMlp;
  throw std::invalid_argument("unknown architecture '" + s + "'");
}

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::kTanh: return "tanh";
    case Activation::kRelu: return "relu";
    case Activation::kIdentity: break;
  }
  return "identity";
}

Activation parse_activation(const std::string& s) {
  if (s == "tanh") return Activation::kTanh;
  if (s == "relu") return Activation::kRelu;
  if (s == "identity") return Activation::kIdentity;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

double activate(Activation a, double z) {
  switch (a) {
    case Activation::kTanh: return std::tanh(z);
    case Activation::kRelu: return z > 0.0 ? z : 0.0;
    case Activation::kIdentity: break;
  }
  return z;
}

void Model::validate() const {
  if (layers.empty()) throw std::invalid_argument("model has no layers");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    if (layer.weights.empty()) throw std::invalid_argument("layer " + std::to_string(l) + " has no weights");
    if (l > 0 && layers[l - 1].weights.cols() != layer.weights.rows()) {
      throw DimensionError("layer " + std::to_string(l) + " input dim does not chain");
    }
    if (layer.bias) {
      if (arch != Arch::kMlp) throw std::invalid_argument("GCN/GIN layers carry no bias");
      if (layer.bias->size() != layer.weights.cols()) throw DimensionError("bias length mismatch");
    }
  }
  if (layers.back().activation != Activation::kIdentity) {
    throw std::invalid_argument("last layer must be linear (identity activation)");
  }
}

std::vector<Matrix> ForwardCache::hiddens() const {
  std::vector<Matrix> out = inputs;
  out.push_back(logits);
  return out;
}

Matrix propagation_matrix(Arch arch, const Matrix& adjacency, bool self_loops) {
  switch (arch) {
    case Arch::kGcn: return normalize_dense(adjacency, self_loops);
    case Arch::kGin: return add(Matrix::identity(adjacency.rows()), adjacency);
    case Arch::kMlp: break;
  }
  return {};
}

ForwardCache forward_with_propagation(const Model& m, const Matrix& propagation, const Matrix& x) {
  m.validate();
  if (x.cols() != m.input_dim()) {
    throw DimensionError("forward: input has " + std::to_string(x.cols()) + " columns, model expects " +
                         std::to_string(m.input_dim()));
  }
  const bool graph = m.arch != Arch::kMlp;
  if (graph && (propagation.rows() != x.rows() || propagation.cols() != x.rows())) {
    throw DimensionError("forward: propagation matrix does not match node count");
  }
  ForwardCache cache;
  cache.arch = m.arch;
  if (graph) cache.propagation = propagation;
  Matrix h = x;
  for (const auto& layer : m.layers) {
    Matrix t = matmul(h, layer.weights);
    Matrix z;
    if (graph) {
      z = matmul(propagation, t);
    } else {
      z = t;
      if (layer.bias) {
        for (std::size_t i = 0; i < z.rows(); ++i)
          for (std::size_t j = 0; j < z.cols(); ++j) z(i, j) += (*layer.bias)[j];
      }
    }
    Matrix next = activate(layer.activation, z);
    cache.inputs.push_back(std::move(h));
    cache.transformed.push_back(std::move(t));
    cache.pre.push_back(std::move(z));
    h = std::move(next);
  }
  cache.logits = std::move(h);
  return cache;
}

ForwardCache gcn_forward(const Model& m, const NormalizedAdjacency& na, const Matrix& x) {
  if (m.arch != Arch::kGcn) throw std::invalid_argument("gcn_forward: model is not a GCN");
  return forward_with_propagation(m, na.ahat, x);
}

ForwardCache gin_forward(const Model& m, const Graph& g, const Matrix& x) {
  if (m.arch != Arch::kGin) throw std::invalid_argument("gin_forward: model is not a GIN");
  return forward_with_propagation(m, propagation_matrix(Arch::kGin, g.adjacency, false), x);
}

ForwardCache mlp_forward(const Model& m, const Matrix& x) {
  if (m.arch != Arch::kMlp) throw std::invalid_argument("mlp_forward: model is not an MLP");
  return forward_with_propagation(m, Matrix(), x);
}

ForwardCache forward(const Model& m, const Graph& g, const Matrix& x, bool self_loops) {
  return forward_with_propagation(m, propagation_matrix(m.arch, g.adjacency, self_loops), x);
}

double cross_entropy(const Matrix& logits, std::span<const int> labels,
                     std::span<const std::size_t> mask) {
  check_mask(labels, mask, logits.rows(), logits.cols());
  double total = 0.0;
  for (std::size_t i : mask) {
    const auto row = logits.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    total += std::log(z) + mx - row[static_cast<std::size_t>(labels[i])];
  }
  return total / static_cast<double>(mask.size());
}

Matrix cross_entropy_grad(const Matrix& logits, std::span<const int> labels,
                          std::span<const std::size_t> mask) {
  check_mask(labels, mask, logits.rows(), logits.cols());
  Matrix grad(logits.rows(), logits.cols());
  const double inv = 1.0 / static_cast<double>(mask.size());
  for (std::size_t i : mask) {
    const auto row = logits.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    auto g = grad.row(i);
    for (std::size_t c = 0; c < row.size(); ++c) g[c] = std::exp(row[c] - mx) / z * inv;
    g[static_cast<std::size_t>(labels[i])] -= inv;
  }
  return grad;
}

Gradients backward_from_logits(const Model& m, const ForwardCache& cache, const Matrix& grad_logits,
                               bool want_propagation) {
  const std::size_t layers = m.num_layers();
  if (cache.inputs.size() != layers) throw std::invalid_argument("backward: cache does not match model");
  const bool graph = m.arch != Arch::kMlp;

  Gradients out;
  out.weights.resize(layers);
  out.biases.resize(layers);
  if (graph && want_propagation) out.propagation = Matrix(cache.propagation.rows(), cache.propagation.cols());

  Matrix grad_h = grad_logits;
  for (std::size_t l = layers; l-- > 0;) {
    const auto& layer = m.layers[l];
    Matrix grad_z = grad_h;
    if (layer.activation != Activation::kIdentity) {
      const auto& z = cache.pre[l].data();
      for (std::size_t k = 0; k < z.size(); ++k) grad_z.data()[k] *= activation_slope(layer.activation, z[k]);
    }
    Matrix grad_t;
    if (graph) {
      grad_t = matmul_tn(cache.propagation, grad_z);
      if (out.propagation) *out.propagation = add(*out.propagation, matmul_nt(grad_z, cache.transformed[l]));
    } else {
      grad_t = grad_z;
      if (layer.bias) {
        Vector gb(grad_z.cols());
        for (std::size_t i = 0; i < grad_z.rows(); ++i)
          for (std::size_t j = 0; j < grad_z.cols(); ++j) gb[j] += grad_z(i, j);
        out.biases[l] = std::move(gb);
      }
    }
    out.weights[l] = matmul_tn(cache.inputs[l], grad_t);
    grad_h = matmul_nt(grad_t, layer.weights);
  }
  out.input = std::move(grad_h);
  return out;
}

Matrix adjacency_gradient(Arch arch, const Matrix& adjacency, bool self_loops,
                          const Matrix& grad_propagation) {
  switch (arch) {
    case Arch::kGcn: return normalize_dense_backward(adjacency, grad_propagation, self_loops);
    case Arch::kGin: return grad_propagation;
    case Arch::kMlp: break;
  }
  throw std::invalid_argument("adjacency_gradient: MLP has no adjacency");
}

Gradients backward(const Model& m, const ForwardCache& cache, std::span<const int> labels,
                   std::span<const std::size_t> mask, const Matrix* adjacency, bool self_loops) {
  const bool want_adj = adjacency != nullptr && m.arch != Arch::kMlp;
  Gradients g = backward_from_logits(m, cache, cross_entropy_grad(cache.logits, labels, mask), want_adj);
  if (want_adj) g.adjacency = adjacency_gradient(m.arch, *adjacency, self_loops, *g.propagation);
  return g;
}

std::vector<Matrix> pack_params(const Model& m) {
  std::vector<Matrix> params;
  for (const auto& layer : m.layers) {
    params.push_back(layer.weights);
    if (layer.bias) params.emplace_back(1, layer.bias->size(), layer.bias->data());
  }
  return params;
}

Model unpack_params(const Model& shape, std::span<const Matrix> params) {
  Model m = shape;
  std::size_t k = 0;
  for (auto& layer : m.layers) {
    layer.weights = params[k++];
    if (layer.bias) layer.bias = Vector(params[k++].data());
  }
  return m;
}

std::vector<std::size_t> weight_param_indices(const Model& m) {
  std::vector<std::size_t> idx;
  std::size_t k = 0;
  for (const auto& layer : m.layers) {
    idx.push_back(k++);
    if (layer.bias) ++k;
  }
  return idx;
}

Trajectory gradient_descent(const Objective& objective, std::vector<Matrix> params,
                            std::span<const std::size_t> tracked, const GdOptions& opts,
                            const CheckpointFn& on_checkpoint) {
  if (!(opts.eta > 0.0)) throw std::invalid_argument("gradient_descent: eta must be > 0");
  Trajectory traj;
  traj.eta = opts.eta;
  traj.epochs = opts.epochs;

  std::vector<Matrix> grads;
  std::vector<Matrix> prev_params;
  std::vector<Matrix> prev_grads;
  for (std::size_t epoch = 0;; ++epoch) {
    double loss;
    try {
      loss = objective(params, grads);
    } catch (const NumericError& e) {
      throw DivergenceError(std::string(e.what()) + " at epoch " + std::to_string(epoch), epoch);
    }
    if (!std::isfinite(loss)) {
      throw DivergenceError("training diverged at epoch " + std::to_string(epoch), epoch);
    }
    for (const auto& g : grads) {
      for (double x : g.data()) {
        if (!std::isfinite(x)) {
          throw DivergenceError("non-finite gradient at epoch " + std::to_string(epoch), epoch);
        }
      }
    }
    traj.loss_curve.push_back(loss);
    traj.grad_norms.push_back(std::sqrt(frobenius_sq(grads)));
    std::vector<double> norms;
    for (std::size_t i : tracked) norms.push_back(spectral_norm_estimate(params[i]));
    if (epoch == 0) traj.w0_norms = norms;
    traj.per_epoch_norms.push_back(std::move(norms));

    if (epoch > 0) {
      double dparam = 0.0;
      double dgrad = 0.0;
      for (std::size_t p = 0; p < params.size(); ++p) {
        for (std::size_t k = 0; k < params[p].size(); ++k) {
          const double a = params[p].data()[k] - prev_params[p].data()[k];
          const double b = grads[p].data()[k] - prev_grads[p].data()[k];
          dparam += a * a;
          dgrad += b * b;
        }
      }
      if (dparam > 0.0) traj.smoothness_ratios.push_back(std::sqrt(dgrad) / std::sqrt(dparam));
    }

    const bool last = epoch == opts.epochs;
    const bool checkpoint = last || (opts.eval_every > 0 && epoch % opts.eval_every == 0);
    if (checkpoint && on_checkpoint) on_checkpoint(epoch, params, traj);
    if (last) break;

    prev_params = params;
    prev_grads = grads;
    for (std::size_t p = 0; p < params.size(); ++p) {
      auto& w = params[p].data();
      const auto& g = grads[p].data();
      for (std::size_t k = 0; k < w.size(); ++k) w[k] -= opts.eta * g[k];
    }
  }
  traj.final_params = std::move(params);
  return traj;
}

Trajectory train_gd(const Model& m, const Graph& g, const TrainOptions& opts,
                    const ModelCheckpointFn& on_checkpoint) {
  m.validate();
  const Matrix propagation = propagation_matrix(m.arch, g.adjacency, opts.self_loops);
  const auto mask = g.mask(opts.split);
  if (mask.empty()) throw std::invalid_argument("train_gd: training split is empty");

  Objective objective = [&](std::span<const Matrix> params, std::vector<Matrix>& grads) {
    const Model current = unpack_params(m, params);
    const ForwardCache cache = forward_with_propagation(current, propagation, g.features);
    const double loss = cross_entropy(cache.logits, g.labels, mask);
    Gradients gr = backward_from_logits(current, cache, cross_entropy_grad(cache.logits, g.labels, mask));
    grads.clear();
    for (std::size_t l = 0; l < current.num_layers(); ++l) {
      grads.push_back(std::move(gr.weights[l]));
      if (current.layers[l].bias) grads.emplace_back(1, gr.biases[l]->size(), gr.biases[l]->data());
    }
    return loss;
  };

  CheckpointFn cb;
  if (on_checkpoint) {
    cb = [&](std::size_t epoch, std::span<const Matrix> params, const Trajectory& sofar) {
      on_checkpoint(epoch, unpack_params(m, params), sofar);
    };
  }
  const auto tracked = weight_param_indices(m);
  Trajectory traj = gradient_descent(objective, pack_params(m), tracked,
                                     GdOptions{opts.eta, opts.epochs, opts.eval_every}, cb);
  traj.final_model = unpack_params(m, traj.final_params);
  return traj;
}

double estimate_smoothness(const Trajectory& traj, double inflation) {
  if (traj.per_epoch_norms.size() < 2) {
    throw std::invalid_argument("estimate_smoothness: needs at least two iterates");
  }
  if (traj.smoothness_ratios.empty()) {
    throw std::invalid_argument("estimate_smoothness: all consecutive iterates are identical");
  }
  return inflation * *std::max_element(traj.smoothness_ratios.begin(), traj.smoothness_ratios.end());
}

WstarProxy wstar_proxy(const Trajectory& traj, double grad_tol) {
  WstarProxy out;
  for (std::size_t e = 0; e < traj.grad_norms.size(); ++e) {
    if (traj.grad_norms[e] < grad_tol) {
      out.norms = traj.per_epoch_norms[e];
      out.converged = true;
      out.epoch = e;
      return out;
    }
  }
  if (!traj.per_epoch_norms.empty()) {
    out.norms = traj.per_epoch_norms.back();
    out.epoch = traj.per_epoch_norms.size() - 1;
  }
  return out;
}

void save_model(const Model& m, const std::filesystem::path& file) {
  m.validate();
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << "robinit-model 1\n";
  out << "arch " << arch_name(m.arch) << '\n';
  out << "layers " << m.num_layers() << '\n';
  for (std::size_t l = 0; l < m.num_layers(); ++l) {
    const auto& layer = m.layers[l];
    out << "layer " << l << ' ' << layer.weights.rows() << ' ' << layer.weights.cols() << ' '
        << activation_name(layer.activation) << ' ' << (layer.bias ? "bias" : "nobias") << '\n';
    for (std::size_t i = 0; i < layer.weights.rows(); ++i) {
      write_values(out, layer.weights.row(i));
      out << '\n';
    }
    if (layer.bias) {
      out << "bias ";
      write_values(out, layer.bias->data());
      out << '\n';
    }
  }
}

Model load_model(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot read " + file.string());
  try {
    expect(in, "robinit-model");
    expect(in, "1");
    Model m;
    std::string tok;
    expect(in, "arch");
    in >> tok;
    m.arch = parse_arch(tok);
    expect(in, "layers");
    std::size_t count = 0;
    in >> count;
    for (std::size_t l = 0; l < count; ++l) {
      expect(in, "layer");
      std::size_t idx = 0, rows = 0, cols = 0;
      std::string act, bias;
      in >> idx >> rows >> cols >> act >> bias;
      if (!in || idx != l) throw std::runtime_error("malformed layer header");
      Layer layer;
      layer.activation = parse_activation(act);
      std::vector<double> values(rows * cols);
      for (auto& v : values) v = read_double(in);
      layer.weights = Matrix(rows, cols, std::move(values));
      if (bias == "bias") {
        expect(in, "bias");
        Vector b(cols);
        for (auto& v : b.data()) v = read_double(in);
        layer.bias = std::move(b);
      } else if (bias != "nobias") {
        throw std::runtime_error("malformed bias tag '" + bias + "'");
      }
      m.layers.push_back(std::move(layer));
    }
    m.validate();
    return m;
  } catch (const std::exception& e) {
    throw std::runtime_error(file.string() + ": " + e.what());
  }
}

void save_trajectory(const Trajectory& traj, const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << "robinit-trajectory 1\n";
  out << "eta ";
  write_number(out, traj.eta);
  out << "\nepochs " << traj.epochs << '\n';
  out << "smoothness ";
  write_number(out, traj.smoothness_estimate);
  out << "\nnorm_rows " << traj.per_epoch_norms.size() << '\n';
  for (const auto& row : traj.per_epoch_norms) {
    out << "norms ";
    write_values(out, row);
    out << '\n';
  }
  out << "grad_norms ";
  write_values(out, traj.grad_norms);
  out << "\nloss ";
  write_values(out, traj.loss_curve);
  out << "\nratios ";
  write_values(out, traj.smoothness_ratios);
  out << '\n';
}

Trajectory load_trajectory(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot read " + file.string());
  try {
    Trajectory traj;
    expect(in, "robinit-trajectory");
    expect(in, "1");
    expect(in, "eta");
    traj.eta = read_double(in);
    expect(in, "epochs");
    in >> traj.epochs;
    expect(in, "smoothness");
    traj.smoothness_estimate = read_double(in);
    expect(in, "norm_rows");
    std::size_t rows = 0;
    in >> rows;
    for (std::size_t r = 0; r < rows; ++r) traj.per_epoch_norms.push_back(read_line_values(in, "norms"));
    if (!traj.per_epoch_norms.empty()) traj.w0_norms = traj.per_epoch_norms.front();
    traj.grad_norms = read_line_values(in, "grad_norms");
    traj.loss_curve = read_line_values(in, "loss");
    traj.smoothness_ratios = read_line_values(in, "ratios");
    return traj;
  } catch (const std::exception& e) {
    throw std::runtime_error(file.string() + ": " + e.what());
  }
}

}  // namespace robinit
