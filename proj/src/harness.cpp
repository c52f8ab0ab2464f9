#include "robinit/harness.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>
#include <utility>

#include "robinit/metrics.hpp"

namespace robinit {

namespace {

void put(std::ostream& os, const std::optional<double>& x) {
  if (x && std::isfinite(*x)) write_number(os, *x);
}

void put(std::ostream& os, const std::optional<bool>& b) {
  if (b) os << (*b ? "true" : "false");
}

std::string sanitize(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r') c = c == ',' ? ';' : ' ';
  return s;
}

std::string dataset_name(const DatasetConfig& d) {
  switch (d.kind) {
    case DatasetKind::kSbm: return "sbm";
    case DatasetKind::kBlobs: return "blobs";
    case DatasetKind::kDirectory: return d.path.filename().empty() ? d.path.parent_path().filename().string()
                                                                   : d.path.filename().string();
  }
  return "?";
}

double mean_row_norm(const Matrix& x) {
  if (x.rows() == 0) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double s = 0.0;
    for (double v : x.row(i)) s += v * v;
    total += std::sqrt(s);
  }
  return total / static_cast<double>(x.rows());
}

double weight_norm_product(const Model& m) {
  double p = 1.0;
  for (const auto& layer : m.layers) p *= spectral_norm_estimate(layer.weights);
  return p;
}

// Quantities that depend on the graph and trajectory but not on the checkpoint.
struct CellStatics {
  std::optional<double> smoothness;
  WstarProxy wstar;
  std::vector<double> w0_norms;
  std::optional<double> walk_total;
  std::optional<double> x_norm;
  std::optional<double> feat_bound;
  std::optional<int> max_deg;
  double propagation_norm = 1.0;  // ‖I + A‖₂ for GIN
  double mean_input_norm = 0.0;
  InitScheme scheme;
  std::vector<std::pair<std::size_t, std::size_t>> shapes;
};

BoundInput bound_input(const CellStatics& s, const ExperimentConfig& cfg, std::size_t epoch, double eps,
                       BoundVariant v) {
  BoundInput b;
  b.epsilon = eps;
  b.epochs = epoch;
  b.eta = cfg.train.eta;
  b.smoothness = s.smoothness;
  b.w0_norms = s.w0_norms;
  b.wstar_norms = s.wstar.norms;
  b.walk_total = s.walk_total;
  b.x_norm = s.x_norm;
  b.feat_bound = s.feat_bound;
  b.max_degree = s.max_deg;
  b.variant = v;
  b.wstar_converged = s.wstar.converged;
  return b;
}

template <typename F>
std::optional<double> try_gamma(F&& evaluate) {
  try {
    return evaluate().gamma;
  } catch (const BoundInputError&) {
    return std::nullopt;
  }
}

void set_variant(ExperimentRecord& r, BoundVariant v, std::optional<double> gamma, bool structural) {
  if (structural) {
    (v == BoundVariant::kPow2 ? r.gamma_structural_pow2 : r.gamma_structural_sharpened) = gamma;
  } else {
    (v == BoundVariant::kPow2 ? r.gamma_feature_pow2 : r.gamma_feature_sharpened) = gamma;
  }
}

Theorem feature_theorem(Arch a) {
  switch (a) {
    case Arch::kGcn: return Theorem::kGcnFeature;
    case Arch::kGin: return Theorem::kGinFeature;
    case Arch::kMlp: return Theorem::kDnn;
  }
  return Theorem::kDnn;
}

BoundReport evaluate_feature(Arch a, const BoundInput& b) {
  switch (a) {
    case Arch::kGcn: return gcn_feature_bound(b);
    case Arch::kGin: return gin_feature_bound(b);
    case Arch::kMlp: return dnn_bound(b);
  }
  return dnn_bound(b);
}

ExperimentRecord base_record(const ExperimentConfig& cfg, const InitConfig& init, std::size_t cell,
                             const std::string& sweep_value) {
  ExperimentRecord r;
  r.cell = cell;
  r.seed = cfg.base_seed + cell;
  r.sweep_axis = sweep_axis_name(cfg.sweep_axis);
  r.sweep_value = sweep_value;
  r.dataset = dataset_name(cfg.dataset);
  r.arch = arch_name(cfg.model.arch);
  r.activation = activation_name(cfg.model.activation);
  r.hidden = cfg.model.hidden;
  r.layers = cfg.model.layers;
  r.init = init.scheme;
  r.mu = init.mu;
  r.sigma = init.sigma;
  r.beta = init.beta;
  r.eta = cfg.train.eta;
  r.epochs = cfg.train.epochs;
  return r;
}

std::vector<ExperimentRecord> evaluate_cell(const ExperimentConfig& cfg, const Graph& g, const InitConfig& init,
                                            ExperimentRecord proto) {
  const bool loops = cfg.model.self_loops;
  const std::uint64_t seed = proto.seed;

  CellStatics s;
  s.scheme = init.make();
  const Model model = build_model(model_spec(cfg.model, g), s.scheme, seed);
  for (const auto& layer : model.layers) s.shapes.emplace_back(layer.weights.rows(), layer.weights.cols());

  std::vector<std::pair<std::size_t, Model>> checkpoints;
  TrainOptions opts;
  opts.eta = cfg.train.eta;
  opts.epochs = cfg.train.epochs;
  opts.eval_every = cfg.train.eval_every;
  opts.self_loops = loops;
  const Trajectory traj = train_gd(model, g, opts, [&](std::size_t epoch, const Model& m, const Trajectory&) {
    checkpoints.emplace_back(epoch, m);
  });

  try {
    s.smoothness = estimate_smoothness(traj, cfg.train.smoothness_inflation);
  } catch (const std::exception&) {
    s.smoothness.reset();  // fewer than one distinct step; sharpened bounds stay empty
  }
  s.wstar = wstar_proxy(traj, cfg.train.wstar_tol);
  s.w0_norms = traj.w0_norms;
  s.mean_input_norm = mean_row_norm(g.features);
  if (cfg.model.arch == Arch::kGcn) {
    s.walk_total = walk_sums(normalize_adjacency(g, loops), model.num_layers() - 1).total;
    s.x_norm = spectral_norm_estimate(g.features);
  } else if (cfg.model.arch == Arch::kGin) {
    s.feat_bound = feature_norm_bound(g);
    s.max_deg = max_degree(g);
    s.propagation_norm = spectral_norm_estimate(propagation_matrix(Arch::kGin, g.adjacency, loops));
  }

  std::vector<ExperimentRecord> out;
  for (const auto& [epoch, m] : checkpoints) {
    ExperimentRecord base = proto;
    base.epoch = epoch;
    base.clean_acc = accuracy(m, g, Split::kTest, loops);
    base.attacked_acc = base.clean_acc;
    base.smoothness = s.smoothness;
    if (s.smoothness) base.eta_l_ok = cfg.train.eta * *s.smoothness <= 1.0;
    base.wstar_converged = s.wstar.converged;

    if (cfg.attacks.empty()) {
      out.push_back(base);
      continue;
    }
    const double weight_product = weight_norm_product(m);

    for (const auto& grid : cfg.attacks) {
      for (double budget : grid.budgets) {
        AttackConfig ac;
        ac.kind = grid.kind;
        ac.budget = grid.relative_budget ? budget * s.mean_input_norm : budget;
        ac.steps = grid.steps;
        ac.step_size = grid.step_size;
        ac.seed = seed;
        ac.scope = cfg.model.arch == Arch::kMlp ? BallScope::kPerRow : BallScope::kWholeMatrix;
        ac.self_loops = loops;
        const RiskEstimate risk = empirical_risk(m, g, ac, grid.trials, seed);

        ExperimentRecord r = base;
        r.attack = attack_name(grid.kind);
        r.budget = budget;
        r.trials = grid.trials;
        r.clean_acc = risk.clean_accuracy;
        r.attacked_acc = risk.attacked_accuracy;
        r.success_rate = risk.success_rate;
        r.sup_distance = risk.sup_distance;

        if (is_structural(grid.kind)) {
          r.epsilon = risk.max_adjacency_change;
          if (cfg.model.arch == Arch::kGcn) {
            r.feature_theorem = theorem_name(Theorem::kGcnStructural);
            for (BoundVariant v : cfg.bound_variants)
              set_variant(r, v, try_gamma([&] { return gcn_structural_bound(bound_input(s, cfg, epoch, r.epsilon, v)); }),
                          true);
          }
        } else {
          r.epsilon = ac.budget;
          r.feature_theorem = theorem_name(feature_theorem(cfg.model.arch));
          for (BoundVariant v : cfg.bound_variants)
            set_variant(r, v,
                        try_gamma([&] { return evaluate_feature(cfg.model.arch, bound_input(s, cfg, epoch, r.epsilon, v)); }),
                        false);
          if (cfg.model.arch == Arch::kGcn && std::holds_alternative<GaussianInit>(s.scheme)) {
            r.gamma_expected = try_gamma([&] {
              return gaussian_expected_bound(bound_input(s, cfg, epoch, r.epsilon, BoundVariant::kPow2), s.scheme,
                                             s.shapes, init.mean_reading);
            });
          }
          double graph_factor = 1.0;
          if (cfg.model.arch == Arch::kGcn) graph_factor = *s.walk_total;
          if (cfg.model.arch == Arch::kGin) graph_factor = std::pow(s.propagation_norm, m.num_layers());
          r.lipschitz_bound = weight_product * r.epsilon * graph_factor;
        }
        out.push_back(std::move(r));
      }
    }
  }
  return out;
}

// Cell results are buffered and released strictly in cell order.
class OrderedSink {
 public:
  OrderedSink(std::size_t cells, const std::filesystem::path& dir) : slots_(cells) {
    if (dir.empty()) return;
    std::filesystem::create_directories(dir);
    records_.open(dir / "records.csv", std::ios::binary);
    timings_.open(dir / "timings.csv", std::ios::binary);
    if (!records_ || !timings_) throw std::runtime_error("cannot write to output directory " + dir.string());
    records_ << ExperimentRecord::csv_header() << '\n';
    timings_ << "schema_version,cell,seed,sweep_value,status,records,wallclock_ms\n";
    records_.flush();
    timings_.flush();
  }

  void deliver(std::size_t cell, std::vector<ExperimentRecord> recs) {
    std::lock_guard<std::mutex> lock(mu_);
    slots_[cell] = std::move(recs);
    while (next_ < slots_.size() && slots_[next_]) {
      flush(*slots_[next_]);
      for (auto& r : *slots_[next_]) merged_.push_back(std::move(r));
      slots_[next_].reset();
      ++next_;
    }
  }

  std::vector<ExperimentRecord> take() { return std::move(merged_); }

 private:
  void flush(const std::vector<ExperimentRecord>& recs) {
    if (!records_.is_open() || recs.empty()) return;
    for (const auto& r : recs) records_ << r.csv_row() << '\n';
    const auto& first = recs.front();
    timings_ << kSchemaVersion << ',' << first.cell << ',' << first.seed << ',' << first.sweep_value << ','
             << (first.failed ? "failed" : "ok") << ',' << recs.size() << ',';
    write_number(timings_, first.wallclock_ms);
    timings_ << '\n';
    records_.flush();
    timings_.flush();
  }

  std::mutex mu_;
  std::vector<std::optional<std::vector<ExperimentRecord>>> slots_;
  std::size_t next_ = 0;
  std::vector<ExperimentRecord> merged_;
  std::ofstream records_;
  std::ofstream timings_;
};

}  // namespace

std::string ExperimentRecord::csv_header() {
  return "schema_version,cell,seed,sweep_axis,sweep_value,dataset,arch,activation,hidden_dim,num_layers,"
         "init,mu,sigma,beta,eta,epochs,epoch,attack,budget,epsilon,trials,status,clean_acc,attacked_acc,"
         "success_rate,sup_distance,smoothness,eta_L,eta_L_ok,wstar_converged,feature_theorem,"
         "gamma_feature_pow2,gamma_feature_sharpened,gamma_structural_pow2,gamma_structural_sharpened,"
         "gamma_expected,lipschitz_bound,error";
}

std::string ExperimentRecord::csv_row() const {
  std::ostringstream os;
  os << kSchemaVersion << ',' << cell << ',' << seed << ',' << sweep_axis << ',' << sanitize(sweep_value) << ','
     << sanitize(dataset) << ',' << arch << ',' << activation << ',' << hidden << ',' << layers << ',' << init
     << ',';
  write_number(os, mu);
  os << ',';
  write_number(os, sigma);
  os << ',';
  write_number(os, beta);
  os << ',';
  write_number(os, eta);
  os << ',' << epochs << ',';
  if (!failed) os << epoch;
  os << ',' << attack << ',';
  write_number(os, budget);
  os << ',';
  if (!failed) {
    put(os, std::optional<double>(epsilon));
    os << ',' << trials << ",ok,";
    put(os, std::optional<double>(clean_acc));
    os << ',';
    put(os, std::optional<double>(attacked_acc));
    os << ',';
    put(os, std::optional<double>(success_rate));
    os << ',';
    put(os, std::optional<double>(sup_distance));
    os << ',';
    put(os, smoothness);
    os << ',';
    if (smoothness) put(os, std::optional<double>(eta * *smoothness));
    os << ',';
    put(os, eta_l_ok);
    os << ',' << (wstar_converged ? "true" : "false") << ',' << feature_theorem << ',';
    put(os, gamma_feature_pow2);
    os << ',';
    put(os, gamma_feature_sharpened);
    os << ',';
    put(os, gamma_structural_pow2);
    os << ',';
    put(os, gamma_structural_sharpened);
    os << ',';
    put(os, gamma_expected);
    os << ',';
    put(os, lipschitz_bound);
    os << ',';
  } else {
    os << ',' << trials << ",failed,,,,,,,,,,,,,,,,";
  }
  os << sanitize(error);
  return os.str();
}

Graph load_dataset(const DatasetConfig& d) {
  switch (d.kind) {
    case DatasetKind::kSbm: return gen_sbm(d.sbm);
    case DatasetKind::kBlobs: return gen_blobs(d.blobs);
    case DatasetKind::kDirectory: return load_graph(d.path);
  }
  throw ConfigError("unknown dataset kind");
}

ModelSpec model_spec(const ModelConfig& m, const Graph& g) {
  std::vector<std::size_t> dims{g.feature_dim()};
  for (std::size_t l = 1; l < m.layers; ++l) dims.push_back(m.hidden);
  dims.push_back(static_cast<std::size_t>(g.num_classes));
  return ModelSpec{m.arch, dims, m.activation};
}

std::vector<ExperimentRecord> run_cell(const ExperimentConfig& cfg, const Graph& g, std::size_t cell,
                                       const std::string& sweep_value) {
  const auto start = std::chrono::steady_clock::now();
  InitConfig init = cfg.init;
  std::vector<ExperimentRecord> out;
  try {
    init = apply_sweep_value(cfg.init, cfg.sweep_axis, sweep_value);
    if (cfg.fail_cells.count(cell)) throw std::runtime_error("injected failure");
    out = evaluate_cell(cfg, g, init, base_record(cfg, init, cell, sweep_value));
  } catch (const std::exception& e) {  // divergence included: the cell fails, the run goes on
    out.clear();
    ExperimentRecord r = base_record(cfg, init, cell, sweep_value);
    r.failed = true;
    r.error = e.what();
    out.push_back(std::move(r));
  }
  const double ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  for (auto& r : out) r.wallclock_ms = ms;
  return out;
}

std::vector<ExperimentRecord> run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<std::string> values = cfg.sweep_values;
  if (cfg.sweep_axis == SweepAxis::kNone) values = {""};
  const std::size_t cells = values.size() * cfg.repeats;

  OrderedSink sink(cells, cfg.output_dir);
  if (cells == 0) return {};
  const Graph g = load_dataset(cfg.dataset);

  auto run = [&](std::size_t cell) { sink.deliver(cell, run_cell(cfg, g, cell, values[cell / cfg.repeats])); };

  const std::size_t workers = std::min(cfg.threads, cells);
  if (workers <= 1) {
    for (std::size_t c = 0; c < cells; ++c) run(c);
  } else {
    std::mutex mu;
    std::size_t next = 0;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (;;) {
          std::size_t c;
          {
            std::lock_guard<std::mutex> lock(mu);
            if (next == cells) return;
            c = next++;
          }
          run(c);
        }
      });
    }
    for (auto& t : pool) t.join();
  }
  return sink.take();
}

std::vector<ExperimentRecord> sweep(const ExperimentConfig& base, SweepAxis axis,
                                    const std::vector<std::string>& values) {
  ExperimentConfig cfg = base;
  cfg.sweep_axis = axis;
  cfg.sweep_values = values;
  return run_experiment(cfg);
}

}  // namespace robinit
