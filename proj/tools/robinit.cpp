// robinit: train, attack, bound, sweep and plot from one config file.
//
// Exit codes: 0 success, 1 configuration error, 2 runtime failure.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "robinit/harness.hpp"
#include "robinit/metrics.hpp"

namespace fs = std::filesystem;
using namespace robinit;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "robinit_out";
  std::optional<std::size_t> threads;
};

ExperimentConfig resolve(const Globals& g) {
  ExperimentConfig cfg = g.config.empty() ? parse_config("", "<defaults>") : load_config(g.config);
  if (g.seed) cfg.base_seed = *g.seed;
  if (g.threads) cfg.threads = *g.threads;
  cfg.output_dir = g.out;
  cfg.validate();
  return cfg;
}

int cmd_train(const Globals& globals) {
  const ExperimentConfig cfg = resolve(globals);
  const Graph g = load_dataset(cfg.dataset);
  const Model m = build_model(model_spec(cfg.model, g), cfg.init.make(), cfg.base_seed);
  TrainOptions opts;
  opts.eta = cfg.train.eta;
  opts.epochs = cfg.train.epochs;
  opts.eval_every = cfg.train.eval_every;
  opts.self_loops = cfg.model.self_loops;
  Trajectory traj = train_gd(m, g, opts);
  try {
    traj.smoothness_estimate = estimate_smoothness(traj, cfg.train.smoothness_inflation);
  } catch (const std::exception&) {
    traj.smoothness_estimate = 0.0;
  }
  fs::create_directories(cfg.output_dir);
  save_model(*traj.final_model, cfg.output_dir / "model.txt");
  save_trajectory(traj, cfg.output_dir / "trajectory.txt");
  std::cout << "epochs " << traj.epochs << "  final loss " << traj.loss_curve.back() << "  test acc "
            << accuracy(*traj.final_model, g, Split::kTest, cfg.model.self_loops) << "  L_hat "
            << traj.smoothness_estimate << "\n"
            << "wrote " << (cfg.output_dir / "model.txt").string() << " and "
            << (cfg.output_dir / "trajectory.txt").string() << "\n";
  return 0;
}

int cmd_attack(const Globals& globals, const std::string& model_file, const std::string& kind,
               const std::vector<double>& budgets_flag) {
  const ExperimentConfig cfg = resolve(globals);
  const Graph g = load_dataset(cfg.dataset);
  const Model m = load_model(model_file);

  std::vector<AttackGrid> grids = cfg.attacks;
  if (!kind.empty() || !budgets_flag.empty()) {
    AttackGrid a = grids.empty() ? AttackGrid{} : grids.front();
    if (!kind.empty()) {
      try {
        a.kind = parse_attack(kind);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
    }
    if (!budgets_flag.empty()) a.budgets = budgets_flag;
    grids = {a};
  }
  if (grids.empty()) throw ConfigError("attack: no [attack] section and no --kind/--budget given");

  fs::create_directories(cfg.output_dir);
  std::ofstream csv(cfg.output_dir / "attack.csv");
  csv << RiskEstimate::csv_header() << ",epsilon,flips,verified\n";
  bool all_verified = true;
  for (const auto& grid : grids) {
    double input_norm = 0.0;
    for (std::size_t i = 0; i < g.features.rows(); ++i) {
      double s = 0.0;
      for (double v : g.features.row(i)) s += v * v;
      input_norm += std::sqrt(s);
    }
    input_norm /= static_cast<double>(std::max<std::size_t>(g.features.rows(), 1));
    for (double budget : grid.budgets) {
      AttackConfig ac;
      ac.kind = grid.kind;
      ac.budget = grid.relative_budget ? budget * input_norm : budget;
      ac.steps = grid.steps;
      ac.step_size = grid.step_size;
      ac.seed = cfg.base_seed;
      ac.scope = m.arch == Arch::kMlp ? BallScope::kPerRow : BallScope::kWholeMatrix;
      ac.self_loops = cfg.model.self_loops;
      const PerturbedGraph pg = run_attack(m, g, ac);
      const Verification v = verify_perturbation(g, pg, ac);
      all_verified = all_verified && v.ok;
      RiskEstimate est = empirical_risk(m, g, ac, grid.trials, cfg.base_seed);
      est.budget = budget;
      const fs::path dir = cfg.output_dir / ("perturbed_" + std::string(attack_name(grid.kind)) + "_" +
                                             format_number(budget));
      save_graph(pg.graph, dir);
      csv << est.csv_row() << ',' << format_number(ac.budget) << ',' << pg.num_flips << ','
          << (v.ok ? "true" : "false") << '\n';
      std::cout << attack_name(grid.kind) << " budget " << budget << ": clean " << est.clean_accuracy
                << " attacked " << est.attacked_accuracy << " sup " << est.sup_distance << " -> " << dir.string()
                << "\n";
      for (const auto& f : v.failures) std::cerr << "verification: " << f << "\n";
    }
  }
  return all_verified ? 0 : 2;
}

int cmd_bound(const Globals& globals, const std::string& trajectory_file, double epsilon,
              std::optional<double> mu) {
  const ExperimentConfig cfg = resolve(globals);
  const Trajectory traj = load_trajectory(trajectory_file);
  const Graph g = load_dataset(cfg.dataset);
  const WstarProxy wstar = wstar_proxy(traj, cfg.train.wstar_tol);

  BoundInput b;
  b.epsilon = epsilon;
  b.epochs = traj.epochs;
  b.eta = traj.eta;
  if (traj.smoothness_estimate > 0.0) b.smoothness = traj.smoothness_estimate;
  b.w0_norms = traj.w0_norms;
  b.wstar_norms = wstar.norms;
  b.wstar_converged = wstar.converged;
  b.strong_convexity = mu;
  const std::size_t layers = traj.w0_norms.size();
  if (cfg.model.arch == Arch::kGcn) {
    b.walk_total = walk_sums(normalize_adjacency(g, cfg.model.self_loops), layers - 1).total;
    b.x_norm = spectral_norm_estimate(g.features);
  } else if (cfg.model.arch == Arch::kGin) {
    b.feat_bound = feature_norm_bound(g);
    b.max_degree = max_degree(g);
  }

  std::vector<BoundReport> reports;
  for (BoundVariant v : cfg.bound_variants) {
    b.variant = v;
    auto attempt = [&](auto&& evaluate) {
      try {
        reports.push_back(evaluate());
      } catch (const BoundInputError& e) {
        std::cerr << variant_name(v) << ": " << e.what() << "\n";
      }
    };
    switch (cfg.model.arch) {
      case Arch::kGcn:
        attempt([&] { return gcn_feature_bound(b); });
        attempt([&] { return gcn_structural_bound(b); });
        if (std::holds_alternative<GaussianInit>(cfg.init.make())) {
          std::vector<std::pair<std::size_t, std::size_t>> shapes;
          const ModelSpec spec = model_spec(cfg.model, g);
          for (std::size_t l = 0; l + 1 < spec.dims.size(); ++l) shapes.emplace_back(spec.dims[l], spec.dims[l + 1]);
          attempt([&] { return gaussian_expected_bound(b, cfg.init.make(), shapes, cfg.init.mean_reading); });
        }
        break;
      case Arch::kGin: attempt([&] { return gin_feature_bound(b); }); break;
      case Arch::kMlp: attempt([&] { return dnn_bound(b); }); break;
    }
  }
  if (mu) {
    try {
      reports.push_back(strong_convex_bound(b));
    } catch (const BoundInputError& e) {
      std::cerr << "strong_convex: " << e.what() << "\n";
    }
  }

  fs::create_directories(cfg.output_dir);
  std::ofstream csv(cfg.output_dir / "bounds.csv");
  csv << BoundReport::csv_header(layers) << "\n";
  std::cout << BoundReport::csv_header(layers) << "\n";
  for (const auto& r : reports) {
    csv << r.csv_row() << "\n";
    std::cout << r.csv_row() << "\n";
  }
  return reports.empty() ? 2 : 0;
}

int cmd_sweep(const Globals& globals) {
  const ExperimentConfig cfg = resolve(globals);
  const auto records = run_experiment(cfg);
  std::size_t failed = 0;
  for (const auto& r : records) failed += r.failed ? 1 : 0;
  std::cout << records.size() << " records (" << failed << " failed) -> "
            << (cfg.output_dir / "records.csv").string() << "\n";
  return 0;
}

int cmd_plot(const Globals& globals, const std::string& csv) {
  const fs::path input = csv.empty() ? fs::path(globals.out) / "records.csv" : fs::path(csv);
  for (const auto& f : emit_plots(input, globals.out)) std::cout << f.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Initialization-dependent robustness experiments for GCN, GIN and MLP models"};
  app.require_subcommand(1);
  Globals globals;
  app.add_option("--config", globals.config, "INI config file")->check(CLI::ExistingFile);
  app.add_option("--seed", globals.seed, "base seed (overrides [experiment] base_seed)");
  app.add_option("--out", globals.out, "output directory")->capture_default_str();
  app.add_option("--threads", globals.threads, "worker threads for sweep cells")->check(CLI::PositiveNumber);

  auto* train = app.add_subcommand("train", "train one cell; writes model.txt and trajectory.txt");

  std::string model_file, kind;
  std::vector<double> budgets;
  auto* attack = app.add_subcommand("attack", "attack a trained model; writes perturbed graphs and attack.csv");
  attack->add_option("--model", model_file, "model file written by train")->required()->check(CLI::ExistingFile);
  attack->add_option("--kind", kind, "feature_pgd, structure_pgd, dice or random_flip");
  attack->add_option("--budget", budgets, "budgets (overrides the config grid)");

  std::string trajectory_file;
  double epsilon = 0.1;
  std::optional<double> mu;
  auto* bound = app.add_subcommand("bound", "evaluate robustness bounds from a trajectory file");
  bound->add_option("--trajectory", trajectory_file, "trajectory file written by train")
      ->required()
      ->check(CLI::ExistingFile);
  bound->add_option("--epsilon", epsilon, "attack budget")->capture_default_str();
  bound->add_option("--mu", mu, "strong-convexity constant; adds the strongly convex bound");

  auto* sweep_cmd = app.add_subcommand("sweep", "run the full grid; writes records.csv and timings.csv");

  std::string csv;
  auto* plot = app.add_subcommand("plot", "render SVG charts from a records CSV");
  plot->add_option("--csv", csv, "records CSV (default <out>/records.csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*train) return cmd_train(globals);
    if (*attack) return cmd_attack(globals, model_file, kind, budgets);
    if (*bound) return cmd_bound(globals, trajectory_file, epsilon, mu);
    if (*sweep_cmd) return cmd_sweep(globals);
    if (*plot) return cmd_plot(globals, csv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
