#ifndef ROBINIT_HARNESS_HPP_
#define ROBINIT_HARNESS_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "robinit/attacks.hpp"
#include "robinit/bounds.hpp"
#include "robinit/graph.hpp"
#include "robinit/init.hpp"
#include "robinit/nn.hpp"

namespace robinit {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class SweepAxis { kNone, kSigma, kBeta, kScheme };

const char* sweep_axis_name(SweepAxis a);
SweepAxis parse_sweep_axis(const std::string& s);
/// σ: {0.1, 0.5, 1, 2}; β: {0.5, 1, 2, 4}; scheme: uniform, orthogonal, glorot, kaiming.
std::vector<std::string> default_sweep_values(SweepAxis a);

enum class DatasetKind { kSbm, kBlobs, kDirectory };

struct DatasetConfig {
  DatasetKind kind = DatasetKind::kSbm;
  std::filesystem::path path;
  SbmParams sbm;
  BlobParams blobs;
};

struct ModelConfig {
  Arch arch = Arch::kGcn;
  std::size_t hidden = 16;
  std::size_t layers = 2;
  Activation activation = Activation::kTanh;
  bool self_loops = false;
};

struct InitConfig {
  std::string scheme = "gaussian";
  double mu = 0.0;
  double sigma = 1.0;
  double beta = 1.0;
  double constant = 0.0;
  MeanReading mean_reading = MeanReading::kVectorized;

  InitScheme make() const;
};

/// Scheme values are "name" or "name:p", where p sets σ (gaussian), β
/// (uniform, orthogonal) or the constant.
InitConfig apply_sweep_value(const InitConfig& base, SweepAxis axis, const std::string& value);

struct TrainConfig {
  double eta = 1e-2;
  std::size_t epochs = 300;
  std::size_t eval_every = 10;  // 0: final epoch only
  double smoothness_inflation = kSmoothnessInflation;
  double wstar_tol = kWstarGradTol;
};

struct AttackGrid {
  AttackKind kind = AttackKind::kStructurePgd;
  std::vector<double> budgets;  // ascending
  int steps = 100;
  double step_size = 0.1;
  std::size_t trials = 1;
  // Feature budgets are multiplied by the mean row norm of X.
  bool relative_budget = false;
};

struct ExperimentConfig {
  DatasetConfig dataset;
  ModelConfig model;
  InitConfig init;
  TrainConfig train;
  std::vector<AttackGrid> attacks;
  std::vector<BoundVariant> bound_variants{BoundVariant::kPow2, BoundVariant::kSharpened};
  std::size_t repeats = 1;
  std::uint64_t base_seed = 0;
  std::filesystem::path output_dir;  // empty: keep records in memory only
  std::size_t threads = 1;
  SweepAxis sweep_axis = SweepAxis::kNone;
  std::vector<std::string> sweep_values;
  // Cells forced to fail; exercises failure isolation.
  std::set<std::size_t> fail_cells;

  /// Throws ConfigError on any violated invariant.
  void validate() const;
};

/// Reads an INI file. Environment variables ROBINIT_<SECTION>_<KEY>
/// (upper case, dots in section names as underscores) override file values.
ExperimentConfig load_config(const std::filesystem::path& file);
/// Same, from INI text; `origin` names the source in error messages.
ExperimentConfig parse_config(const std::string& text, const std::string& origin = "<config>");

inline constexpr int kSchemaVersion = 1;

struct ExperimentRecord {
  std::size_t cell = 0;
  std::uint64_t seed = 0;
  std::string sweep_axis = "none";
  std::string sweep_value;
  std::string dataset;
  std::string arch;
  std::string activation;
  std::size_t hidden = 0;
  std::size_t layers = 0;
  std::string init;
  double mu = 0.0;
  double sigma = 0.0;
  double beta = 0.0;
  double eta = 0.0;
  std::size_t epochs = 0;
  std::size_t epoch = 0;
  std::string attack = "none";
  double budget = 0.0;
  double epsilon = 0.0;  // feature radius, or ‖Ã − A‖₂ realized by a structural attack
  std::size_t trials = 0;
  bool failed = false;
  std::string error;
  double clean_acc = 0.0;
  double attacked_acc = 0.0;
  double success_rate = 0.0;
  double sup_distance = 0.0;
  std::optional<double> smoothness;  // L̂
  std::optional<bool> eta_l_ok;
  bool wstar_converged = false;
  std::string feature_theorem;
  std::optional<double> gamma_feature_pow2;
  std::optional<double> gamma_feature_sharpened;
  std::optional<double> gamma_structural_pow2;
  std::optional<double> gamma_structural_sharpened;
  std::optional<double> gamma_expected;
  std::optional<double> lipschitz_bound;  // Π‖W_e‖ times the attack-dependent graph factor
  double wallclock_ms = 0.0;               // written to the timings file only

  static std::string csv_header();
  std::string csv_row() const;
};

/// One sweep cell: build, train, evaluate every checkpoint.
std::vector<ExperimentRecord> run_cell(const ExperimentConfig& cfg, const Graph& g, std::size_t cell,
                                       const std::string& sweep_value);

/// All cells of cfg's sweep (a single value when the axis is kNone), merged
/// in cell order. Cell c = value_index · repeats + repeat gets seed
/// base_seed + c. Writes records.csv and timings.csv when output_dir is set.
std::vector<ExperimentRecord> run_experiment(const ExperimentConfig& cfg);

/// run_experiment with the sweep axis and values replaced.
std::vector<ExperimentRecord> sweep(const ExperimentConfig& base, SweepAxis axis,
                                    const std::vector<std::string>& values);

Graph load_dataset(const DatasetConfig& d);

/// Dimensions {d, hidden × (layers − 1), classes}.
ModelSpec model_spec(const ModelConfig& m, const Graph& g);

/// Renders line charts (SVG, data embedded as a comment) from a records CSV.
std::vector<std::filesystem::path> emit_plots(const std::filesystem::path& records_csv,
                                              const std::filesystem::path& out_dir);

}  // namespace robinit

#endif  // ROBINIT_HARNESS_HPP_
