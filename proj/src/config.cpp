#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "robinit/harness.hpp"

extern char** environ;

namespace robinit {

namespace {

namespace pt = boost::property_tree;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string unquote(std::string s) {
  s = trim(s);
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front())
    s = s.substr(1, s.size() - 2);
  return s;
}

std::string upper(std::string s) {
  for (char& c : s) c = c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(unquote(item));
  return out;
}

const std::map<std::string, std::vector<std::string>>& schema() {
  static const std::map<std::string, std::vector<std::string>> s{
      {"dataset",
       {"kind", "path", "nodes", "samples", "classes", "p_in", "p_out", "feature_dim", "center_scale", "spread",
        "seed"}},
      {"model", {"arch", "hidden", "layers", "activation", "self_loops"}},
      {"init", {"scheme", "mu", "sigma", "beta", "constant", "mean_reading"}},
      {"train", {"eta", "epochs", "eval_every", "smoothness_inflation", "wstar_tol"}},
      {"attack", {"kind", "budgets", "steps", "step_size", "trials", "relative_budget"}},
      {"bounds", {"variants"}},
      {"experiment", {"repeats", "base_seed", "output_dir", "threads", "sweep_axis", "sweep_values", "fail_cells"}},
  };
  return s;
}

bool is_attack_section(const std::string& name) {
  if (name == "attack") return true;
  if (name.rfind("attack.", 0) != 0 || name.size() == 7) return false;
  return std::all_of(name.begin() + 7, name.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
}

const std::vector<std::string>& keys_of(const std::string& section) {
  return schema().at(is_attack_section(section) ? "attack" : section);
}

// Flattened section -> key -> raw value, in file order of sections.
struct RawConfig {
  std::vector<std::string> order;
  std::map<std::string, std::map<std::string, std::string>> values;

  void set(const std::string& section, const std::string& key, const std::string& value) {
    if (!values.count(section)) order.push_back(section);
    values[section][key] = value;
  }
};

RawConfig read_ini(const std::string& text, const std::string& origin) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(origin + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  RawConfig raw;
  for (const auto& [section, body] : tree) {
    if (body.empty()) {
      if (!body.data().empty()) throw ConfigError(origin + ": key '" + section + "' outside any section");
      if (!schema().count(section) && !is_attack_section(section))
        throw ConfigError(origin + ": unknown section [" + section + "]");
      raw.order.push_back(section);
      raw.values[section];
      continue;
    }
    if (!schema().count(section) && !is_attack_section(section))
      throw ConfigError(origin + ": unknown section [" + section + "]");
    const auto& allowed = keys_of(section);
    for (const auto& [key, node] : body) {
      if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
        throw ConfigError(origin + ": unknown key '" + key + "' in [" + section + "]");
      raw.set(section, key, unquote(node.data()));
    }
  }
  return raw;
}

void apply_environment(RawConfig& raw) {
  // Candidate sections: every fixed section plus every attack section present.
  std::vector<std::string> sections;
  for (const auto& [name, keys] : schema()) sections.push_back(name);
  for (const auto& name : raw.order)
    if (name != "attack" && is_attack_section(name)) sections.push_back(name);

  for (char** env = environ; env && *env; ++env) {
    const std::string entry(*env);
    if (entry.rfind("ROBINIT_", 0) != 0) continue;
    const auto eq = entry.find('=');
    const std::string var = entry.substr(0, eq);
    const std::string value = eq == std::string::npos ? "" : entry.substr(eq + 1);
    bool matched = false;
    for (const auto& section : sections) {
      for (const auto& key : keys_of(section)) {
        if (var == "ROBINIT_" + upper(section) + "_" + upper(key)) {
          raw.set(section, key, unquote(value));
          matched = true;
        }
      }
    }
    if (!matched) throw ConfigError("environment: unknown override " + var);
  }
}

class Reader {
 public:
  Reader(const RawConfig& raw, std::string section, std::string origin)
      : section_(std::move(section)), origin_(std::move(origin)) {
    const auto it = raw.values.find(section_);
    if (it != raw.values.end()) values_ = &it->second;
  }

  bool has(const std::string& key) const { return values_ && values_->count(key); }

  std::string str(const std::string& key, const std::string& fallback) const {
    return has(key) ? values_->at(key) : fallback;
  }

  double real(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    const std::string& v = values_->at(key);
    try {
      std::size_t pos = 0;
      const double x = std::stod(v, &pos);
      if (pos == v.size() && std::isfinite(x)) return x;
    } catch (const std::exception&) {
    }
    fail(key, v, "a finite number");
  }

  std::uint64_t count(const std::string& key, std::uint64_t fallback) const {
    if (!has(key)) return fallback;
    const std::string& v = values_->at(key);
    if (!v.empty() && std::all_of(v.begin(), v.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
      try {
        return std::stoull(v);
      } catch (const std::exception&) {
      }
    }
    fail(key, v, "a non-negative integer");
  }

  bool flag(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    std::string v = values_->at(key);
    std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    fail(key, values_->at(key), "a boolean");
  }

  std::vector<double> reals(const std::string& key) const {
    std::vector<double> out;
    if (!has(key)) return out;
    for (const auto& item : split_list(values_->at(key))) {
      try {
        std::size_t pos = 0;
        const double x = std::stod(item, &pos);
        if (pos == item.size() && std::isfinite(x)) {
          out.push_back(x);
          continue;
        }
      } catch (const std::exception&) {
      }
      fail(key, item, "a list of finite numbers");
    }
    return out;
  }

  template <typename F>
  auto parsed(const std::string& key, const std::string& fallback, F&& parse) const {
    const std::string v = str(key, fallback);
    try {
      return parse(v);
    } catch (const std::exception& e) {
      throw ConfigError(where(key) + ": " + e.what());
    }
  }

 private:
  std::string where(const std::string& key) const { return origin_ + ": [" + section_ + "] " + key; }

  [[noreturn]] void fail(const std::string& key, const std::string& v, const char* expected) const {
    throw ConfigError(where(key) + " = '" + v + "' is not " + expected);
  }

  std::string section_;
  std::string origin_;
  const std::map<std::string, std::string>* values_ = nullptr;
};

AttackGrid read_attack(const Reader& r) {
  AttackGrid a;
  a.kind = r.parsed("kind", "structure_pgd", parse_attack);
  a.budgets = r.reals("budgets");
  a.steps = static_cast<int>(r.count("steps", 100));
  a.step_size = r.real("step_size", 0.1);
  a.trials = r.count("trials", 1);
  a.relative_budget = r.flag("relative_budget", false);
  return a;
}

ExperimentConfig build(const RawConfig& raw, const std::string& origin) {
  ExperimentConfig cfg;

  const Reader d(raw, "dataset", origin);
  const std::string kind = d.str("kind", "sbm");
  if (kind == "sbm") {
    cfg.dataset.kind = DatasetKind::kSbm;
  } else if (kind == "blobs") {
    cfg.dataset.kind = DatasetKind::kBlobs;
  } else if (kind == "dir") {
    cfg.dataset.kind = DatasetKind::kDirectory;
  } else {
    throw ConfigError(origin + ": [dataset] kind = '" + kind + "' is not one of sbm, blobs, dir");
  }
  cfg.dataset.path = d.str("path", "");
  cfg.dataset.sbm.num_nodes = d.count("nodes", cfg.dataset.sbm.num_nodes);
  cfg.dataset.sbm.num_classes = static_cast<int>(d.count("classes", 4));
  cfg.dataset.sbm.p_in = d.real("p_in", cfg.dataset.sbm.p_in);
  cfg.dataset.sbm.p_out = d.real("p_out", cfg.dataset.sbm.p_out);
  cfg.dataset.sbm.feature_dim = d.count("feature_dim", cfg.dataset.sbm.feature_dim);
  cfg.dataset.sbm.seed = d.count("seed", 0);
  cfg.dataset.blobs.num_samples = d.count("samples", cfg.dataset.blobs.num_samples);
  cfg.dataset.blobs.num_classes = static_cast<int>(d.count("classes", 10));
  cfg.dataset.blobs.feature_dim = d.count("feature_dim", cfg.dataset.blobs.feature_dim);
  cfg.dataset.blobs.center_scale = d.real("center_scale", cfg.dataset.blobs.center_scale);
  cfg.dataset.blobs.spread = d.real("spread", cfg.dataset.blobs.spread);
  cfg.dataset.blobs.seed = cfg.dataset.sbm.seed;

  const Reader m(raw, "model", origin);
  cfg.model.arch = m.parsed("arch", "gcn", parse_arch);
  cfg.model.hidden = m.count("hidden", cfg.model.hidden);
  cfg.model.layers = m.count("layers", cfg.model.layers);
  cfg.model.activation = m.parsed("activation", "tanh", parse_activation);
  cfg.model.self_loops = m.flag("self_loops", false);

  const Reader i(raw, "init", origin);
  cfg.init.scheme = i.str("scheme", cfg.init.scheme);
  cfg.init.mu = i.real("mu", cfg.init.mu);
  cfg.init.sigma = i.real("sigma", cfg.init.sigma);
  cfg.init.beta = i.real("beta", cfg.init.beta);
  cfg.init.constant = i.real("constant", cfg.init.constant);
  const std::string reading = i.str("mean_reading", "vectorized");
  if (reading == "vectorized") {
    cfg.init.mean_reading = MeanReading::kVectorized;
  } else if (reading == "scalar") {
    cfg.init.mean_reading = MeanReading::kScalar;
  } else {
    throw ConfigError(origin + ": [init] mean_reading = '" + reading + "' is not one of vectorized, scalar");
  }

  const Reader t(raw, "train", origin);
  cfg.train.eta = t.real("eta", cfg.train.eta);
  cfg.train.epochs = t.count("epochs", cfg.train.epochs);
  cfg.train.eval_every = t.count("eval_every", cfg.train.eval_every);
  cfg.train.smoothness_inflation = t.real("smoothness_inflation", cfg.train.smoothness_inflation);
  cfg.train.wstar_tol = t.real("wstar_tol", cfg.train.wstar_tol);

  // [attack] first, then [attack.N] in ascending N.
  std::vector<std::pair<long, std::string>> attack_sections;
  for (const auto& name : raw.order) {
    if (!is_attack_section(name)) continue;
    attack_sections.emplace_back(name == "attack" ? -1 : std::stol(name.substr(7)), name);
  }
  std::sort(attack_sections.begin(), attack_sections.end());
  for (const auto& [index, name] : attack_sections) cfg.attacks.push_back(read_attack(Reader(raw, name, origin)));

  const Reader b(raw, "bounds", origin);
  if (b.has("variants")) {
    cfg.bound_variants.clear();
    for (const auto& v : split_list(b.str("variants", ""))) {
      try {
        cfg.bound_variants.push_back(parse_variant(v));
      } catch (const std::exception& ex) {
        throw ConfigError(origin + ": [bounds] variants: " + ex.what());
      }
    }
  }

  const Reader e(raw, "experiment", origin);
  cfg.repeats = e.count("repeats", cfg.repeats);
  cfg.base_seed = e.count("base_seed", cfg.base_seed);
  cfg.output_dir = e.str("output_dir", "");
  cfg.threads = e.count("threads", cfg.threads);
  cfg.sweep_axis = e.parsed("sweep_axis", "none", parse_sweep_axis);
  cfg.sweep_values = e.has("sweep_values") ? split_list(e.str("sweep_values", "")) : default_sweep_values(cfg.sweep_axis);
  for (double c : e.reals("fail_cells")) {
    if (c < 0 || c != std::floor(c)) throw ConfigError(origin + ": [experiment] fail_cells must be cell indices");
    cfg.fail_cells.insert(static_cast<std::size_t>(c));
  }

  cfg.validate();
  return cfg;
}

}  // namespace

const char* sweep_axis_name(SweepAxis a) {
  switch (a) {
    case SweepAxis::kNone: return "none";
    case SweepAxis::kSigma: return "sigma";
    case SweepAxis::kBeta: return "beta";
    case SweepAxis::kScheme: return "scheme";
  }
  return "?";
}

SweepAxis parse_sweep_axis(const std::string& s) {
  if (s == "none" || s.empty()) return SweepAxis::kNone;
  if (s == "sigma") return SweepAxis::kSigma;
  if (s == "beta") return SweepAxis::kBeta;
  if (s == "scheme") return SweepAxis::kScheme;
  throw ConfigError("unknown sweep axis '" + s + "' (none, sigma, beta, scheme)");
}

std::vector<std::string> default_sweep_values(SweepAxis a) {
  switch (a) {
    case SweepAxis::kNone: return {};
    case SweepAxis::kSigma: return {"0.1", "0.5", "1.0", "2.0"};
    case SweepAxis::kBeta: return {"0.5", "1.0", "2.0", "4.0"};
    case SweepAxis::kScheme: return {"uniform", "orthogonal", "glorot", "kaiming"};
  }
  return {};
}

InitScheme InitConfig::make() const {
  try {
    return make_scheme(scheme, mu, sigma, beta, constant);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("init: ") + e.what());
  }
}

InitConfig apply_sweep_value(const InitConfig& base, SweepAxis axis, const std::string& value) {
  InitConfig out = base;
  auto number = [&](const std::string& v) {
    try {
      std::size_t pos = 0;
      const double x = std::stod(v, &pos);
      if (pos == v.size() && std::isfinite(x)) return x;
    } catch (const std::exception&) {
    }
    throw ConfigError("sweep value '" + value + "' is not a finite number");
  };
  switch (axis) {
    case SweepAxis::kNone:
      break;
    case SweepAxis::kSigma:
      out.sigma = number(value);
      break;
    case SweepAxis::kBeta:
      out.beta = number(value);
      break;
    case SweepAxis::kScheme: {
      // "name" or "name:p"; p is σ (gaussian), β (uniform, orthogonal) or the constant.
      const auto colon = value.find(':');
      out.scheme = value.substr(0, colon);
      if (colon != std::string::npos) {
        const double p = number(value.substr(colon + 1));
        const std::string name = scheme_name(make_scheme(out.scheme, 0.0, 1.0, 1.0, 0.0));
        if (name == "gaussian") {
          out.sigma = p;
        } else if (name == "uniform" || name == "orthogonal") {
          out.beta = p;
        } else if (name == "constant") {
          out.constant = p;
        } else {
          throw ConfigError("sweep value '" + value + "': scheme " + name + " takes no parameter");
        }
      }
      break;
    }
  }
  out.make();
  return out;
}

void ExperimentConfig::validate() const {
  if (repeats < 1) throw ConfigError("experiment: repeats must be >= 1");
  if (threads < 1) throw ConfigError("experiment: threads must be >= 1");
  if (model.layers < 1) throw ConfigError("model: layers must be >= 1");
  if (model.layers > 1 && model.hidden < 1) throw ConfigError("model: hidden must be >= 1");
  if (!(train.eta > 0.0)) throw ConfigError("train: eta must be positive");
  if (train.eval_every != 0 && train.epochs % train.eval_every != 0)
    throw ConfigError("train: eval_every must divide epochs or be 0");
  if (!(train.smoothness_inflation >= 1.0)) throw ConfigError("train: smoothness_inflation must be >= 1");
  if (!(train.wstar_tol > 0.0)) throw ConfigError("train: wstar_tol must be positive");
  if (dataset.kind == DatasetKind::kDirectory && dataset.path.empty())
    throw ConfigError("dataset: kind dir requires a path");
  if (bound_variants.empty()) throw ConfigError("bounds: at least one variant is required");
  init.make();

  for (const auto& a : attacks) {
    if (a.trials < 1) throw ConfigError("attack: trials must be >= 1");
    if (!std::is_sorted(a.budgets.begin(), a.budgets.end()))
      throw ConfigError("attack: budgets must be sorted ascending");
    if (a.relative_budget && is_structural(a.kind))
      throw ConfigError("attack: relative_budget applies to feature attacks only");
    for (double budget : a.budgets) {
      AttackConfig probe;
      probe.kind = a.kind;
      probe.budget = budget;
      probe.steps = a.steps;
      probe.step_size = a.step_size;
      try {
        probe.validate();
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("attack: ") + e.what());
      }
    }
  }

  if (sweep_axis == SweepAxis::kNone && !sweep_values.empty())
    throw ConfigError("experiment: sweep_values given without a sweep_axis");
  const std::string base = scheme_name(init.make());
  if (sweep_axis == SweepAxis::kSigma && base != "gaussian")
    throw ConfigError("experiment: a sigma sweep requires the gaussian scheme, not " + base);
  if (sweep_axis == SweepAxis::kBeta && base != "uniform" && base != "orthogonal")
    throw ConfigError("experiment: a beta sweep requires the uniform or orthogonal scheme, not " + base);
  for (const auto& v : sweep_values) apply_sweep_value(init, sweep_axis, v);
}

ExperimentConfig parse_config(const std::string& text, const std::string& origin) {
  RawConfig raw = read_ini(text, origin);
  apply_environment(raw);
  return build(raw, origin);
}

ExperimentConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot read config file " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), file.string());
}

}  // namespace robinit
