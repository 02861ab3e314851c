#include "plasticity/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "plasticity/errors.hpp"
#include "plasticity/numfmt.hpp"

namespace plasticity {

namespace pt = boost::property_tree;

const char* experiment_kind_name(ExperimentKind k) noexcept {
  switch (k) {
    case ExperimentKind::kTaskSwitch: return "task-switch";
    case ExperimentKind::kPpoDormancy: return "ppo-dormancy";
    case ExperimentKind::kPerturbation: return "perturbation";
    case ExperimentKind::kEquivalenceSuite: return "equivalence-suite";
    case ExperimentKind::kGradientFree: return "gradient-free";
  }
  return "?";
}

ExperimentKind parse_experiment_kind(const std::string& name) {
  for (auto k : {ExperimentKind::kTaskSwitch, ExperimentKind::kPpoDormancy, ExperimentKind::kPerturbation,
                 ExperimentKind::kEquivalenceSuite, ExperimentKind::kGradientFree}) {
    if (name == experiment_kind_name(k)) return k;
  }
  throw ConfigError("unknown experiment kind '" + name + "'");
}

std::vector<std::size_t> NetworkSpec::widths(std::size_t input, std::size_t output) const {
  std::vector<std::size_t> w{input};
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(output);
  return w;
}

namespace {

void validate_phase(const PhaseConfig& p, const char* name) {
  try {
    p.optimizer.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(name) + ": " + e.what());
  }
  if (p.epochs < 0) throw ConfigError(std::string(name) + ": epochs must be non-negative");
  if (p.patience_steps < 0) throw ConfigError(std::string(name) + ": patience_steps must be non-negative");
  if (!(p.min_improvement >= 0.0 && p.min_improvement < 1.0)) {
    throw ConfigError(std::string(name) + ": min_improvement must lie in [0, 1)");
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (id.empty()) throw ConfigError("experiment id must not be empty");
  if (id.find_first_of("/\\ \t") != std::string::npos) throw ConfigError("experiment id must be a plain file name");
  for (auto w : network.hidden) {
    if (w == 0) throw ConfigError("hidden widths must be positive");
  }
  if (network.hidden.empty()) throw ConfigError("network needs at least one hidden layer");
  if (data.train_size == 0 || data.test_size == 0 || data.probe_size == 0) {
    throw ConfigError("dataset sizes must be positive");
  }
  if (!(data.noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be non-negative");
  if (!(data.input.low < data.input.high)) throw ConfigError("input_low must be below input_high");
  validate_phase(pretrain, "pretrain");
  validate_phase(finetune, "finetune");
  if (learning_rates.empty()) throw ConfigError("learning_rates must not be empty");
  for (double lr : learning_rates) {
    if (!(lr > 0.0)) throw ConfigError("learning rates must be positive");
  }
  if (metric_every <= 0) throw ConfigError("metric_every must be positive");
  if (!(metrics.tau_d >= 0.0) || !(metrics.tau_g >= 0.0)) throw ConfigError("thresholds must be non-negative");
  if (!(metrics.rank_delta > 0.0 && metrics.rank_delta < 1.0)) throw ConfigError("rank_delta must lie in (0, 1)");
  if (!(dormancy_floor >= 0.0 && dormancy_floor <= 1.0)) throw ConfigError("dormancy_floor must lie in [0, 1]");
  if (!(max_mse_ratio > 0.0)) throw ConfigError("max_mse_ratio must be positive");
  if (!(persistence_threshold >= 0.0 && persistence_threshold <= 1.0)) {
    throw ConfigError("persistence_threshold must lie in [0, 1]");
  }
  if (!(burn_in_fraction >= 0.0 && burn_in_fraction < 1.0)) throw ConfigError("burn_in_fraction must lie in [0, 1)");
  ppo.validate();
  if (!(ppo.metrics == metrics)) throw ConfigError("ppo metric settings must match [metrics]");
  if (!(min_correlation >= -1.0 && min_correlation <= 1.0)) throw ConfigError("min_correlation must lie in [-1, 1]");
  if (!(perturbation.eta >= 0.0)) throw ConfigError("perturbation eta must be non-negative");
  if (!(perturbation.max_loss_ratio > 0.0)) throw ConfigError("perturbation max_loss_ratio must be positive");
  const int hidden = static_cast<int>(network.hidden.size());
  if (perturbation.layer >= hidden || perturbation.layer < -hidden) {
    throw ConfigError("perturbation layer out of range");
  }
  if (equivalence.max_hidden_layers == 0 || equivalence.max_width == 0 || equivalence.max_rows == 0) {
    throw ConfigError("equivalence net limits must be positive");
  }
}

namespace {

std::string join_doubles(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + format_double(v[i]);
  return s;
}

template <class T>
std::string join_uints(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + std::to_string(v[i]);
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

// Reads one section and remembers which keys were consumed so leftovers can
// be reported.
class Section {
 public:
  Section(const pt::ptree* tree, std::string name) : tree_(tree), name_(std::move(name)) {}

  bool has(const std::string& key) const { return tree_ && tree_->find(key) != tree_->not_found(); }

  std::string raw(const std::string& key) {
    used_.insert(key);
    return trim(tree_->find(key)->second.data());
  }

  void str(const std::string& key, std::string& out) {
    if (has(key)) out = raw(key);
  }

  void real(const std::string& key, double& out) {
    if (has(key)) out = parse_or_throw(key, [&](const std::string& v) { return parse_double(v); });
  }

  void opt_real(const std::string& key, std::optional<double>& out) {
    if (!has(key)) return;
    const std::string v = raw(key);
    if (v == "none") {
      out.reset();
    } else {
      out = parse_or_throw(key, [](const std::string& s) { return parse_double(s); }, v);
    }
  }

  template <class Int>
  void integer(const std::string& key, Int& out) {
    if (!has(key)) return;
    const std::string v = raw(key);
    if constexpr (std::is_signed_v<Int>) {
      const bool neg = !v.empty() && v[0] == '-';
      const auto mag = parse_or_throw(key, [](const std::string& s) { return parse_uint(s); }, neg ? v.substr(1) : v);
      out = neg ? -static_cast<Int>(mag) : static_cast<Int>(mag);
    } else {
      out = static_cast<Int>(parse_or_throw(key, [](const std::string& s) { return parse_uint(s); }, v));
    }
  }

  void boolean(const std::string& key, bool& out) {
    if (!has(key)) return;
    const std::string v = raw(key);
    if (v == "true") {
      out = true;
    } else if (v == "false") {
      out = false;
    } else {
      throw ConfigError(where(key) + ": expected true or false, got '" + v + "'");
    }
  }

  void reals(const std::string& key, std::vector<double>& out) {
    if (!has(key)) return;
    out.clear();
    for (const auto& item : split_list(raw(key))) {
      out.push_back(parse_or_throw(key, [](const std::string& s) { return parse_double(s); }, item));
    }
  }

  template <class Int>
  void uints(const std::string& key, std::vector<Int>& out) {
    if (!has(key)) return;
    out.clear();
    for (const auto& item : split_list(raw(key))) {
      out.push_back(static_cast<Int>(parse_or_throw(key, [](const std::string& s) { return parse_uint(s); }, item)));
    }
  }

  template <class Enum, class Parser>
  void enumeration(const std::string& key, Enum& out, Parser parse) {
    if (!has(key)) return;
    const std::string v = raw(key);
    try {
      out = parse(v);
    } catch (const ConfigError& e) {
      throw ConfigError(where(key) + ": " + e.what());
    }
  }

  void check_unused() const {
    if (!tree_) return;
    for (const auto& [key, child] : *tree_) {
      if (!used_.count(key)) throw ConfigError("unknown key '" + key + "' in [" + name_ + "]");
    }
  }

 private:
  std::string where(const std::string& key) const { return "[" + name_ + "] " + key; }

  template <class Fn>
  auto parse_or_throw(const std::string& key, Fn fn, std::optional<std::string> value = std::nullopt)
      -> decltype(fn(std::string())) {
    const std::string v = value ? *value : raw(key);
    try {
      return fn(v);
    } catch (const Error& e) {
      throw ConfigError(where(key) + ": " + e.what());
    }
  }

  const pt::ptree* tree_;
  std::string name_;
  std::set<std::string> used_;
};

const char* magi_target_name(MagiTarget t) noexcept {
  return t == MagiTarget::kPostActivation ? "post-activation" : "pre-activation";
}

MagiTarget parse_magi_target(const std::string& s) {
  if (s == "post-activation") return MagiTarget::kPostActivation;
  if (s == "pre-activation") return MagiTarget::kPreActivation;
  throw ConfigError("unknown magi target '" + s + "'");
}

std::string opt_string(const std::optional<double>& v) { return v ? format_double(*v) : std::string("none"); }

void read_phase(Section& s, PhaseConfig& p) {
  auto& o = p.optimizer;
  s.enumeration("optimizer", o.kind, parse_optimizer_kind);
  s.real("learning_rate", o.learning_rate);
  s.enumeration("schedule", o.schedule, parse_lr_schedule);
  s.integer("anneal_steps", o.anneal_steps);
  s.real("weight_decay", o.weight_decay);
  s.opt_real("grad_clip_norm", o.grad_clip_norm);
  s.opt_real("weight_clip_bound", o.weight_clip_bound);
  s.real("beta1", o.beta1);
  s.real("beta2", o.beta2);
  s.real("adam_epsilon", o.adam_epsilon);
  s.integer("epochs", p.epochs);
  s.integer("batch_size", p.batch_size);
  s.integer("patience_steps", p.patience_steps);
  s.real("min_improvement", p.min_improvement);
}

void write_phase(std::ostream& os, const char* name, const PhaseConfig& p) {
  const auto& o = p.optimizer;
  os << "\n[" << name << "]\n"
     << "optimizer = " << optimizer_kind_name(o.kind) << '\n'
     << "learning_rate = " << format_double(o.learning_rate) << '\n'
     << "schedule = " << lr_schedule_name(o.schedule) << '\n'
     << "anneal_steps = " << o.anneal_steps << '\n'
     << "weight_decay = " << format_double(o.weight_decay) << '\n'
     << "grad_clip_norm = " << opt_string(o.grad_clip_norm) << '\n'
     << "weight_clip_bound = " << opt_string(o.weight_clip_bound) << '\n'
     << "beta1 = " << format_double(o.beta1) << '\n'
     << "beta2 = " << format_double(o.beta2) << '\n'
     << "adam_epsilon = " << format_double(o.adam_epsilon) << '\n'
     << "epochs = " << p.epochs << '\n'
     << "batch_size = " << p.batch_size << '\n'
     << "patience_steps = " << p.patience_steps << '\n'
     << "min_improvement = " << format_double(p.min_improvement) << '\n';
}

const std::set<std::string> kSections = {"experiment", "network",  "data",         "pretrain",   "finetune",
                                         "metrics",    "criteria", "perturbation", "equivalence", "ppo"};

}  // namespace

ExperimentConfig parse_config(std::istream& is) {
  pt::ptree tree;
  try {
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config syntax: ") + e.what());
  }

  // Top-level plain keys and sections share the root; sections have children.
  const auto version_it = tree.find("version");
  if (version_it == tree.not_found() || !version_it->second.empty()) {
    throw ConfigError("config must start with 'version = " + std::to_string(kConfigVersion) + "'");
  }
  if (trim(version_it->second.data()) != std::to_string(kConfigVersion)) {
    throw ConfigError("unsupported config version '" + version_it->second.data() + "'");
  }
  for (const auto& [key, child] : tree) {
    if (key == "version") continue;
    if (child.empty() && !kSections.count(key)) throw ConfigError("unknown top-level key '" + key + "'");
    if (!kSections.count(key)) throw ConfigError("unknown section [" + key + "]");
  }
  auto section = [&](const std::string& name) {
    const auto it = tree.find(name);
    return Section(it == tree.not_found() ? nullptr : &it->second, name);
  };

  ExperimentConfig c;
  {
    Section s = section("experiment");
    if (!s.has("kind")) throw ConfigError("[experiment] kind is required");
    s.enumeration("kind", c.kind, parse_experiment_kind);
    c = default_config(c.kind);
    s.str("id", c.id);
    s.uints("seeds", c.seeds);
    s.str("output_dir", c.output_dir);
    s.reals("learning_rates", c.learning_rates);
    s.integer("metric_every", c.metric_every);
    s.check_unused();
  }
  {
    Section s = section("network");
    s.uints("hidden", c.network.hidden);
    s.enumeration("activation", c.network.activation, parse_activation);
    s.check_unused();
  }
  {
    Section s = section("data");
    s.integer("train_size", c.data.train_size);
    s.integer("test_size", c.data.test_size);
    s.integer("probe_size", c.data.probe_size);
    s.real("noise_sigma", c.data.noise_sigma);
    s.real("input_low", c.data.input.low);
    s.real("input_high", c.data.input.high);
    s.check_unused();
  }
  for (const char* name : {"pretrain", "finetune"}) {
    Section s = section(name);
    read_phase(s, std::string(name) == "pretrain" ? c.pretrain : c.finetune);
    s.check_unused();
  }
  {
    Section s = section("metrics");
    s.real("tau_d", c.metrics.tau_d);
    s.real("tau_g", c.metrics.tau_g);
    s.real("rank_delta", c.metrics.rank_delta);
    s.enumeration("magi_target", c.metrics.magi_target, parse_magi_target);
    s.check_unused();
    c.ppo.metrics = c.metrics;
  }
  {
    Section s = section("criteria");
    s.real("dormancy_floor", c.dormancy_floor);
    s.real("max_mse_ratio", c.max_mse_ratio);
    s.real("persistence_threshold", c.persistence_threshold);
    s.real("burn_in_fraction", c.burn_in_fraction);
    s.real("min_correlation", c.min_correlation);
    s.check_unused();
  }
  {
    Section s = section("perturbation");
    s.real("eta", c.perturbation.eta);
    s.integer("layer", c.perturbation.layer);
    s.real("max_loss_ratio", c.perturbation.max_loss_ratio);
    s.check_unused();
  }
  {
    Section s = section("equivalence");
    s.integer("random_nets", c.equivalence.random_nets);
    s.integer("trained_nets", c.equivalence.trained_nets);
    s.integer("max_hidden_layers", c.equivalence.max_hidden_layers);
    s.integer("max_width", c.equivalence.max_width);
    s.integer("max_rows", c.equivalence.max_rows);
    s.check_unused();
  }
  {
    Section s = section("ppo");
    auto& p = c.ppo;
    s.real("gamma", p.gamma);
    s.real("gae_lambda", p.gae_lambda);
    s.real("clip_coef", p.clip_coef);
    s.real("value_coef", p.value_coef);
    s.integer("minibatches", p.minibatches);
    s.integer("update_epochs", p.update_epochs);
    s.real("grad_clip_norm", p.grad_clip_norm);
    s.real("learning_rate", p.learning_rate);
    s.boolean("anneal_lr", p.anneal_lr);
    s.real("weight_decay", p.weight_decay);
    s.real("adam_epsilon", p.adam_epsilon);
    s.integer("total_steps", p.total_steps);
    s.integer("rollout_length", p.rollout_length);
    s.uints("hidden", p.hidden);
    s.enumeration("activation", p.activation, parse_activation);
    s.integer("probe_size", p.probe_size);
    s.boolean("normalize_advantages", p.normalize_advantages);
    s.real("dt", p.env.dt);
    s.integer("horizon", p.env.horizon);
    s.real("action_cost", p.env.action_cost);
    s.check_unused();
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  return parse_config(in);
}

void write_config(std::ostream& os, const ExperimentConfig& c) {
  os << "version = " << kConfigVersion << '\n';
  os << "\n[experiment]\n"
     << "kind = " << experiment_kind_name(c.kind) << '\n'
     << "id = " << c.id << '\n'
     << "seeds = " << join_uints(c.seeds) << '\n'
     << "output_dir = " << c.output_dir << '\n'
     << "learning_rates = " << join_doubles(c.learning_rates) << '\n'
     << "metric_every = " << c.metric_every << '\n';
  os << "\n[network]\n"
     << "hidden = " << join_uints(c.network.hidden) << '\n'
     << "activation = " << activation_name(c.network.activation) << '\n';
  os << "\n[data]\n"
     << "train_size = " << c.data.train_size << '\n'
     << "test_size = " << c.data.test_size << '\n'
     << "probe_size = " << c.data.probe_size << '\n'
     << "noise_sigma = " << format_double(c.data.noise_sigma) << '\n'
     << "input_low = " << format_double(c.data.input.low) << '\n'
     << "input_high = " << format_double(c.data.input.high) << '\n';
  write_phase(os, "pretrain", c.pretrain);
  write_phase(os, "finetune", c.finetune);
  os << "\n[metrics]\n"
     << "tau_d = " << format_double(c.metrics.tau_d) << '\n'
     << "tau_g = " << format_double(c.metrics.tau_g) << '\n'
     << "rank_delta = " << format_double(c.metrics.rank_delta) << '\n'
     << "magi_target = " << magi_target_name(c.metrics.magi_target) << '\n';
  os << "\n[criteria]\n"
     << "dormancy_floor = " << format_double(c.dormancy_floor) << '\n'
     << "max_mse_ratio = " << format_double(c.max_mse_ratio) << '\n'
     << "persistence_threshold = " << format_double(c.persistence_threshold) << '\n'
     << "burn_in_fraction = " << format_double(c.burn_in_fraction) << '\n'
     << "min_correlation = " << format_double(c.min_correlation) << '\n';
  os << "\n[perturbation]\n"
     << "eta = " << format_double(c.perturbation.eta) << '\n'
     << "layer = " << c.perturbation.layer << '\n'
     << "max_loss_ratio = " << format_double(c.perturbation.max_loss_ratio) << '\n';
  os << "\n[equivalence]\n"
     << "random_nets = " << c.equivalence.random_nets << '\n'
     << "trained_nets = " << c.equivalence.trained_nets << '\n'
     << "max_hidden_layers = " << c.equivalence.max_hidden_layers << '\n'
     << "max_width = " << c.equivalence.max_width << '\n'
     << "max_rows = " << c.equivalence.max_rows << '\n';
  const auto& p = c.ppo;
  os << "\n[ppo]\n"
     << "gamma = " << format_double(p.gamma) << '\n'
     << "gae_lambda = " << format_double(p.gae_lambda) << '\n'
     << "clip_coef = " << format_double(p.clip_coef) << '\n'
     << "value_coef = " << format_double(p.value_coef) << '\n'
     << "minibatches = " << p.minibatches << '\n'
     << "update_epochs = " << p.update_epochs << '\n'
     << "grad_clip_norm = " << format_double(p.grad_clip_norm) << '\n'
     << "learning_rate = " << format_double(p.learning_rate) << '\n'
     << "anneal_lr = " << (p.anneal_lr ? "true" : "false") << '\n'
     << "weight_decay = " << format_double(p.weight_decay) << '\n'
     << "adam_epsilon = " << format_double(p.adam_epsilon) << '\n'
     << "total_steps = " << p.total_steps << '\n'
     << "rollout_length = " << p.rollout_length << '\n'
     << "hidden = " << join_uints(p.hidden) << '\n'
     << "activation = " << activation_name(p.activation) << '\n'
     << "probe_size = " << p.probe_size << '\n'
     << "normalize_advantages = " << (p.normalize_advantages ? "true" : "false") << '\n'
     << "dt = " << format_double(p.env.dt) << '\n'
     << "horizon = " << p.env.horizon << '\n'
     << "action_cost = " << format_double(p.env.action_cost) << '\n';
}

void save_config(const std::string& path, const ExperimentConfig& config) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write config '" + path + "'");
  write_config(out, config);
}

ExperimentConfig default_config(ExperimentKind kind) {
  ExperimentConfig c;
  c.kind = kind;
  c.id = experiment_kind_name(kind);

  c.pretrain.optimizer.kind = OptimizerKind::kSgd;
  c.pretrain.optimizer.learning_rate = 0.01;
  c.pretrain.epochs = 1250;  // 20k minibatch steps
  c.pretrain.batch_size = 64;

  // Full-batch fine-tuning, stopped once the test loss plateaus.
  c.finetune.optimizer.kind = OptimizerKind::kSgd;
  c.finetune.optimizer.learning_rate = 0.01;
  c.finetune.epochs = 5000;
  c.finetune.batch_size = 0;
  c.finetune.patience_steps = 500;
  c.finetune.min_improvement = 1e-3;

  switch (kind) {
    case ExperimentKind::kPerturbation:
      c.learning_rates = {0.01};
      break;
    case ExperimentKind::kEquivalenceSuite:
      // Shorter pretraining: the trained nets only need dead units, which
      // appear within the first few thousand steps.
      c.pretrain.epochs = 100;
      c.learning_rates = {0.01};
      break;
    default:
      break;
  }
  c.ppo.metrics = c.metrics;
  return c;
}

}  // namespace plasticity
