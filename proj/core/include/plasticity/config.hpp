#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "plasticity/mlp.hpp"
#include "plasticity/optim.hpp"
#include "plasticity/ppo.hpp"
#include "plasticity/tasks.hpp"
#include "plasticity/train.hpp"

namespace plasticity {

inline constexpr int kConfigVersion = 1;

enum class ExperimentKind {
  kTaskSwitch,
  kPpoDormancy,
  kPerturbation,
  kEquivalenceSuite,
  // Reserved name; no procedure exists for it and running it is an error.
  kGradientFree,
};

const char* experiment_kind_name(ExperimentKind k) noexcept;
ExperimentKind parse_experiment_kind(const std::string& name);

/// Hidden layer widths and activation; input and output widths come from the task.
struct NetworkSpec {
  std::vector<std::size_t> hidden = {64, 64};
  Activation activation = Activation::kRelu;

  std::vector<std::size_t> widths(std::size_t input, std::size_t output) const;
  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

/// One supervised training phase.
struct PhaseConfig {
  OptimizerConfig optimizer;
  std::int64_t epochs = 0;
  /// 0 means full batch.
  std::size_t batch_size = 64;
  /// Convergence stop (see TrainConfig); 0 disables it.
  std::int64_t patience_steps = 0;
  double min_improvement = 1e-3;

  friend bool operator==(const PhaseConfig&, const PhaseConfig&) = default;
};

struct DataConfig {
  std::size_t train_size = 1000;
  std::size_t test_size = 1000;
  std::size_t probe_size = 256;
  double noise_sigma = 0.1;
  InputDistribution input;

  friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

struct PerturbationConfig {
  /// Noise std as a multiple of the layer's weight std.
  double eta = 0.1;
  /// Layer whose zero-gradient neurons are perturbed; negative counts from the
  /// last hidden layer (-1 = last hidden).
  int layer = -1;
  /// Tolerance on the perturbed / control final-loss ratio.
  double max_loss_ratio = 1.1;

  friend bool operator==(const PerturbationConfig&, const PerturbationConfig&) = default;
};

struct EquivalenceConfig {
  std::size_t random_nets = 100;
  std::size_t trained_nets = 20;
  std::size_t max_hidden_layers = 3;
  std::size_t max_width = 8;
  std::size_t max_rows = 16;

  friend bool operator==(const EquivalenceConfig&, const EquivalenceConfig&) = default;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::kTaskSwitch;
  std::string id = "experiment";
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  std::string output_dir = "runs";

  NetworkSpec network;
  DataConfig data;
  PhaseConfig pretrain;
  PhaseConfig finetune;
  /// Fine-tuning learning rates; each one is a separate sweep over all arms.
  std::vector<double> learning_rates = {0.01, 0.005};
  std::int64_t metric_every = 50;

  MetricSettings metrics;
  /// Minimum last-hidden-layer dormant fraction the dormancy arm must reach.
  double dormancy_floor = 0.2;
  /// Geometric-mean final-test-MSE ratio that still counts as "no difference".
  double max_mse_ratio = 1.5;
  /// Consecutive-snapshot overlap required after the burn-in.
  double persistence_threshold = 0.95;
  /// Fraction of the fine-tuning budget ignored before checking persistence.
  double burn_in_fraction = 0.1;

  PpoConfig ppo;
  /// Minimum Pearson correlation between dormant and zero-gradient fractions.
  double min_correlation = 0.8;
  PerturbationConfig perturbation;
  EquivalenceConfig equivalence;

  /// Throws ConfigError on any invariant violation.
  void validate() const;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

/// Sectioned key = value text (INI style), `version = 1` at the top level.
/// Unknown sections or keys are rejected.
ExperimentConfig parse_config(std::istream& is);
ExperimentConfig load_config(const std::string& path);
void write_config(std::ostream& os, const ExperimentConfig& config);
void save_config(const std::string& path, const ExperimentConfig& config);

/// Defaults for each experiment kind (the values the shipped configs use).
ExperimentConfig default_config(ExperimentKind kind);

}  // namespace plasticity
