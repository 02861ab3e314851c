#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "plasticity/config.hpp"
#include "plasticity/metrics.hpp"
#include "plasticity/mlp.hpp"
#include "plasticity/train.hpp"

namespace plasticity {

/// One per-seed result row. `group` is the arm (or network) name.
struct ReportRow {
  std::string group;
  double learning_rate = 0.0;
  std::uint64_t seed = 0;
  /// Named scalar results, in a fixed order per experiment kind.
  std::vector<std::pair<std::string, double>> values;
  /// False when the row's preconditions failed (e.g. dormancy floor missed).
  bool valid = true;
  std::string note;

  /// NaN when the row has no such value.
  double value(const std::string& name) const;
};

/// Fold of the valid rows of one (group, learning rate) over seeds.
struct ArmAggregate {
  std::string group;
  double learning_rate = 0.0;
  std::string metric;
  std::size_t seeds = 0;
  std::size_t invalid_seeds = 0;
  double mean = 0.0;
  /// Sample standard deviation (0 for a single seed).
  double std = 0.0;
  double geometric_mean = 0.0;
};

struct CriterionResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct ExperimentReport {
  std::string experiment_id;
  ExperimentKind kind = ExperimentKind::kTaskSwitch;
  /// Value aggregated per arm (e.g. final_test_mse).
  std::string metric;
  std::vector<ReportRow> rows;
  std::vector<ArmAggregate> aggregates;
  std::vector<CriterionResult> criteria;
  std::vector<std::string> notes;
  /// Every trace produced by the run, keyed by file stem (not part of the report files).
  std::vector<std::pair<std::string, TrainingTrace>> traces;

  bool passed() const;
};

/// Mean / sample std / geometric mean of `metric` over the valid rows of every
/// (group, learning rate), in first-appearance order.
std::vector<ArmAggregate> aggregate_rows(const std::vector<ReportRow>& rows, const std::string& metric);

/// Plain-text summary: arm table, criteria, notes.
void write_report_text(std::ostream& os, const ExperimentReport& report);
/// Long per-seed CSV: group,learning_rate,seed,valid,name,value,note. Commas and
/// line breaks inside text fields are written as ';'.
void write_report_csv(std::ostream& os, const ExperimentReport& report);
/// Rows back from the CSV written above.
std::vector<ReportRow> read_report_csv(std::istream& is);

/// Where and whether a run persists its outputs.
struct RunOptions {
  /// Run directory; empty means keep everything in memory.
  std::string output_dir;
  /// Progress messages; null for silence.
  std::ostream* log = nullptr;
};

/// Three arms (dormancy-pretrained, benign-pretrained, random-init) fine-tuned
/// on the benchmark regression at every configured learning rate.
ExperimentReport run_task_switch(const ExperimentConfig& config, const RunOptions& options = {});

/// Pretrain on the dormancy task, perturb the zero-gradient neurons, continue
/// training next to an unperturbed control (and an eta = 0 arm).
ExperimentReport run_perturbation(const ExperimentConfig& config, const RunOptions& options = {});

/// Dormant vs zero-gradient agreement on random ReLU nets and trained nets.
ExperimentReport run_equivalence_suite(const ExperimentConfig& config, const RunOptions& options = {});

/// Toy-env PPO with dormant / zero-gradient fraction series for every hidden layer.
ExperimentReport run_ppo_dormancy(const ExperimentConfig& config, const RunOptions& options = {});

/// Dispatches on config.kind and, with an output directory, writes the config
/// copy, manifest, traces and report files.
ExperimentReport run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

/// Adds N(0, (eta * std(W_l))^2) noise to the incoming weights of the given
/// neurons of layer `layer`. eta = 0 leaves the network untouched.
void perturb_neurons(MlpNetwork& net, std::size_t layer, const IndexSet& neurons, double eta, std::mt19937_64& rng);

/// Random ReLU net for the equivalence suite: random depth and widths within
/// the limits, nonpositive biases with some strongly negative units.
MlpNetwork random_equivalence_net(const EquivalenceConfig& limits, std::size_t input_dim, std::uint64_t seed);

/// Last hidden layer index of a network with at least one hidden layer.
std::size_t last_hidden_layer(const MlpNetwork& net);

/// Minimum consecutive overlap of a (network, layer) set series, ignoring
/// pairs whose later snapshot precedes `from_step`. Empty when no pair
/// remains or every remaining pair is degenerate (both sets empty).
struct PersistenceResult {
  double min_overlap = 1.0;
  std::size_t pairs = 0;
  std::size_t degenerate_pairs = 0;
  bool applicable() const noexcept { return pairs > degenerate_pairs; }
};
PersistenceResult persistence(const TrainingTrace& trace, SetKind kind, const std::string& network, std::size_t layer,
                              std::int64_t from_step);

}  // namespace plasticity
