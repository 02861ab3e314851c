#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "plasticity/metrics.hpp"
#include "plasticity/mlp.hpp"
#include "plasticity/optim.hpp"
#include "plasticity/tasks.hpp"

namespace plasticity {

struct MetricSettings {
  double tau_d = 0.025;
  double tau_g = 1e-8;
  double rank_delta = 0.01;
  MagiTarget magi_target = MagiTarget::kPostActivation;

  friend bool operator==(const MetricSettings&, const MetricSettings&) = default;
};

/// Every metric of one layer at one iteration.
struct LayerSnapshot {
  std::size_t id = 0;
  std::int64_t step = 0;
  std::string network;
  std::size_t layer = 0;
  DormancyReport dormancy;
  GradientIntensityReport gradient;
  WeightStats weights;
  RankStats rank;
};

/// Metrics for every layer of `net` on the probe batch; ids are left at 0.
std::vector<LayerSnapshot> snapshot_network(const MlpNetwork& net, const Tensor& probe,
                                            const MetricSettings& settings, const std::string& network,
                                            std::int64_t step);

struct TraceRecord {
  std::int64_t step = 0;
  int task_id = 0;
  double train_loss = 0.0;
  std::optional<double> test_loss;
  std::optional<double> episodic_return;
  std::vector<std::size_t> snapshot_ids;
  /// Seconds since the run started. Not persisted (keeps outputs reproducible).
  double wall_clock_seconds = 0.0;
};

struct TrainingTrace {
  std::string experiment_id;
  std::vector<TraceRecord> records;
  std::vector<LayerSnapshot> snapshots;
  bool aborted = false;
  std::string diagnostic;

  /// Assigns consecutive ids and returns them.
  std::vector<std::size_t> add_snapshots(std::vector<LayerSnapshot> snaps);
  /// Appends another trace's records and snapshots, remapping snapshot ids.
  void append(const TrainingTrace& other);
  const LayerSnapshot& snapshot(std::size_t id) const;
  /// Snapshots of one (network, layer) ordered by step.
  std::vector<const LayerSnapshot*> series(const std::string& network, std::size_t layer) const;
  /// Throws unless steps strictly increase and every referenced snapshot exists.
  void validate() const;
};

using SnapshotHook = std::function<void(const MlpNetwork&, std::int64_t step)>;

struct TrainConfig {
  std::int64_t epochs = 0;
  /// 0 means full batch.
  std::size_t batch_size = 0;
  std::int64_t metric_every = 50;
  int task_id = 0;
  /// Step number of the first update (continuing traces across task switches).
  std::int64_t step_offset = 0;
  std::uint64_t shuffle_seed = 0;
  std::string network_name = "net";
  MetricSettings metrics;
  double divergence_bound = 1e12;
  /// Skip the snapshot at step_offset (already recorded by a previous phase).
  bool skip_initial_snapshot = false;
  /// Extra callbacks invoked at each snapshot step.
  std::vector<SnapshotHook> hooks;
  /// Convergence stop: when > 0, training ends once the monitored loss (test
  /// loss if a test set is given, else train loss) has not improved on its
  /// best value by a relative `min_improvement` for this many steps. Checked
  /// at snapshot steps; `epochs` stays the upper bound.
  std::int64_t patience_steps = 0;
  double min_improvement = 1e-3;
};

/// Mini/full-batch MSE training with metric snapshots on `probe` every
/// `metric_every` steps (plus the initial and final step). On divergence or a
/// non-finite value the trace is marked aborted and returned early. A
/// convergence stop is recorded in `TrainingTrace::diagnostic` without
/// setting `aborted`.
TrainingTrace train_supervised(MlpNetwork& net, const Dataset& train, const Dataset* test, Optimizer& optimizer,
                               const TrainConfig& config, const Tensor& probe);

/// Mean squared error of the network on a dataset.
double evaluate_mse(const MlpNetwork& net, const Dataset& data);

enum class SetKind { kDormant, kZeroGradient };

/// Overlap of each snapshot's mask with the previous snapshot's mask.
std::vector<OverlapReport> compute_overlap_trace(const TrainingTrace& trace, SetKind kind,
                                                 const std::string& network, std::size_t layer);

}  // namespace plasticity
