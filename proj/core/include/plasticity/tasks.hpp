#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "plasticity/tensor.hpp"

namespace plasticity {

inline constexpr std::size_t kBenchmarkInputDim = 17;

/// The 17-input nonlinear benchmark target plus additive noise.
///
/// Sixteen terms: linear, quadratic, cubic, sin/cos, Gaussian bump, tanh,
/// two products and a sqrt(|x|) kink. Throws ShapeError unless x has 17
/// entries and NonFiniteError on non-finite input.
double eval_target(std::span<const double> x, std::optional<double> noise = std::nullopt);

enum class TargetKind {
  kBenchmark,          // eval_target
  kDormancyInducing,   // offset + amplitude * sin(direction . x), narrow inputs
  kBenign,             // same form, zero offset and small amplitude
};

const char* target_kind_name(TargetKind k) noexcept;
TargetKind parse_target_kind(const std::string& name);

/// Per-coordinate i.i.d. uniform input law.
struct InputDistribution {
  double low = -2.0;
  double high = 2.0;
  friend bool operator==(const InputDistribution&, const InputDistribution&) = default;
};

struct RegressionTaskSpec {
  TargetKind target = TargetKind::kBenchmark;
  std::size_t input_dim = kBenchmarkInputDim;
  double noise_sigma = 0.1;
  InputDistribution input;
  std::uint64_t seed = 0;
  // Parameters of the pretraining targets; unused by the benchmark target.
  double offset = 0.0;
  double amplitude = 0.0;
  std::vector<double> direction;

  void validate() const;
  /// Noise-free target value.
  double clean_target(std::span<const double> x) const;

  friend bool operator==(const RegressionTaskSpec&, const RegressionTaskSpec&) = default;
};

RegressionTaskSpec benchmark_task(double noise_sigma = 0.1);

enum class PretrainKind { kDormancyInducing, kBenign };

/// Desk-scale pretraining targets. The dormancy-inducing task has a large
/// constant offset over a narrow positive input box, which drives ReLU units
/// to switch off during training; the benign task is a small smooth target
/// over the benchmark's input range.
RegressionTaskSpec make_pretrain_task(PretrainKind kind, std::uint64_t seed);

enum class SplitTag { kTrain, kTest, kProbe };
const char* split_name(SplitTag s) noexcept;
SplitTag parse_split(const std::string& name);

struct Dataset {
  Tensor inputs;   // n x input_dim
  Tensor targets;  // n x 1
  SplitTag split = SplitTag::kTrain;
  std::uint64_t generator_seed = 0;
  RegressionTaskSpec spec;

  std::size_t size() const noexcept { return inputs.rows(); }
};

/// Deterministic per (spec, n, seed): inputs then one standard normal per row
/// scaled by noise_sigma.
Dataset generate_dataset(const RegressionTaskSpec& spec, std::size_t n, std::uint64_t seed,
                         SplitTag split = SplitTag::kTrain);

/// Only the inputs (for metric probe batches).
Tensor sample_inputs(const RegressionTaskSpec& spec, std::size_t n, std::uint64_t seed);

/// A sequence of tasks trained back to back on one network.
struct TaskPhase {
  std::string name;
  RegressionTaskSpec task;
  std::int64_t steps = 0;
};

struct TaskSchedule {
  std::vector<TaskPhase> phases;

  void validate() const;
  /// Global step index at which each phase after the first begins.
  std::vector<std::int64_t> switch_boundaries() const;
  std::int64_t total_steps() const;
};

/// CSV with header X0..X{d-1},y.
void write_dataset_csv(std::ostream& os, const Dataset& d);
/// Sidecar manifest (key=value) recording the generating spec and seed.
void write_dataset_manifest(std::ostream& os, const Dataset& d);
Dataset read_dataset(std::istream& csv, std::istream& manifest);

/// Writes `path` and `path + ".manifest"`.
void save_dataset(const std::string& path, const Dataset& d);
Dataset load_dataset(const std::string& path);

}  // namespace plasticity
