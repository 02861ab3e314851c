#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "plasticity/autodiff.hpp"
#include "plasticity/mlp.hpp"

namespace plasticity {

enum class OptimizerKind { kSgd, kAdam };
enum class LrSchedule { kConstant, kLinearAnneal };

const char* optimizer_kind_name(OptimizerKind k) noexcept;
OptimizerKind parse_optimizer_kind(const std::string& name);
const char* lr_schedule_name(LrSchedule s) noexcept;
LrSchedule parse_lr_schedule(const std::string& name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kSgd;
  double learning_rate = 0.01;
  LrSchedule schedule = LrSchedule::kConstant;
  /// Horizon T of the linear anneal: lr(t) = lr * (1 - t / T), lr(T) = 0.
  std::int64_t anneal_steps = 0;
  /// Decoupled: w <- w * (1 - lr * weight_decay) before the gradient update.
  double weight_decay = 0.0;
  std::optional<double> grad_clip_norm;
  /// Per-entry bound applied to every parameter after the update.
  std::optional<double> weight_clip_bound;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;

  void validate() const;
  friend bool operator==(const OptimizerConfig&, const OptimizerConfig&) = default;
};

double scheduled_learning_rate(const OptimizerConfig& config, std::int64_t t);

/// A parameter array and its gradient.
struct ParamSlot {
  std::span<double> value;
  std::span<const double> grad;
};

double global_grad_norm(std::span<const ParamSlot> params);

/// SGD / Adam with decoupled weight decay, global-norm gradient clipping and
/// per-entry weight clipping, in that order.
///
/// State is keyed by slot position, so callers must pass the same parameter
/// list in the same order on every step.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config);

  /// Update with the scheduled rate for the internal step counter.
  void step(std::span<const ParamSlot> params);
  /// Update with an explicit learning rate (caller-driven schedules).
  void step(std::span<const ParamSlot> params, double learning_rate);

  std::int64_t steps_taken() const noexcept { return t_; }
  const OptimizerConfig& config() const noexcept { return config_; }

 private:
  OptimizerConfig config_;
  std::int64_t t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

/// Slots for every weight and bias of `net`, in layer order.
std::vector<ParamSlot> parameter_slots(MlpNetwork& net, const NetworkGrads& grads);

/// Applies one optimizer step to `net`.
void step(MlpNetwork& net, Optimizer& optimizer, const NetworkGrads& grads);

/// Mean squared error recorded on the tape; shapes must match.
Var mse_loss(Var prediction, Var target);
double mse(const Tensor& prediction, const Tensor& target);

}  // namespace plasticity
