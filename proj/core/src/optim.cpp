#include "plasticity/optim.hpp"

#include <algorithm>
#include <cmath>

#include "plasticity/errors.hpp"

namespace plasticity {

const char* optimizer_kind_name(OptimizerKind k) noexcept { return k == OptimizerKind::kSgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer_kind(const std::string& name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "adam") return OptimizerKind::kAdam;
  throw ConfigError("unknown optimizer '" + name + "'");
}

const char* lr_schedule_name(LrSchedule s) noexcept {
  return s == LrSchedule::kConstant ? "constant" : "linear-anneal";
}

LrSchedule parse_lr_schedule(const std::string& name) {
  if (name == "constant") return LrSchedule::kConstant;
  if (name == "linear-anneal") return LrSchedule::kLinearAnneal;
  throw ConfigError("unknown learning-rate schedule '" + name + "'");
}

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  if (grad_clip_norm && !(*grad_clip_norm > 0.0)) throw ConfigError("grad_clip_norm must be positive");
  if (weight_clip_bound && !(*weight_clip_bound > 0.0)) throw ConfigError("weight_clip_bound must be positive");
  if (schedule == LrSchedule::kLinearAnneal && anneal_steps <= 0) {
    throw ConfigError("linear-anneal schedule needs a positive anneal horizon");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(adam_epsilon > 0.0)) throw ConfigError("adam_epsilon must be positive");
}

double scheduled_learning_rate(const OptimizerConfig& config, std::int64_t t) {
  if (config.schedule == LrSchedule::kConstant) return config.learning_rate;
  const auto horizon = static_cast<double>(config.anneal_steps);
  const double frac = 1.0 - static_cast<double>(std::clamp<std::int64_t>(t, 0, config.anneal_steps)) / horizon;
  return config.learning_rate * frac;
}

double global_grad_norm(std::span<const ParamSlot> params) {
  double acc = 0.0;
  for (const auto& p : params)
    for (double g : p.grad) acc += g * g;
  return std::sqrt(acc);
}

Optimizer::Optimizer(OptimizerConfig config) : config_(std::move(config)) { config_.validate(); }

void Optimizer::step(std::span<const ParamSlot> params) { step(params, scheduled_learning_rate(config_, t_)); }

void Optimizer::step(std::span<const ParamSlot> params, double lr) {
  if (!(lr >= 0.0)) throw ConfigError("learning rate must be non-negative");
  for (const auto& p : params) {
    if (p.value.size() != p.grad.size()) throw ShapeError("parameter and gradient sizes differ");
    for (double g : p.grad) {
      if (!std::isfinite(g)) throw NonFiniteError("non-finite gradient; optimizer step aborted");
    }
  }
  if (config_.kind == OptimizerKind::kAdam && m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.value.size(), 0.0);
      v_.emplace_back(p.value.size(), 0.0);
    }
  }
  if (config_.kind == OptimizerKind::kAdam && m_.size() != params.size()) {
    throw ShapeError("optimizer received a different parameter list than on its first step");
  }

  double grad_scale = 1.0;
  if (config_.grad_clip_norm) {
    const double norm = global_grad_norm(params);
    const double coef = *config_.grad_clip_norm / (norm + 1e-6);
    if (coef < 1.0) grad_scale = coef;
  }
  const double decay = 1.0 - lr * config_.weight_decay;
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));

  for (std::size_t s = 0; s < params.size(); ++s) {
    auto value = params[s].value;
    auto grad = params[s].grad;
    if (config_.weight_decay != 0.0) {
      for (double& w : value) w *= decay;
    }
    if (config_.kind == OptimizerKind::kSgd) {
      for (std::size_t i = 0; i < value.size(); ++i) value[i] -= lr * (grad[i] * grad_scale);
    } else {
      auto& m = m_[s];
      auto& v = v_[s];
      if (m.size() != value.size()) throw ShapeError("optimizer parameter slot changed size");
      for (std::size_t i = 0; i < value.size(); ++i) {
        const double g = grad[i] * grad_scale;
        m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
        v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        value[i] -= lr * (mhat / (std::sqrt(vhat) + config_.adam_epsilon));
      }
    }
    if (config_.weight_clip_bound) {
      const double b = *config_.weight_clip_bound;
      for (double& w : value) w = std::clamp(w, -b, b);
    }
  }
}

std::vector<ParamSlot> parameter_slots(MlpNetwork& net, const NetworkGrads& grads) {
  if (grads.size() != net.layers.size()) throw ShapeError("gradient list does not match network depth");
  std::vector<ParamSlot> slots;
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    if (grads[k].weights.shape() != net.layers[k].weights.shape() ||
        grads[k].bias.shape() != net.layers[k].bias.shape()) {
      throw ShapeError("gradient shapes do not match layer " + std::to_string(k));
    }
    slots.push_back({net.layers[k].weights.values(), grads[k].weights.values()});
    slots.push_back({net.layers[k].bias.values(), grads[k].bias.values()});
  }
  return slots;
}

void step(MlpNetwork& net, Optimizer& optimizer, const NetworkGrads& grads) {
  const auto slots = parameter_slots(net, grads);
  optimizer.step(slots);
}

Var mse_loss(Var prediction, Var target) {
  if (prediction.value().shape() != target.value().shape()) {
    throw ShapeError("mse_loss: prediction " + shape_string(prediction.value().shape()) + " vs target " +
                     shape_string(target.value().shape()));
  }
  return ops::mean(ops::square(ops::sub(prediction, target)));
}

double mse(const Tensor& prediction, const Tensor& target) {
  if (prediction.shape() != target.shape()) throw ShapeError("mse: shape mismatch");
  if (prediction.size() == 0) throw ShapeError("mse of empty tensors");
  double acc = 0.0;
  for (std::size_t i = 0; i < prediction.size(); ++i) {
    const double r = prediction[i] - target[i];
    acc += r * r;
  }
  return acc / static_cast<double>(prediction.size());
}

}  // namespace plasticity
