#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "plasticity/mlp.hpp"
#include "plasticity/optim.hpp"
#include "plasticity/train.hpp"

namespace plasticity {

inline constexpr std::size_t kObservationDim = 6;
inline constexpr std::size_t kActionDim = 2;

using Vec2 = std::array<double, 2>;

/// 2-D point mass that must reach a target inside the unit box.
struct ToyEnvConfig {
  double dt = 0.05;
  int horizon = 200;
  double action_cost = 0.01;

  friend bool operator==(const ToyEnvConfig&, const ToyEnvConfig&) = default;
};

struct ToyEnvState {
  Vec2 position{};
  Vec2 velocity{};
  Vec2 target{};
  int step_count = 0;

  friend bool operator==(const ToyEnvState&, const ToyEnvState&) = default;
};

struct EnvStep {
  ToyEnvState next;
  double reward = 0.0;
  bool done = false;
};

/// Semi-implicit Euler: v += a dt, p += v dt, p clamped to [-1, 1]^2.
/// Reward is -|p - target| - action_cost |a|^2 at the new position; the action
/// is clamped to [-1, 1]^2 first.
EnvStep env_step(const ToyEnvState& state, std::span<const double> action, const ToyEnvConfig& config = {});
ToyEnvState env_reset(std::mt19937_64& rng);
/// position, velocity, target
std::array<double, kObservationDim> observe(const ToyEnvState& state);

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

/// Backward GAE recursion. dones[t] marks the transition at t as terminal (no
/// bootstrap through it); `bootstrap_value` is V of the state after the last
/// transition.
GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values,
                      std::span<const std::uint8_t> dones, double bootstrap_value, double gamma, double lambda);

/// min(r A, clip(r, 1 - eps, 1 + eps) A) for one sample.
double clipped_surrogate_term(double ratio, double advantage, double clip_coef);

/// Mean 0 / unit sample standard deviation (with a 1e-8 guard).
std::vector<double> normalize_advantages(std::span<const double> advantages);

struct PpoConfig {
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_coef = 0.2;
  double value_coef = 0.5;
  std::size_t minibatches = 32;
  std::size_t update_epochs = 10;
  double grad_clip_norm = 0.5;
  double learning_rate = 1e-4;
  bool anneal_lr = true;
  double weight_decay = 1e-4;
  double adam_epsilon = 1e-5;
  std::int64_t total_steps = 200'000;
  std::size_t rollout_length = 2048;
  std::vector<std::size_t> hidden = {64, 64};
  Activation activation = Activation::kRelu;
  std::size_t probe_size = 256;
  bool normalize_advantages = true;
  MetricSettings metrics;
  ToyEnvConfig env;

  void validate() const;
  std::int64_t iterations() const;

  friend bool operator==(const PpoConfig&, const PpoConfig&) = default;
};

struct RolloutBuffer {
  Tensor observations;  // T x 6
  Tensor actions;       // T x 2, unclamped samples
  std::vector<double> log_probs;
  std::vector<double> rewards;
  std::vector<double> values;
  std::vector<std::uint8_t> dones;
  std::vector<double> advantages;
  std::vector<double> returns;

  std::size_t size() const noexcept { return rewards.size(); }
  /// Throws unless every array has the rollout length and advantages are filled.
  void validate() const;
};

/// Gaussian policy (state-independent log-std) and value function.
struct PpoAgent {
  MlpNetwork policy;
  MlpNetwork value;
  Tensor log_std;  // {2}

  friend bool operator==(const PpoAgent&, const PpoAgent&) = default;
};

PpoAgent make_agent(const PpoConfig& config, std::uint64_t seed);

/// Row-wise Gaussian log density of `actions` [n x d] under N(mean, exp(log_std)^2).
Var gaussian_log_prob(Var mean, Var log_std, Var actions);

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double total_loss = 0.0;
  double clip_fraction = 0.0;
};

/// update_epochs x minibatches clipped-surrogate + value-MSE steps.
UpdateStats ppo_update(PpoAgent& agent, Optimizer& optimizer, const RolloutBuffer& buffer, const PpoConfig& config,
                       double learning_rate, std::mt19937_64& rng);

/// Optimizer matching the config (Adam, decoupled decay, global-norm clip).
Optimizer make_ppo_optimizer(const PpoConfig& config);

struct PpoResult {
  TrainingTrace trace;
  PpoAgent agent;
  std::vector<double> episode_returns;
  Tensor probe;
};

/// Alternates rollouts and updates; after every iteration snapshots the
/// policy ("policy") and value ("value") networks on a probe batch drawn from
/// the first rollout.
PpoResult ppo_train(const PpoConfig& config, std::uint64_t seed, const std::vector<SnapshotHook>& hooks = {});

}  // namespace plasticity
