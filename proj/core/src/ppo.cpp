#include "plasticity/ppo.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>

#include "plasticity/errors.hpp"
#include "plasticity/seeding.hpp"

namespace plasticity {

EnvStep env_step(const ToyEnvState& state, std::span<const double> action, const ToyEnvConfig& config) {
  if (action.size() != kActionDim) throw ShapeError("toy env expects a 2-D action");
  EnvStep out;
  out.next = state;
  double cost = 0.0;
  double dist2 = 0.0;
  for (std::size_t d = 0; d < 2; ++d) {
    const double a = std::clamp(action[d], -1.0, 1.0);
    cost += a * a;
    out.next.velocity[d] += a * config.dt;
    out.next.position[d] = std::clamp(out.next.position[d] + out.next.velocity[d] * config.dt, -1.0, 1.0);
    const double diff = out.next.position[d] - out.next.target[d];
    dist2 += diff * diff;
  }
  out.next.step_count = state.step_count + 1;
  out.reward = -std::sqrt(dist2) - config.action_cost * cost;
  out.done = out.next.step_count >= config.horizon;
  return out;
}

ToyEnvState env_reset(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  ToyEnvState s;
  s.position = {u(rng), u(rng)};
  s.target = {u(rng), u(rng)};
  return s;
}

std::array<double, kObservationDim> observe(const ToyEnvState& s) {
  return {s.position[0], s.position[1], s.velocity[0], s.velocity[1], s.target[0], s.target[1]};
}

GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values,
                      std::span<const std::uint8_t> dones, double bootstrap_value, double gamma, double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n) throw ShapeError("compute_gae: rewards, values and dones differ in length");
  GaeResult r;
  r.advantages.assign(n, 0.0);
  r.returns.assign(n, 0.0);
  double next_adv = 0.0;
  double next_value = bootstrap_value;
  for (std::size_t i = n; i-- > 0;) {
    const double live = dones[i] ? 0.0 : 1.0;
    const double delta = rewards[i] + gamma * next_value * live - values[i];
    next_adv = delta + gamma * lambda * live * next_adv;
    r.advantages[i] = next_adv;
    r.returns[i] = next_adv + values[i];
    next_value = values[i];
  }
  return r;
}

double clipped_surrogate_term(double ratio, double advantage, double clip_coef) {
  const double clipped = std::clamp(ratio, 1.0 - clip_coef, 1.0 + clip_coef);
  return std::min(ratio * advantage, clipped * advantage);
}

std::vector<double> normalize_advantages(std::span<const double> adv) {
  std::vector<double> out(adv.begin(), adv.end());
  if (adv.empty()) return out;
  const double n = static_cast<double>(adv.size());
  const double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / n;
  double var = 0.0;
  for (double a : adv) var += (a - mean) * (a - mean);
  const double sd = adv.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
  for (double& a : out) a = (a - mean) / (sd + 1e-8);
  return out;
}

void PpoConfig::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in (0, 1]");
  if (!(gae_lambda > 0.0 && gae_lambda <= 1.0)) throw ConfigError("gae_lambda must lie in (0, 1]");
  if (!(clip_coef > 0.0)) throw ConfigError("clip_coef must be positive");
  if (!(value_coef >= 0.0)) throw ConfigError("value_coef must be non-negative");
  if (minibatches == 0 || update_epochs == 0) throw ConfigError("minibatches and update_epochs must be positive");
  if (rollout_length == 0 || rollout_length % minibatches != 0) {
    throw ConfigError("rollout_length must be a positive multiple of minibatches");
  }
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (total_steps < static_cast<std::int64_t>(rollout_length)) throw ConfigError("total_steps shorter than one rollout");
  if (probe_size == 0 || probe_size > rollout_length) throw ConfigError("probe_size must lie in [1, rollout_length]");
  if (hidden.empty()) throw ConfigError("PPO networks need at least one hidden layer");
  if (env.horizon <= 0 || !(env.dt > 0.0)) throw ConfigError("invalid toy environment settings");
}

std::int64_t PpoConfig::iterations() const { return total_steps / static_cast<std::int64_t>(rollout_length); }

PpoAgent make_agent(const PpoConfig& config, std::uint64_t seed) {
  std::vector<std::size_t> pw{kObservationDim}, vw{kObservationDim};
  pw.insert(pw.end(), config.hidden.begin(), config.hidden.end());
  vw.insert(vw.end(), config.hidden.begin(), config.hidden.end());
  pw.push_back(kActionDim);
  vw.push_back(1);
  PpoAgent agent;
  agent.policy = init_network(pw, config.activation, derive_seed(seed, 1));
  agent.value = init_network(vw, config.activation, derive_seed(seed, 2));
  agent.log_std = Tensor({kActionDim});
  return agent;
}

Var gaussian_log_prob(Var mean, Var log_std, Var actions) {
  const double d = static_cast<double>(mean.value().cols());
  const Var z = ops::mul_row(ops::sub(actions, mean), ops::exp(ops::scale(log_std, -1.0)));
  const Var per_dim = ops::add_row(ops::scale(ops::square(z), -0.5), ops::scale(log_std, -1.0));
  return ops::add_scalar(ops::row_sum(per_dim), -0.5 * d * std::log(2.0 * std::numbers::pi));
}

void RolloutBuffer::validate() const {
  const std::size_t n = size();
  if (observations.rows() != n || actions.rows() != n || log_probs.size() != n || values.size() != n ||
      dones.size() != n) {
    throw ShapeError("rollout buffer arrays disagree in length");
  }
  if (advantages.size() != n || returns.size() != n) throw ConfigError("rollout advantages not computed");
}

Optimizer make_ppo_optimizer(const PpoConfig& config) {
  OptimizerConfig oc;
  oc.kind = OptimizerKind::kAdam;
  oc.learning_rate = config.learning_rate;
  oc.weight_decay = config.weight_decay;
  oc.grad_clip_norm = config.grad_clip_norm;
  oc.adam_epsilon = config.adam_epsilon;
  return Optimizer(oc);
}

namespace {

Tensor gather(std::span<const double> v, std::span<const std::size_t> idx) {
  Tensor out({idx.size(), 1});
  for (std::size_t k = 0; k < idx.size(); ++k) out[k] = v[idx[k]];
  return out;
}

}  // namespace

UpdateStats ppo_update(PpoAgent& agent, Optimizer& optimizer, const RolloutBuffer& buffer, const PpoConfig& config,
                       double learning_rate, std::mt19937_64& rng) {
  buffer.validate();
  const std::size_t n = buffer.size();
  const std::size_t mb = n / config.minibatches;
  if (mb == 0 || n % config.minibatches != 0) throw ConfigError("rollout size not divisible into minibatches");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  UpdateStats stats;
  std::size_t updates = 0, clipped = 0, samples = 0;
  for (std::size_t epoch = 0; epoch < config.update_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n; start += mb) {
      const std::span<const std::size_t> idx(order.data() + start, mb);
      const Tensor obs = gather_rows(buffer.observations, idx);
      Tensor adv = gather(buffer.advantages, idx);
      if (config.normalize_advantages) {
        const auto norm = normalize_advantages(adv.values());
        std::copy(norm.begin(), norm.end(), adv.values().begin());
      }

      GradTape tape;
      const TapedForward pf = forward_on_tape(agent.policy, tape, obs);
      const TapedForward vf = forward_on_tape(agent.value, tape, obs);
      const Var log_std = tape.leaf(agent.log_std, true);
      const Var actions = tape.constant(gather_rows(buffer.actions, idx));
      const Var old_logp = tape.constant(gather(buffer.log_probs, idx));
      const Var adv_v = tape.constant(adv);
      const Var ret_v = tape.constant(gather(buffer.returns, idx));

      const Var logp = gaussian_log_prob(pf.output(), log_std, actions);
      const Var ratio = ops::exp(ops::sub(logp, old_logp));
      const Var surr = ops::minimum(ops::mul(ratio, adv_v),
                                    ops::mul(ops::clamp(ratio, 1.0 - config.clip_coef, 1.0 + config.clip_coef), adv_v));
      const Var policy_loss = ops::scale(ops::mean(surr), -1.0);
      const Var value_loss = mse_loss(vf.output(), ret_v);
      const Var total = ops::add(policy_loss, ops::scale(value_loss, config.value_coef));
      tape.backward(total);

      for (double r : ratio.value().values()) clipped += std::abs(r - 1.0) > config.clip_coef;
      samples += mb;
      stats.policy_loss += policy_loss.value().item();
      stats.value_loss += value_loss.value().item();
      stats.total_loss += total.value().item();
      ++updates;

      const NetworkGrads pg = collect_grads(agent.policy, tape, pf);
      const NetworkGrads vg = collect_grads(agent.value, tape, vf);
      const Tensor& lsg = tape.grad(log_std);
      std::vector<ParamSlot> slots = parameter_slots(agent.policy, pg);
      const auto vslots = parameter_slots(agent.value, vg);
      slots.insert(slots.end(), vslots.begin(), vslots.end());
      slots.push_back({agent.log_std.values(), lsg.values()});
      optimizer.step(slots, learning_rate);
    }
  }
  stats.policy_loss /= static_cast<double>(updates);
  stats.value_loss /= static_cast<double>(updates);
  stats.total_loss /= static_cast<double>(updates);
  stats.clip_fraction = static_cast<double>(clipped) / static_cast<double>(samples);
  return stats;
}

namespace {

struct StepOutput {
  Tensor action;
  double log_prob = 0.0;
  double value = 0.0;
};

StepOutput act(const PpoAgent& agent, const Tensor& obs, std::mt19937_64& rng) {
  StepOutput out;
  GradTape tape;
  const TapedForward pf = forward_on_tape(agent.policy, tape, obs, GradRequest::none());
  const TapedForward vf = forward_on_tape(agent.value, tape, obs, GradRequest::none());
  std::normal_distribution<double> normal(0.0, 1.0);
  const Tensor& mean = pf.output().value();
  out.action = Tensor({1, kActionDim});
  for (std::size_t d = 0; d < kActionDim; ++d) out.action[d] = mean[d] + std::exp(agent.log_std[d]) * normal(rng);
  const Var lp = gaussian_log_prob(pf.output(), tape.constant(agent.log_std), tape.constant(out.action));
  out.log_prob = lp.value()[0];
  out.value = vf.output().value()[0];
  return out;
}

std::vector<std::size_t> snapshot_both(TrainingTrace& trace, const PpoAgent& agent, const Tensor& probe,
                                       const MetricSettings& metrics, std::int64_t step) {
  auto ids = trace.add_snapshots(snapshot_network(agent.policy, probe, metrics, "policy", step));
  const auto vids = trace.add_snapshots(snapshot_network(agent.value, probe, metrics, "value", step));
  ids.insert(ids.end(), vids.begin(), vids.end());
  return ids;
}

double state_value(const PpoAgent& agent, const ToyEnvState& s) {
  const auto o = observe(s);
  const Tensor obs({1, kObservationDim}, std::vector<double>(o.begin(), o.end()));
  return forward(agent.value, obs).output()[0];
}

}  // namespace

PpoResult ppo_train(const PpoConfig& config, std::uint64_t seed, const std::vector<SnapshotHook>& hooks) {
  config.validate();
  const auto started = std::chrono::steady_clock::now();
  PpoResult result;
  result.agent = make_agent(config, seed);
  result.trace.experiment_id = "ppo-seed" + std::to_string(seed);
  PpoAgent& agent = result.agent;
  Optimizer optimizer = make_ppo_optimizer(config);

  std::mt19937_64 env_rng(derive_seed(seed, 3));
  std::mt19937_64 action_rng(derive_seed(seed, 4));
  std::mt19937_64 shuffle_rng(derive_seed(seed, 5));

  const std::size_t T = config.rollout_length;
  const std::int64_t iterations = config.iterations();
  ToyEnvState state = env_reset(env_rng);
  double episode_return = 0.0;
  std::int64_t global_step = 0;

  for (std::int64_t it = 0; it < iterations; ++it) {
    RolloutBuffer buf;
    buf.observations = Tensor({T, kObservationDim});
    buf.actions = Tensor({T, kActionDim});
    buf.log_probs.resize(T);
    buf.rewards.resize(T);
    buf.values.resize(T);
    buf.dones.resize(T);
    std::vector<double> finished;
    for (std::size_t t = 0; t < T; ++t) {
      const auto o = observe(state);
      std::copy(o.begin(), o.end(), buf.observations.row(t).begin());
      const Tensor obs({1, kObservationDim}, std::vector<double>(o.begin(), o.end()));
      const StepOutput s = act(agent, obs, action_rng);
      std::copy(s.action.values().begin(), s.action.values().end(), buf.actions.row(t).begin());
      buf.log_probs[t] = s.log_prob;
      buf.values[t] = s.value;
      const EnvStep e = env_step(state, s.action.values(), config.env);
      buf.rewards[t] = e.reward;
      buf.dones[t] = e.done ? 1 : 0;
      episode_return += e.reward;
      if (e.done) {
        finished.push_back(episode_return);
        episode_return = 0.0;
        state = env_reset(env_rng);
      } else {
        state = e.next;
      }
    }
    global_step += static_cast<std::int64_t>(T);
    if (it == 0) {
      const std::size_t stride = T / config.probe_size;
      std::vector<std::size_t> idx(config.probe_size);
      for (std::size_t k = 0; k < config.probe_size; ++k) idx[k] = k * stride;
      result.probe = gather_rows(buf.observations, idx);
    }

    const double bootstrap = buf.dones[T - 1] ? 0.0 : state_value(agent, state);
    GaeResult gae = compute_gae(buf.rewards, buf.values, buf.dones, bootstrap, config.gamma, config.gae_lambda);
    buf.advantages = std::move(gae.advantages);
    buf.returns = std::move(gae.returns);

    const double frac = config.anneal_lr ? 1.0 - static_cast<double>(it) / static_cast<double>(iterations) : 1.0;
    const UpdateStats stats = ppo_update(agent, optimizer, buf, config, frac * config.learning_rate, shuffle_rng);

    TraceRecord rec;
    rec.step = global_step;
    rec.train_loss = stats.total_loss;
    if (!finished.empty()) {
      rec.episodic_return = std::accumulate(finished.begin(), finished.end(), 0.0) / static_cast<double>(finished.size());
    }
    rec.snapshot_ids = snapshot_both(result.trace, agent, result.probe, config.metrics, global_step);
    rec.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    for (const auto& hook : hooks) hook(agent.value, global_step);
    result.trace.records.push_back(std::move(rec));
    result.episode_returns.insert(result.episode_returns.end(), finished.begin(), finished.end());
  }
  return result;
}

}  // namespace plasticity
