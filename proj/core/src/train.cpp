#include "plasticity/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "plasticity/errors.hpp"

namespace plasticity {

std::vector<LayerSnapshot> snapshot_network(const MlpNetwork& net, const Tensor& probe,
                                            const MetricSettings& settings, const std::string& network,
                                            std::int64_t step) {
  const LayerOutputs outs = forward(net, probe);
  const auto wstats = weight_stats(net);
  std::vector<LayerSnapshot> snaps;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    LayerSnapshot s;
    s.step = step;
    s.network = network;
    s.layer = l;
    s.dormancy = dormancy_index(outs.activations[l], settings.tau_d, l);
    s.gradient = magi(net, probe, l, settings.tau_g, settings.magi_target);
    s.weights = wstats[l];
    s.rank = rank_stats(outs.activations[l], settings.rank_delta, l);
    snaps.push_back(std::move(s));
  }
  return snaps;
}

std::vector<std::size_t> TrainingTrace::add_snapshots(std::vector<LayerSnapshot> snaps) {
  std::vector<std::size_t> ids;
  for (auto& s : snaps) {
    s.id = snapshots.size();
    ids.push_back(s.id);
    snapshots.push_back(std::move(s));
  }
  return ids;
}

void TrainingTrace::append(const TrainingTrace& other) {
  const std::size_t base = snapshots.size();
  for (const auto& s : other.snapshots) {
    snapshots.push_back(s);
    snapshots.back().id = s.id + base;
  }
  for (const auto& r : other.records) {
    records.push_back(r);
    for (auto& id : records.back().snapshot_ids) id += base;
  }
  if (other.aborted) {
    aborted = true;
    diagnostic = other.diagnostic;
  }
}

const LayerSnapshot& TrainingTrace::snapshot(std::size_t id) const {
  if (id >= snapshots.size()) throw ConfigError("trace references missing snapshot " + std::to_string(id));
  return snapshots[id];
}

std::vector<const LayerSnapshot*> TrainingTrace::series(const std::string& network, std::size_t layer) const {
  std::vector<const LayerSnapshot*> out;
  for (const auto& s : snapshots)
    if (s.network == network && s.layer == layer) out.push_back(&s);
  std::stable_sort(out.begin(), out.end(), [](auto* a, auto* b) { return a->step < b->step; });
  return out;
}

void TrainingTrace::validate() const {
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (i && records[i].step <= records[i - 1].step) {
      throw ConfigError("trace steps are not strictly increasing at record " + std::to_string(i));
    }
    for (auto id : records[i].snapshot_ids) snapshot(id);
  }
}

double evaluate_mse(const MlpNetwork& net, const Dataset& data) {
  return mse(forward(net, data.inputs).output(), data.targets);
}

TrainingTrace train_supervised(MlpNetwork& net, const Dataset& train, const Dataset* test, Optimizer& optimizer,
                               const TrainConfig& config, const Tensor& probe) {
  if (train.size() == 0) throw ConfigError("train_supervised on an empty dataset");
  if (config.epochs < 0) throw ConfigError("epochs must be non-negative");
  if (config.metric_every <= 0) throw ConfigError("metric_every must be positive");
  net.validate();

  const auto started = std::chrono::steady_clock::now();
  TrainingTrace trace;
  auto record = [&](std::int64_t step, double train_loss) {
    TraceRecord r;
    r.step = step;
    r.task_id = config.task_id;
    r.train_loss = train_loss;
    if (test) r.test_loss = evaluate_mse(net, *test);
    r.snapshot_ids = trace.add_snapshots(snapshot_network(net, probe, config.metrics, config.network_name, step));
    for (const auto& hook : config.hooks) hook(net, step);
    r.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    trace.records.push_back(std::move(r));
  };

  const std::size_t n = train.size();
  const std::size_t bs = (config.batch_size == 0 || config.batch_size >= n) ? n : config.batch_size;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(config.shuffle_seed);

  std::int64_t global_step = config.step_offset;
  if (!config.skip_initial_snapshot) record(global_step, evaluate_mse(net, train));
  std::int64_t last_recorded = global_step;

  bool stopped = false;
  double best = std::numeric_limits<double>::infinity();
  std::int64_t best_step = global_step;
  auto converged = [&]() {
    if (config.patience_steps <= 0 || trace.records.empty()) return false;
    const auto& r = trace.records.back();
    const double monitored = r.test_loss ? *r.test_loss : r.train_loss;
    if (monitored < best * (1.0 - config.min_improvement)) {
      best = monitored;
      best_step = r.step;
    } else if (r.step - best_step >= config.patience_steps) {
      stopped = true;
      trace.diagnostic = "converged at step " + std::to_string(r.step) + ": no relative improvement of " +
                         std::to_string(config.min_improvement) + " since step " + std::to_string(best_step);
    }
    return stopped;
  };
  if (!trace.records.empty()) converged();

  try {
    for (std::int64_t epoch = 0; epoch < config.epochs; ++epoch) {
      if (bs < n) std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t start = 0; start < n; start += bs) {
        const std::size_t count = std::min(bs, n - start);
        GradTape tape;
        Var target;
        TapedForward fwd;
        if (count == n && bs == n) {
          fwd = forward_on_tape(net, tape, train.inputs);
          target = tape.constant(train.targets);
        } else {
          const std::span<const std::size_t> idx(order.data() + start, count);
          fwd = forward_on_tape(net, tape, gather_rows(train.inputs, idx));
          target = tape.constant(gather_rows(train.targets, idx));
        }
        const Var loss = mse_loss(fwd.output(), target);
        const double loss_value = loss.value().item();
        if (!(loss_value <= config.divergence_bound)) {
          throw DivergenceError("training loss " + std::to_string(loss_value) + " exceeded bound at step " +
                                std::to_string(global_step));
        }
        tape.backward(loss);
        step(net, optimizer, collect_grads(net, tape, fwd));
        ++global_step;
        if ((global_step - config.step_offset) % config.metric_every == 0) {
          record(global_step, evaluate_mse(net, train));
          last_recorded = global_step;
          if (converged()) break;
        }
      }
      if (stopped) break;
    }
    if (global_step != last_recorded) record(global_step, evaluate_mse(net, train));
  } catch (const DivergenceError& e) {
    trace.aborted = true;
    trace.diagnostic = e.what();
  } catch (const NonFiniteError& e) {
    trace.aborted = true;
    trace.diagnostic = std::string(e.what()) + " at step " + std::to_string(global_step);
  }
  return trace;
}

std::vector<OverlapReport> compute_overlap_trace(const TrainingTrace& trace, SetKind kind,
                                                 const std::string& network, std::size_t layer) {
  const auto series = trace.series(network, layer);
  if (series.size() < 2) {
    throw ConfigError("overlap trace needs at least two snapshots of " + network + " layer " +
                      std::to_string(layer));
  }
  std::vector<OverlapReport> out;
  auto set_of = [kind](const LayerSnapshot* s) {
    return mask_to_set(kind == SetKind::kDormant ? s->dormancy.dormant_mask : s->gradient.zero_grad_mask);
  };
  for (std::size_t i = 1; i < series.size(); ++i) {
    const auto prev = set_of(series[i - 1]);
    const auto cur = set_of(series[i]);
    out.push_back(overlap(cur, prev));
  }
  return out;
}

}  // namespace plasticity
