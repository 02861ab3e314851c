#include "plasticity/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <random>

#include "plasticity/errors.hpp"
#include "plasticity/optim.hpp"
#include "plasticity/seeding.hpp"

namespace plasticity {

double evaluate_loss(const MlpNetwork& net, const LossFn& loss, const Tensor& batch) {
  GradTape tape;
  const TapedForward fwd = forward_on_tape(net, tape, batch, GradRequest::none());
  return loss(tape, fwd).value().item();
}

namespace {

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof(double)) == 0; }

}  // namespace

GradCheckResult finite_difference_check(const MlpNetwork& net, const LossFn& loss, const Tensor& batch,
                                        double epsilon) {
  if (!(epsilon > 0.0)) throw ConfigError("finite_difference_check: epsilon must be positive");

  GradTape tape;
  const TapedForward fwd = forward_on_tape(net, tape, batch, GradRequest::everything());
  const Var out = loss(tape, fwd);
  const double taped_value = out.value().item();
  tape.backward(out);
  const NetworkGrads analytic = collect_grads(net, tape, fwd);

  const double first = evaluate_loss(net, loss, batch);
  const double second = evaluate_loss(net, loss, batch);
  if (!same_bits(first, second) || !same_bits(first, taped_value)) {
    throw NonDeterministicError("loss function returned different values for identical inputs");
  }

  GradCheckResult result;
  MlpNetwork probe = net;
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    for (int which = 0; which < 2; ++which) {
      const bool is_bias = which == 1;
      Tensor& param = is_bias ? probe.layers[k].bias : probe.layers[k].weights;
      const Tensor& g = is_bias ? analytic[k].bias : analytic[k].weights;
      for (std::size_t i = 0; i < param.size(); ++i) {
        const double saved = param[i];
        param[i] = saved + epsilon;
        const double up = evaluate_loss(probe, loss, batch);
        param[i] = saved - epsilon;
        const double down = evaluate_loss(probe, loss, batch);
        param[i] = saved;
        const double fd = (up - down) / (2.0 * epsilon);
        const double err = std::abs(g[i] - fd) / std::max(1.0, std::abs(fd));
        ++result.parameters_checked;
        if (err > result.max_relative_error) {
          result.max_relative_error = err;
          result.worst_layer = k;
          result.worst_index = i;
          result.worst_is_bias = is_bias;
        }
      }
    }
  }
  return result;
}

GradientSuiteResult gradient_check_suite(std::size_t nets, std::uint64_t seed, double epsilon, double kink_margin) {
  GradientSuiteResult out;
  std::uniform_int_distribution<std::size_t> small(1, 5);
  std::uniform_int_distribution<std::size_t> depth(1, 3);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uint64_t draw = 0;
  for (std::size_t i = 0; i < nets;) {
    std::mt19937_64 rng(derive_seed(seed, draw++));
    const bool relu = i % 2 == 1;
    const Activation act = relu ? Activation::kRelu : (i % 4 == 0 ? Activation::kTanh : Activation::kIdentity);
    std::vector<std::size_t> widths{small(rng)};
    const std::size_t d = depth(rng);
    for (std::size_t k = 0; k < d; ++k) widths.push_back(small(rng) + 1);
    widths.push_back(small(rng));
    MlpNetwork net = init_network(widths, act, rng());
    for (auto& layer : net.layers) {
      for (auto& b : layer.bias.values()) b = 0.5 * gauss(rng);
    }
    Tensor x({small(rng) + 3, widths.front()});
    for (auto& v : x.values()) v = gauss(rng);
    Tensor y({x.rows(), widths.back()});
    for (auto& v : y.values()) v = gauss(rng);

    if (relu) {
      const LayerOutputs outs = forward(net, x);
      bool near = false;
      for (std::size_t l = 0; l + 1 < net.depth() && !near; ++l) {
        for (double z : outs.preactivations[l].values()) near = near || std::abs(z) < kink_margin;
      }
      if (near) {
        ++out.skipped_near_kink;
        continue;
      }
    }
    const LossFn loss = [&y](GradTape& tape, const TapedForward& f) { return mse_loss(f.output(), tape.constant(y)); };
    const GradCheckResult r = finite_difference_check(net, loss, x, epsilon);
    out.parameters_checked += r.parameters_checked;
    if (relu) {
      ++out.relu_nets;
      out.relu_max_error = std::max(out.relu_max_error, r.max_relative_error);
    } else {
      ++out.smooth_nets;
      out.smooth_max_error = std::max(out.smooth_max_error, r.max_relative_error);
    }
    ++i;
  }
  return out;
}

}  // namespace plasticity
