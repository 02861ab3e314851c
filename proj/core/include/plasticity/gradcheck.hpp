#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>

#include "plasticity/autodiff.hpp"
#include "plasticity/mlp.hpp"

namespace plasticity {

/// Maps a taped forward pass to a scalar loss recorded on the same tape.
using LossFn = std::function<Var(GradTape&, const TapedForward&)>;

struct GradCheckResult {
  /// max over parameters of |g_ad - g_fd| / max(1, |g_fd|)
  double max_relative_error = 0.0;
  std::size_t parameters_checked = 0;
  std::size_t worst_layer = 0;
  std::size_t worst_index = 0;
  bool worst_is_bias = false;
};

/// Evaluates the loss without recording gradients.
double evaluate_loss(const MlpNetwork& net, const LossFn& loss, const Tensor& batch);

/// Compares reverse-mode gradients with central differences of step
/// `epsilon` on every weight and bias. Throws NonDeterministicError when two
/// evaluations at the same point disagree.
GradCheckResult finite_difference_check(const MlpNetwork& net, const LossFn& loss, const Tensor& batch,
                                        double epsilon);

struct GradientSuiteResult {
  std::size_t smooth_nets = 0;
  std::size_t relu_nets = 0;
  /// ReLU draws discarded because a preactivation sat within the kink margin.
  std::size_t skipped_near_kink = 0;
  double smooth_max_error = 0.0;
  double relu_max_error = 0.0;
  std::size_t parameters_checked = 0;

  bool passed(double smooth_tolerance = 1e-5, double relu_tolerance = 1e-4) const noexcept {
    return smooth_max_error <= smooth_tolerance && relu_max_error <= relu_tolerance;
  }
};

/// Gradient check on `nets` random small MLPs with an MSE loss: even draws use
/// tanh or identity hidden units, odd draws ReLU. ReLU nets whose batch puts any
/// preactivation within `kink_margin` of zero are redrawn.
GradientSuiteResult gradient_check_suite(std::size_t nets, std::uint64_t seed, double epsilon = 1e-6,
                                         double kink_margin = 1e-3);

}  // namespace plasticity
