#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "plasticity/mlp.hpp"
#include "plasticity/tensor.hpp"

namespace plasticity {

/// Denominators below this are treated as a fully silent layer.
inline constexpr double kDegenerateDenominator = 1e-12;

/// Normalised mean absolute activation per neuron of one layer.
///
/// scores[i] = mean_batch|h_i| / mean_k(mean_batch|h_k|). When the layer mean
/// is below kDegenerateDenominator every score is 0 and `degenerate` is set.
struct DormancyReport {
  std::size_t layer_index = 0;
  std::vector<double> scores;
  std::vector<bool> dormant_mask;
  double dormant_fraction = 0.0;
  std::size_t batch_size = 0;
  double tau_d = 0.0;
  bool degenerate = false;
};

struct GradientIntensityReport {
  std::size_t layer_index = 0;
  std::vector<double> magi;
  std::vector<bool> zero_grad_mask;
  double zero_grad_fraction = 0.0;
  double tau_g = 0.0;
};

struct OverlapReport {
  std::size_t set_a_size = 0;
  std::size_t set_b_size = 0;
  std::size_t intersection_size = 0;
  double coefficient = 0.0;
  /// Set when either input is empty and the coefficient comes from convention.
  bool degenerate = false;
};

struct MomentStats {
  double mean = 0.0;
  double std = 0.0;
  double l2_norm = 0.0;
  double max_abs = 0.0;
};

struct WeightStats {
  std::size_t layer_index = 0;
  MomentStats weights;
  MomentStats bias;
};

struct RankStats {
  std::size_t layer_index = 0;
  std::vector<double> singular_values;
  std::size_t threshold_rank = 0;
  double effective_rank = 0.0;
  double delta = 0.0;
};

/// Which layer output the MAGI target sums.
enum class MagiTarget { kPostActivation, kPreActivation };

using IndexSet = std::vector<std::size_t>;

DormancyReport dormancy_index(const Tensor& activations, double tau_d, std::size_t layer_index = 0);

/// Mean absolute gradient of S = sum of the layer's outputs over the batch
/// with respect to each neuron's incoming weights.
GradientIntensityReport magi(const MlpNetwork& net, const Tensor& batch, std::size_t layer_index, double tau_g,
                             MagiTarget target = MagiTarget::kPostActivation);

/// |A n B| / min(|A|, |B|); both empty -> 1, one empty -> 0 (flagged degenerate).
OverlapReport overlap(std::span<const std::size_t> a, std::span<const std::size_t> b);
IndexSet mask_to_set(const std::vector<bool>& mask);

MomentStats moment_stats(std::span<const double> values);
std::vector<WeightStats> weight_stats(const MlpNetwork& net);

/// Singular values in descending order (one-sided Jacobi).
std::vector<double> singular_values(const Tensor& m);
RankStats rank_stats(const Tensor& features, double delta, std::size_t layer_index = 0);

/// Agreement between the dormant set and the zero-gradient set of one layer.
struct EquivalenceReport {
  std::size_t layer_index = 0;
  std::vector<bool> dormant_mask;
  std::vector<bool> zero_grad_mask;
  /// Neuron has at least one exactly-zero activation on the batch.
  std::vector<bool> has_zero_activation;
  /// Every preactivation of the neuron on the batch is < 0.
  std::vector<bool> strictly_negative;
  OverlapReport overlap;
  /// Symmetric difference of {dormant} and {zero gradient with a zero activation}.
  IndexSet violations;
  /// Strictly-negative neurons missing from either set.
  IndexSet strict_violations;
  std::size_t dormant_count = 0;
  std::size_t strictly_negative_count = 0;
  bool degenerate = false;
};

EquivalenceReport equivalence_check(const MlpNetwork& net, const Tensor& batch, std::size_t layer_index,
                                    double tau_d, double tau_g);

/// Pearson correlation; NaN when either series has zero variance.
double pearson_correlation(std::span<const double> x, std::span<const double> y);

}  // namespace plasticity
