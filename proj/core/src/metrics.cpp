#include "plasticity/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "plasticity/errors.hpp"

namespace plasticity {

DormancyReport dormancy_index(const Tensor& activations, double tau_d, std::size_t layer_index) {
  if (activations.rank() != 2) throw ShapeError("dormancy_index expects a batch x neurons matrix");
  if (activations.rows() == 0) throw ShapeError("dormancy_index on an empty batch");
  if (!(tau_d >= 0.0)) throw ConfigError("tau_d must be non-negative");
  const std::size_t n = activations.rows(), h = activations.cols();

  std::vector<double> mean_abs(h, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    const auto row = activations.row(k);
    for (std::size_t i = 0; i < h; ++i) mean_abs[i] += std::abs(row[i]);
  }
  double layer_mean = 0.0;
  for (double& m : mean_abs) {
    m /= static_cast<double>(n);
    layer_mean += m;
  }
  layer_mean /= static_cast<double>(h);

  DormancyReport r;
  r.layer_index = layer_index;
  r.batch_size = n;
  r.tau_d = tau_d;
  r.scores.assign(h, 0.0);
  r.degenerate = !(layer_mean >= kDegenerateDenominator);
  if (!r.degenerate) {
    for (std::size_t i = 0; i < h; ++i) r.scores[i] = mean_abs[i] / layer_mean;
  }
  r.dormant_mask.resize(h);
  std::size_t dormant = 0;
  for (std::size_t i = 0; i < h; ++i) {
    r.dormant_mask[i] = r.scores[i] <= tau_d;
    dormant += r.dormant_mask[i];
  }
  r.dormant_fraction = static_cast<double>(dormant) / static_cast<double>(h);
  return r;
}

GradientIntensityReport magi(const MlpNetwork& net, const Tensor& batch, std::size_t layer_index, double tau_g,
                             MagiTarget target) {
  if (layer_index >= net.layers.size()) {
    throw ShapeError("magi: layer index " + std::to_string(layer_index) + " out of range");
  }
  if (batch.rank() != 2 || batch.rows() == 0) throw ShapeError("magi on an empty batch");
  GradTape tape;
  const TapedForward fwd = forward_on_tape(net, tape, batch, GradRequest::only(layer_index), layer_index);
  const TapedLayer& tl = fwd.layers[layer_index];
  const Var s = ops::sum(target == MagiTarget::kPostActivation ? tl.activation : tl.preactivation);
  tape.backward(s);
  const Tensor& gw = tape.grad(tl.weights);

  const std::size_t h = gw.rows(), n_in = gw.cols();
  GradientIntensityReport r;
  r.layer_index = layer_index;
  r.tau_g = tau_g;
  r.magi.assign(h, 0.0);
  r.zero_grad_mask.resize(h);
  std::size_t zeros = 0;
  for (std::size_t i = 0; i < h; ++i) {
    double acc = 0.0;
    for (double g : gw.row(i)) acc += std::abs(g);
    r.magi[i] = acc / static_cast<double>(n_in);
    r.zero_grad_mask[i] = r.magi[i] <= tau_g;
    zeros += r.zero_grad_mask[i];
  }
  r.zero_grad_fraction = static_cast<double>(zeros) / static_cast<double>(h);
  return r;
}

IndexSet mask_to_set(const std::vector<bool>& mask) {
  IndexSet s;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) s.push_back(i);
  return s;
}

OverlapReport overlap(std::span<const std::size_t> a, std::span<const std::size_t> b) {
  IndexSet sa(a.begin(), a.end()), sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  sa.erase(std::unique(sa.begin(), sa.end()), sa.end());
  std::sort(sb.begin(), sb.end());
  sb.erase(std::unique(sb.begin(), sb.end()), sb.end());
  IndexSet common;
  std::set_intersection(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(common));

  OverlapReport r;
  r.set_a_size = sa.size();
  r.set_b_size = sb.size();
  r.intersection_size = common.size();
  if (sa.empty() || sb.empty()) {
    r.degenerate = true;
    r.coefficient = (sa.empty() && sb.empty()) ? 1.0 : 0.0;
  } else {
    r.coefficient = static_cast<double>(common.size()) / static_cast<double>(std::min(sa.size(), sb.size()));
  }
  return r;
}

MomentStats moment_stats(std::span<const double> values) {
  MomentStats s;
  if (values.empty()) return s;
  double sum = 0.0, sq = 0.0;
  for (double v : values) {
    sum += v;
    sq += v * v;
    s.max_abs = std::max(s.max_abs, std::abs(v));
  }
  const double n = static_cast<double>(values.size());
  s.mean = sum / n;
  double var = 0.0;
  for (double v : values) var += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(var / n);
  s.l2_norm = std::sqrt(sq);
  return s;
}

std::vector<WeightStats> weight_stats(const MlpNetwork& net) {
  std::vector<WeightStats> out;
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    out.push_back({k, moment_stats(net.layers[k].weights.values()), moment_stats(net.layers[k].bias.values())});
  }
  return out;
}

std::vector<double> singular_values(const Tensor& m) {
  if (m.rank() != 2) throw ShapeError("singular_values expects a matrix");
  require_finite(m, "singular_values");
  // Work on columns of an (rows >= cols) matrix; transpose if needed.
  const bool transpose = m.rows() < m.cols();
  const std::size_t rows = transpose ? m.cols() : m.rows();
  const std::size_t cols = transpose ? m.rows() : m.cols();
  std::vector<std::vector<double>> col(cols, std::vector<double>(rows));
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (transpose)
        col[r][c] = m.at(r, c);
      else
        col[c][r] = m.at(r, c);
    }

  constexpr double kTol = 1e-15;
  constexpr int kMaxSweeps = 100;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < cols; ++p) {
      for (std::size_t q = p + 1; q < cols; ++q) {
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t i = 0; i < rows; ++i) {
          alpha += col[p][i] * col[p][i];
          beta += col[q][i] * col[q][i];
          gamma += col[p][i] * col[q][i];
        }
        if (gamma == 0.0 || std::abs(gamma) <= kTol * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < rows; ++i) {
          const double xp = col[p][i], xq = col[q][i];
          col[p][i] = c * xp - s * xq;
          col[q][i] = s * xp + c * xq;
        }
      }
    }
    if (!rotated) break;
  }
  std::vector<double> sv(cols);
  for (std::size_t c = 0; c < cols; ++c) {
    double acc = 0.0;
    for (double v : col[c]) acc += v * v;
    sv[c] = std::sqrt(acc);
  }
  std::sort(sv.begin(), sv.end(), std::greater<>());
  return sv;
}

RankStats rank_stats(const Tensor& features, double delta, std::size_t layer_index) {
  if (features.rank() != 2 || features.rows() == 0) throw ShapeError("rank_stats on an empty matrix");
  if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("rank delta must lie in (0, 1)");
  RankStats r;
  r.layer_index = layer_index;
  r.delta = delta;
  r.singular_values = singular_values(features);
  const double smax = r.singular_values.empty() ? 0.0 : r.singular_values.front();
  if (smax <= 0.0) return r;
  double total = 0.0;
  for (double s : r.singular_values) {
    if (s > delta * smax) ++r.threshold_rank;
    total += s;
  }
  double entropy = 0.0;
  for (double s : r.singular_values) {
    const double p = s / total;
    if (p > 0.0) entropy -= p * std::log(p);
  }
  r.effective_rank = std::exp(entropy);
  return r;
}

EquivalenceReport equivalence_check(const MlpNetwork& net, const Tensor& batch, std::size_t layer_index,
                                    double tau_d, double tau_g) {
  if (layer_index >= net.layers.size()) {
    throw ShapeError("equivalence_check: layer index " + std::to_string(layer_index) + " out of range");
  }
  const LayerOutputs outs = forward(net, batch);
  const Tensor& act = outs.activations[layer_index];
  const Tensor& pre = outs.preactivations[layer_index];
  const DormancyReport dorm = dormancy_index(act, tau_d, layer_index);
  const GradientIntensityReport grad = magi(net, batch, layer_index, tau_g);

  const std::size_t h = act.cols();
  EquivalenceReport r;
  r.layer_index = layer_index;
  r.dormant_mask = dorm.dormant_mask;
  r.zero_grad_mask = grad.zero_grad_mask;
  r.degenerate = dorm.degenerate;
  r.has_zero_activation.assign(h, false);
  r.strictly_negative.assign(h, true);
  for (std::size_t k = 0; k < act.rows(); ++k) {
    for (std::size_t i = 0; i < h; ++i) {
      if (act.at(k, i) == 0.0) r.has_zero_activation[i] = true;
      if (!(pre.at(k, i) < 0.0)) r.strictly_negative[i] = false;
    }
  }
  r.overlap = overlap(mask_to_set(r.dormant_mask), mask_to_set(r.zero_grad_mask));
  for (std::size_t i = 0; i < h; ++i) {
    const bool zero_grad_state = r.zero_grad_mask[i] && r.has_zero_activation[i];
    if (r.dormant_mask[i] != zero_grad_state) r.violations.push_back(i);
    if (r.strictly_negative[i]) {
      ++r.strictly_negative_count;
      if (!r.dormant_mask[i] || !r.zero_grad_mask[i]) r.strict_violations.push_back(i);
    }
    r.dormant_count += r.dormant_mask[i];
  }
  return r;
}

double pearson_correlation(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ShapeError("pearson_correlation: length mismatch");
  const std::size_t n = x.size();
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace plasticity
