#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "plasticity/autodiff.hpp"
#include "plasticity/tensor.hpp"

namespace plasticity {

/// One dense layer: h = activation(W x + b), W is n_out x n_in.
struct LayerSpec {
  std::size_t n_in = 0;
  std::size_t n_out = 0;
  Activation activation = Activation::kRelu;
  Tensor weights;
  Tensor bias;

  /// Throws ShapeError unless weights are (n_out, n_in) and bias is (n_out).
  void validate() const;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct MlpNetwork {
  std::vector<LayerSpec> layers;
  std::uint64_t seed = 0;

  std::size_t input_width() const;
  std::size_t output_width() const;
  std::size_t depth() const noexcept { return layers.size(); }
  std::size_t parameter_count() const noexcept;
  std::vector<std::size_t> widths() const;

  /// Checks every layer and the width chain between consecutive layers.
  void validate() const;

  friend bool operator==(const MlpNetwork&, const MlpNetwork&) = default;
};

/// Uniform fan-in initialisation, W ~ U[-1/sqrt(n_in), 1/sqrt(n_in)], zero bias.
///
/// `hidden` applies to every layer except the last, which uses `output`.
MlpNetwork init_network(std::span<const std::size_t> widths, Activation hidden, std::uint64_t seed,
                        Activation output = Activation::kIdentity);

/// Same architecture and bitwise-equal parameters (distinguishes -0.0 and NaN payloads).
bool bit_identical(const MlpNetwork& a, const MlpNetwork& b) noexcept;

/// Per-layer values of a forward pass.
struct LayerOutputs {
  std::vector<Tensor> preactivations;
  std::vector<Tensor> activations;

  const Tensor& output() const { return activations.back(); }
};

/// Which parameters a taped forward pass exposes as differentiable leaves.
struct GradRequest {
  bool all = true;
  /// When `all` is false, only this layer's weights and bias are leaves.
  std::optional<std::size_t> layer;

  static GradRequest everything() { return {}; }
  static GradRequest none() { return {false, std::nullopt}; }
  static GradRequest only(std::size_t l) { return {false, l}; }
};

struct TapedLayer {
  Var weights;
  Var bias;
  Var preactivation;
  Var activation;
};

struct TapedForward {
  Var input;
  std::vector<TapedLayer> layers;

  Var output() const { return layers.back().activation; }
};

/// Records the forward pass on `tape`, stopping after layer `stop_after`
/// (inclusive) when given.
TapedForward forward_on_tape(const MlpNetwork& net, GradTape& tape, const Tensor& batch,
                             GradRequest request = GradRequest::everything(),
                             std::optional<std::size_t> stop_after = std::nullopt);

/// Pure forward pass; batch is n_batch x n_in.
LayerOutputs forward(const MlpNetwork& net, const Tensor& batch);

/// Gradients shaped like the network's parameters.
struct LayerGrads {
  Tensor weights;
  Tensor bias;
};
using NetworkGrads = std::vector<LayerGrads>;

NetworkGrads zero_grads(const MlpNetwork& net);
/// Reads leaf gradients after backward(); layers without leaves yield zeros.
NetworkGrads collect_grads(const MlpNetwork& net, const GradTape& tape, const TapedForward& fwd);

/// Text checkpoint: header, seed, per-layer shape/activation and shortest
/// round-trip decimal values. Reading back reproduces the network bit-exactly.
void write_checkpoint(std::ostream& os, const MlpNetwork& net);
MlpNetwork read_checkpoint(std::istream& is);
void save_checkpoint(const std::string& path, const MlpNetwork& net);
MlpNetwork load_checkpoint(const std::string& path);

}  // namespace plasticity
