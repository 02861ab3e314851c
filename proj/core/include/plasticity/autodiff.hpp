#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

#include "plasticity/tensor.hpp"

namespace plasticity {

class GradTape;

/// Handle to a value recorded on a GradTape. Cheap to copy; valid only while
/// the owning tape is alive.
class Var {
 public:
  Var() = default;

  GradTape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

  const Tensor& value() const;
  const Tensor& grad() const;

 private:
  friend class GradTape;
  Var(GradTape* tape, std::size_t id) : tape_(tape), id_(id) {}

  GradTape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Arguments handed to a node's local-gradient closure during backward.
class BackwardContext {
 public:
  const Tensor& output() const;
  const Tensor& output_grad() const;
  const Tensor& input(std::size_t k) const;
  /// Whether input `k` participates in differentiation.
  bool wants(std::size_t k) const;
  /// Gradient accumulator of input `k` (zero-initialised on first access).
  Tensor& input_grad(std::size_t k);

 private:
  friend class GradTape;
  BackwardContext(GradTape& tape, std::size_t node) : tape_(tape), node_(node) {}
  GradTape& tape_;
  std::size_t node_;
};

/// Reverse-mode gradient tape.
///
/// Nodes are appended in execution order, so the node vector is already a
/// topological order; backward walks it once in reverse. A tape is built for
/// one forward pass and can be differentiated exactly once.
class GradTape {
 public:
  using BackwardFn = std::function<void(BackwardContext&)>;

  GradTape() = default;
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  /// Records an input. Non-finite values are rejected.
  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  /// Appends the result of an operation. The backward closure is dropped when
  /// no input requires a gradient.
  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward, const char* op_name);

  const Tensor& value(Var v) const;
  const Tensor& grad(Var v) const;
  bool has_grad(Var v) const;
  bool requires_grad(Var v) const;

  /// Populates gradients of every requires-grad node with respect to `output`,
  /// which must be a one-element value recorded on this tape.
  void backward(Var output);

  bool consumed() const noexcept { return consumed_; }
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  friend class BackwardContext;

  struct Node {
    Tensor value;
    std::optional<Tensor> grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    bool is_leaf = false;
  };

  const Node& node(Var v) const;

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

enum class Activation { kRelu, kTanh, kIdentity };

const char* activation_name(Activation a) noexcept;
Activation parse_activation(const std::string& name);

namespace ops {

/// Y = X * W^T + b for X [n x in], W [out x in], b [out].
Var linear(Var x, Var w, Var b);
/// Y = X * W^T (no bias).
Var matmul_nt(Var x, Var w);
/// ReLU with derivative 0 at the kink.
Var relu(Var x);
Var tanh(Var x);
Var activate(Var x, Activation a);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var minimum(Var a, Var b);
Var scale(Var a, double factor);
Var add_scalar(Var a, double c);
Var square(Var a);
Var exp(Var a);
/// Elementwise clamp; gradient passes where lo <= x <= hi.
Var clamp(Var a, double lo, double hi);

/// x [n x d] (+|*) r [d], broadcast over rows.
Var add_row(Var x, Var r);
Var mul_row(Var x, Var r);

/// [n x d] -> [n x 1]
Var row_sum(Var x);
/// Sum of all elements -> shape {1}.
Var sum(Var x);
/// Mean of all elements -> shape {1}.
Var mean(Var x);

}  // namespace ops
}  // namespace plasticity
