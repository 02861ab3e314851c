#include "plasticity/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "plasticity/errors.hpp"

namespace plasticity {

const Tensor& Var::value() const {
  if (!tape_) throw TapeError("value() on an unbound variable");
  return tape_->value(*this);
}

const Tensor& Var::grad() const {
  if (!tape_) throw TapeError("grad() on an unbound variable");
  return tape_->grad(*this);
}

const Tensor& BackwardContext::output() const { return tape_.nodes_[node_].value; }

const Tensor& BackwardContext::output_grad() const { return *tape_.nodes_[node_].grad; }

const Tensor& BackwardContext::input(std::size_t k) const {
  return tape_.nodes_[tape_.nodes_[node_].inputs.at(k)].value;
}

bool BackwardContext::wants(std::size_t k) const {
  return tape_.nodes_[tape_.nodes_[node_].inputs.at(k)].requires_grad;
}

Tensor& BackwardContext::input_grad(std::size_t k) {
  auto& n = tape_.nodes_[tape_.nodes_[node_].inputs.at(k)];
  if (!n.grad) n.grad.emplace(n.value.shape());
  return *n.grad;
}

Var GradTape::leaf(Tensor value, bool requires_grad) {
  if (consumed_) throw TapeError("cannot record on a consumed tape");
  require_finite(value, "tape leaf");
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.is_leaf = true;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var GradTape::record(Tensor value, std::vector<Var> inputs, BackwardFn backward, const char* op_name) {
  if (consumed_) throw TapeError("cannot record on a consumed tape");
  require_finite(value, op_name);
  Node n;
  n.value = std::move(value);
  n.inputs.reserve(inputs.size());
  for (const Var& v : inputs) {
    if (v.tape() != this) throw TapeError(std::string(op_name) + ": operand from another tape");
    n.inputs.push_back(v.id());
    n.requires_grad = n.requires_grad || nodes_[v.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

const GradTape::Node& GradTape::node(Var v) const {
  if (v.tape() != this || v.id() >= nodes_.size()) throw TapeError("variable does not belong to this tape");
  return nodes_[v.id()];
}

const Tensor& GradTape::value(Var v) const { return node(v).value; }

const Tensor& GradTape::grad(Var v) const {
  const Node& n = node(v);
  if (!n.grad) throw TapeError("gradient not populated; call backward() first");
  return *n.grad;
}

bool GradTape::has_grad(Var v) const { return node(v).grad.has_value(); }

bool GradTape::requires_grad(Var v) const { return node(v).requires_grad; }

void GradTape::backward(Var output) {
  if (consumed_) throw TapeError("tape already consumed by a previous backward pass");
  const Node& out = node(output);
  if (out.value.size() != 1) {
    throw TapeError("backward requires a scalar output, got shape " + shape_string(out.value.shape()));
  }
  consumed_ = true;
  nodes_[output.id()].grad.emplace(out.value.shape(), 1.0);
  for (std::size_t i = output.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.grad || !n.backward) continue;
    BackwardContext ctx(*this, i);
    n.backward(ctx);
  }
  for (Node& n : nodes_) {
    if (n.is_leaf && n.requires_grad && !n.grad) n.grad.emplace(n.value.shape());
  }
}

const char* activation_name(Activation a) noexcept {
  switch (a) {
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
    case Activation::kIdentity: return "identity";
  }
  return "?";
}

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  if (name == "identity" || name == "none") return Activation::kIdentity;
  throw ConfigError("unknown activation '" + name + "'");
}

namespace ops {
namespace {

GradTape& tape_of(Var a, Var b, const char* op) {
  if (!a.tape() || a.tape() != b.tape()) throw TapeError(std::string(op) + ": operands on different tapes");
  return *a.tape();
}

GradTape& tape_of(Var a, const char* op) {
  if (!a.tape()) throw TapeError(std::string(op) + ": unbound operand");
  return *a.tape();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}

void require_matrix(const Tensor& a, const char* op) {
  if (a.rank() != 2) throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_string(a.shape()));
}

template <class F>
Var unary(Var a, const char* op, F&& f, GradTape::BackwardFn bw) {
  GradTape& tape = tape_of(a, op);
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return tape.record(std::move(y), {a}, std::move(bw), op);
}

// Y = X W^T (+ b). W is transposed once so the inner loop runs contiguously
// over the output features.
Tensor linear_forward(const Tensor& x, const Tensor& w, const Tensor* b) {
  const std::size_t n = x.rows(), in = x.cols(), out = w.rows();
  std::vector<double> wt(in * out);
  for (std::size_t i = 0; i < out; ++i)
    for (std::size_t j = 0; j < in; ++j) wt[j * out + i] = w.at(i, j);
  Tensor y({n, out});
  for (std::size_t k = 0; k < n; ++k) {
    double* yk = &y.at(k, 0);
    if (b) std::copy(b->values().begin(), b->values().end(), yk);
    const auto xk = x.row(k);
    for (std::size_t j = 0; j < in; ++j) {
      const double xv = xk[j];
      const double* wj = &wt[j * out];
      for (std::size_t i = 0; i < out; ++i) yk[i] += xv * wj[i];
    }
  }
  return y;
}

void linear_backward(BackwardContext& ctx, bool has_bias) {
  const Tensor& x = ctx.input(0);
  const Tensor& w = ctx.input(1);
  const Tensor& gy = ctx.output_grad();
  const std::size_t n = x.rows(), in = x.cols(), out = w.rows();
  if (ctx.wants(0)) {
    Tensor& gx = ctx.input_grad(0);
    for (std::size_t k = 0; k < n; ++k) {
      double* gxk = &gx.at(k, 0);
      for (std::size_t i = 0; i < out; ++i) {
        const double g = gy.at(k, i);
        if (g == 0.0) continue;
        const auto wi = w.row(i);
        for (std::size_t j = 0; j < in; ++j) gxk[j] += g * wi[j];
      }
    }
  }
  if (ctx.wants(1)) {
    Tensor& gw = ctx.input_grad(1);
    for (std::size_t k = 0; k < n; ++k) {
      const auto xk = x.row(k);
      for (std::size_t i = 0; i < out; ++i) {
        const double g = gy.at(k, i);
        if (g == 0.0) continue;
        double* gwi = &gw.at(i, 0);
        for (std::size_t j = 0; j < in; ++j) gwi[j] += g * xk[j];
      }
    }
  }
  if (has_bias && ctx.wants(2)) {
    Tensor& gb = ctx.input_grad(2);
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t i = 0; i < out; ++i) gb[i] += gy.at(k, i);
  }
}

void check_linear_shapes(const Tensor& x, const Tensor& w, const Tensor* b) {
  require_matrix(x, "linear");
  require_matrix(w, "linear");
  if (x.cols() != w.cols()) {
    throw ShapeError("linear: input " + shape_string(x.shape()) + " incompatible with weights " +
                     shape_string(w.shape()));
  }
  if (b && (b->rank() != 1 || b->size() != w.rows())) {
    throw ShapeError("linear: bias " + shape_string(b->shape()) + " incompatible with weights " +
                     shape_string(w.shape()));
  }
}

}  // namespace

Var linear(Var x, Var w, Var b) {
  GradTape& tape = tape_of(x, w, "linear");
  tape_of(x, b, "linear");
  check_linear_shapes(x.value(), w.value(), &b.value());
  Tensor y = linear_forward(x.value(), w.value(), &b.value());
  return tape.record(std::move(y), {x, w, b}, [](BackwardContext& ctx) { linear_backward(ctx, true); }, "linear");
}

Var matmul_nt(Var x, Var w) {
  GradTape& tape = tape_of(x, w, "matmul_nt");
  check_linear_shapes(x.value(), w.value(), nullptr);
  Tensor y = linear_forward(x.value(), w.value(), nullptr);
  return tape.record(std::move(y), {x, w}, [](BackwardContext& ctx) { linear_backward(ctx, false); }, "matmul_nt");
}

Var relu(Var x) {
  return unary(x, "relu", [](double v) { return v > 0.0 ? v : 0.0; }, [](BackwardContext& ctx) {
    const Tensor& in = ctx.input(0);
    const Tensor& g = ctx.output_grad();
    Tensor& gi = ctx.input_grad(0);
    for (std::size_t i = 0; i < in.size(); ++i)
      if (in[i] > 0.0) gi[i] += g[i];
  });
}

Var tanh(Var x) {
  return unary(x, "tanh", [](double v) { return std::tanh(v); }, [](BackwardContext& ctx) {
    const Tensor& y = ctx.output();
    const Tensor& g = ctx.output_grad();
    Tensor& gi = ctx.input_grad(0);
    for (std::size_t i = 0; i < y.size(); ++i) gi[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

Var activate(Var x, Activation a) {
  switch (a) {
    case Activation::kRelu: return relu(x);
    case Activation::kTanh: return tanh(x);
    case Activation::kIdentity: return x;
  }
  return x;
}

Var add(Var a, Var b) {
  GradTape& tape = tape_of(a, b, "add");
  require_same_shape(a.value(), b.value(), "add");
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  return tape.record(std::move(y), {a, b}, [](BackwardContext& ctx) {
    const Tensor& g = ctx.output_grad();
    for (std::size_t k = 0; k < 2; ++k) {
      if (!ctx.wants(k)) continue;
      Tensor& gi = ctx.input_grad(k);
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    }
  }, "add");
}

Var sub(Var a, Var b) {
  GradTape& tape = tape_of(a, b, "sub");
  require_same_shape(a.value(), b.value(), "sub");
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
  return tape.record(std::move(y), {a, b}, [](BackwardContext& ctx) {
    const Tensor& g = ctx.output_grad();
    if (ctx.wants(0)) {
      Tensor& ga = ctx.input_grad(0);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (ctx.wants(1)) {
      Tensor& gb = ctx.input_grad(1);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  }, "sub");
}

Var mul(Var a, Var b) {
  GradTape& tape = tape_of(a, b, "mul");
  require_same_shape(a.value(), b.value(), "mul");
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
  return tape.record(std::move(y), {a, b}, [](BackwardContext& ctx) {
    const Tensor& g = ctx.output_grad();
    const Tensor& av = ctx.input(0);
    const Tensor& bv = ctx.input(1);
    if (ctx.wants(0)) {
      Tensor& ga = ctx.input_grad(0);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (ctx.wants(1)) {
      Tensor& gb = ctx.input_grad(1);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  }, "mul");
}

Var minimum(Var a, Var b) {
  GradTape& tape = tape_of(a, b, "minimum");
  require_same_shape(a.value(), b.value(), "minimum");
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::min(y[i], bv[i]);
  // Ties route the gradient to the first operand.
  return tape.record(std::move(y), {a, b}, [](BackwardContext& ctx) {
    const Tensor& g = ctx.output_grad();
    const Tensor& av = ctx.input(0);
    const Tensor& bv = ctx.input(1);
    if (ctx.wants(0)) {
      Tensor& ga = ctx.input_grad(0);
      for (std::size_t i = 0; i < g.size(); ++i)
        if (av[i] <= bv[i]) ga[i] += g[i];
    }
    if (ctx.wants(1)) {
      Tensor& gb = ctx.input_grad(1);
      for (std::size_t i = 0; i < g.size(); ++i)
        if (bv[i] < av[i]) gb[i] += g[i];
    }
  }, "minimum");
}

Var scale(Var a, double factor) {
  return unary(a, "scale", [factor](double v) { return v * factor; }, [factor](BackwardContext& ctx) {
    const Tensor& g = ctx.output_grad();
    Tensor& gi = ctx.input_grad(0);
    for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i] * factor;
  });
}

Var add_scalar(Var a, double c) {
  return unary(a, "add_scalar", [c](double v) { return v + c; }, [](BackwardContext& ctx) {
    const Tensor& g = ctx.output_grad();
    Tensor& gi = ctx.input_grad(0);
    for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
  });
}

Var square(Var a) {
  return unary(a, "square", [](double v) { return v * v; }, [](BackwardContext& ctx) {
    const Tensor& x = ctx.input(0);
    const Tensor& g = ctx.output_grad();
    Tensor& gi = ctx.input_grad(0);
    for (std::size_t i = 0; i < g.size(); ++i) gi[i] += 2.0 * x[i] * g[i];
  });
}

Var exp(Var a) {
  return unary(a, "exp", [](double v) { return std::exp(v); }, [](BackwardContext& ctx) {
    const Tensor& y = ctx.output();
    const Tensor& g = ctx.output_grad();
    Tensor& gi = ctx.input_grad(0);
    for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i] * y[i];
  });
}

Var clamp(Var a, double lo, double hi) {
  if (!(lo <= hi)) throw ConfigError("clamp: lo must not exceed hi");
  return unary(a, "clamp", [lo, hi](double v) { return std::clamp(v, lo, hi); }, [lo, hi](BackwardContext& ctx) {
    const Tensor& x = ctx.input(0);
    const Tensor& g = ctx.output_grad();
    Tensor& gi = ctx.input_grad(0);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (x[i] >= lo && x[i] <= hi) gi[i] += g[i];
  });
}

Var add_row(Var x, Var r) {
  GradTape& tape = tape_of(x, r, "add_row");
  require_matrix(x.value(), "add_row");
  if (r.value().size() != x.value().cols()) throw ShapeError("add_row: row vector width mismatch");
  Tensor y = x.value();
  const Tensor& rv = r.value();
  for (std::size_t k = 0; k < y.rows(); ++k)
    for (std::size_t j = 0; j < y.cols(); ++j) y.at(k, j) += rv[j];
  return tape.record(std::move(y), {x, r}, [](BackwardContext& ctx) {
    const Tensor& g = ctx.output_grad();
    if (ctx.wants(0)) {
      Tensor& gx = ctx.input_grad(0);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (ctx.wants(1)) {
      Tensor& gr = ctx.input_grad(1);
      for (std::size_t k = 0; k < g.rows(); ++k)
        for (std::size_t j = 0; j < g.cols(); ++j) gr[j] += g.at(k, j);
    }
  }, "add_row");
}

Var mul_row(Var x, Var r) {
  GradTape& tape = tape_of(x, r, "mul_row");
  require_matrix(x.value(), "mul_row");
  if (r.value().size() != x.value().cols()) throw ShapeError("mul_row: row vector width mismatch");
  Tensor y = x.value();
  const Tensor& rv = r.value();
  for (std::size_t k = 0; k < y.rows(); ++k)
    for (std::size_t j = 0; j < y.cols(); ++j) y.at(k, j) *= rv[j];
  return tape.record(std::move(y), {x, r}, [](BackwardContext& ctx) {
    const Tensor& g = ctx.output_grad();
    const Tensor& xv = ctx.input(0);
    const Tensor& rv = ctx.input(1);
    if (ctx.wants(0)) {
      Tensor& gx = ctx.input_grad(0);
      for (std::size_t k = 0; k < g.rows(); ++k)
        for (std::size_t j = 0; j < g.cols(); ++j) gx.at(k, j) += g.at(k, j) * rv[j];
    }
    if (ctx.wants(1)) {
      Tensor& gr = ctx.input_grad(1);
      for (std::size_t k = 0; k < g.rows(); ++k)
        for (std::size_t j = 0; j < g.cols(); ++j) gr[j] += g.at(k, j) * xv.at(k, j);
    }
  }, "mul_row");
}

Var row_sum(Var x) {
  GradTape& tape = tape_of(x, "row_sum");
  require_matrix(x.value(), "row_sum");
  const Tensor& xv = x.value();
  Tensor y({xv.rows(), 1});
  for (std::size_t k = 0; k < xv.rows(); ++k) {
    double s = 0.0;
    for (double v : xv.row(k)) s += v;
    y[k] = s;
  }
  return tape.record(std::move(y), {x}, [](BackwardContext& ctx) {
    const Tensor& g = ctx.output_grad();
    Tensor& gx = ctx.input_grad(0);
    for (std::size_t k = 0; k < gx.rows(); ++k)
      for (std::size_t j = 0; j < gx.cols(); ++j) gx.at(k, j) += g[k];
  }, "row_sum");
}

Var sum(Var x) {
  GradTape& tape = tape_of(x, "sum");
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  return tape.record(Tensor::scalar(s), {x}, [](BackwardContext& ctx) {
    const double g = ctx.output_grad()[0];
    Tensor& gx = ctx.input_grad(0);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
  }, "sum");
}

Var mean(Var x) {
  GradTape& tape = tape_of(x, "mean");
  const std::size_t n = x.value().size();
  if (n == 0) throw ShapeError("mean of an empty tensor");
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  return tape.record(Tensor::scalar(s / static_cast<double>(n)), {x}, [n](BackwardContext& ctx) {
    const double g = ctx.output_grad()[0] / static_cast<double>(n);
    Tensor& gx = ctx.input_grad(0);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
  }, "mean");
}

}  // namespace ops
}  // namespace plasticity
