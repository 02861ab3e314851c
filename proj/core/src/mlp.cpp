#include "plasticity/mlp.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

#include "plasticity/errors.hpp"
#include "plasticity/numfmt.hpp"

namespace plasticity {

namespace {
constexpr const char* kCheckpointMagic = "plasticity-mlp";
constexpr int kCheckpointVersion = 1;
}  // namespace

void LayerSpec::validate() const {
  if (weights.shape() != Shape{n_out, n_in}) {
    throw ShapeError("layer weights " + shape_string(weights.shape()) + " expected " +
                     shape_string(Shape{n_out, n_in}));
  }
  if (bias.shape() != Shape{n_out}) {
    throw ShapeError("layer bias " + shape_string(bias.shape()) + " expected " + shape_string(Shape{n_out}));
  }
}

std::size_t MlpNetwork::input_width() const {
  if (layers.empty()) throw ShapeError("network has no layers");
  return layers.front().n_in;
}

std::size_t MlpNetwork::output_width() const {
  if (layers.empty()) throw ShapeError("network has no layers");
  return layers.back().n_out;
}

std::size_t MlpNetwork::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weights.size() + l.bias.size();
  return n;
}

std::vector<std::size_t> MlpNetwork::widths() const {
  std::vector<std::size_t> w;
  if (layers.empty()) return w;
  w.push_back(layers.front().n_in);
  for (const auto& l : layers) w.push_back(l.n_out);
  return w;
}

void MlpNetwork::validate() const {
  if (layers.empty()) throw ShapeError("network has no layers");
  for (std::size_t k = 0; k < layers.size(); ++k) {
    layers[k].validate();
    if (k + 1 < layers.size() && layers[k].n_out != layers[k + 1].n_in) {
      throw ShapeError("layer " + std::to_string(k) + " output width " + std::to_string(layers[k].n_out) +
                       " does not feed layer " + std::to_string(k + 1) + " input width " +
                       std::to_string(layers[k + 1].n_in));
    }
  }
}

MlpNetwork init_network(std::span<const std::size_t> widths, Activation hidden, std::uint64_t seed,
                        Activation output) {
  if (widths.size() < 2) throw ConfigError("init_network needs at least an input and an output width");
  for (std::size_t w : widths) {
    if (w == 0) throw ConfigError("init_network widths must be positive");
  }
  MlpNetwork net;
  net.seed = seed;
  std::mt19937_64 rng(seed);
  for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
    LayerSpec layer;
    layer.n_in = widths[k];
    layer.n_out = widths[k + 1];
    layer.activation = (k + 2 == widths.size()) ? output : hidden;
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.n_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    layer.weights = Tensor({layer.n_out, layer.n_in});
    for (double& v : layer.weights.values()) v = dist(rng);
    layer.bias = Tensor({layer.n_out});
    net.layers.push_back(std::move(layer));
  }
  return net;
}

TapedForward forward_on_tape(const MlpNetwork& net, GradTape& tape, const Tensor& batch, GradRequest request,
                             std::optional<std::size_t> stop_after) {
  if (net.layers.empty()) throw ShapeError("network has no layers");
  if (batch.rank() != 2 || batch.cols() != net.input_width()) {
    throw ShapeError("batch " + shape_string(batch.shape()) + " does not match network input width " +
                     std::to_string(net.input_width()));
  }
  if (stop_after && *stop_after >= net.layers.size()) {
    throw ShapeError("layer index " + std::to_string(*stop_after) + " out of range");
  }
  require_finite(batch, "network input");
  TapedForward fwd;
  fwd.input = tape.constant(batch);
  Var x = fwd.input;
  const std::size_t last = stop_after.value_or(net.layers.size() - 1);
  for (std::size_t k = 0; k <= last; ++k) {
    const LayerSpec& layer = net.layers[k];
    const bool wants = request.all || (request.layer && *request.layer == k);
    TapedLayer tl;
    tl.weights = tape.leaf(layer.weights, wants);
    tl.bias = tape.leaf(layer.bias, wants);
    tl.preactivation = ops::linear(x, tl.weights, tl.bias);
    tl.activation = ops::activate(tl.preactivation, layer.activation);
    x = tl.activation;
    fwd.layers.push_back(tl);
  }
  return fwd;
}

LayerOutputs forward(const MlpNetwork& net, const Tensor& batch) {
  GradTape tape;
  const TapedForward fwd = forward_on_tape(net, tape, batch, GradRequest::none());
  LayerOutputs out;
  for (const auto& l : fwd.layers) {
    out.preactivations.push_back(l.preactivation.value());
    out.activations.push_back(l.activation.value());
  }
  return out;
}

NetworkGrads zero_grads(const MlpNetwork& net) {
  NetworkGrads g;
  for (const auto& l : net.layers) g.push_back({Tensor(l.weights.shape()), Tensor(l.bias.shape())});
  return g;
}

NetworkGrads collect_grads(const MlpNetwork& net, const GradTape& tape, const TapedForward& fwd) {
  NetworkGrads g = zero_grads(net);
  for (std::size_t k = 0; k < fwd.layers.size(); ++k) {
    if (tape.has_grad(fwd.layers[k].weights)) g[k].weights = tape.grad(fwd.layers[k].weights);
    if (tape.has_grad(fwd.layers[k].bias)) g[k].bias = tape.grad(fwd.layers[k].bias);
  }
  return g;
}

namespace {

void write_values(std::ostream& os, const char* tag, const Tensor& t) {
  os << tag;
  for (double v : t.values()) os << ' ' << format_double(v);
  os << '\n';
}

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> out;
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

std::vector<std::string> expect_line(std::istream& is, const std::string& tag, std::size_t min_tokens) {
  std::string line;
  if (!std::getline(is, line)) throw FormatError("checkpoint truncated before '" + tag + "'");
  auto tokens = split_ws(line);
  if (tokens.empty() || tokens[0] != tag || tokens.size() < min_tokens) {
    throw FormatError("checkpoint: expected '" + tag + "' line, got '" + line + "'");
  }
  return tokens;
}

Tensor read_values(std::istream& is, const char* tag, Shape shape) {
  auto tokens = expect_line(is, tag, 1);
  const std::size_t n = element_count(shape);
  if (tokens.size() != n + 1) {
    throw FormatError(std::string("checkpoint: '") + tag + "' has " + std::to_string(tokens.size() - 1) +
                      " values, expected " + std::to_string(n));
  }
  std::vector<double> data(n);
  for (std::size_t i = 0; i < n; ++i) data[i] = parse_double(tokens[i + 1]);
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace

void write_checkpoint(std::ostream& os, const MlpNetwork& net) {
  net.validate();
  os << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  os << "seed " << net.seed << '\n';
  os << "layers " << net.layers.size() << '\n';
  for (const auto& l : net.layers) {
    os << "layer " << l.n_in << ' ' << l.n_out << ' ' << activation_name(l.activation) << '\n';
    write_values(os, "w", l.weights);
    write_values(os, "b", l.bias);
  }
}

MlpNetwork read_checkpoint(std::istream& is) {
  auto header = expect_line(is, kCheckpointMagic, 2);
  if (parse_uint(header[1]) != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + header[1]);
  }
  MlpNetwork net;
  net.seed = parse_uint(expect_line(is, "seed", 2)[1]);
  const std::size_t n_layers = parse_uint(expect_line(is, "layers", 2)[1]);
  for (std::size_t k = 0; k < n_layers; ++k) {
    auto tokens = expect_line(is, "layer", 4);
    LayerSpec l;
    l.n_in = parse_uint(tokens[1]);
    l.n_out = parse_uint(tokens[2]);
    try {
      l.activation = parse_activation(tokens[3]);
    } catch (const ConfigError& e) {
      throw FormatError(e.what());
    }
    l.weights = read_values(is, "w", {l.n_out, l.n_in});
    l.bias = read_values(is, "b", {l.n_out});
    net.layers.push_back(std::move(l));
  }
  net.validate();
  return net;
}

void save_checkpoint(const std::string& path, const MlpNetwork& net) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open " + path + " for writing");
  write_checkpoint(os, net);
}

MlpNetwork load_checkpoint(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open " + path);
  return read_checkpoint(is);
}

bool bit_identical(const MlpNetwork& a, const MlpNetwork& b) noexcept {
  if (a.layers.size() != b.layers.size()) return false;
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    const auto& x = a.layers[l];
    const auto& y = b.layers[l];
    if (x.n_in != y.n_in || x.n_out != y.n_out || x.activation != y.activation) return false;
    if (!bit_identical(x.weights, y.weights) || !bit_identical(x.bias, y.bias)) return false;
  }
  return true;
}

}  // namespace plasticity
