#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "plasticity/errors.hpp"
#include "plasticity/mlp.hpp"
#include "test_util.hpp"

namespace plasticity {
namespace {

using testing::make_layer;
using testing::make_net;

TEST(Forward, IdentityLayerPassesInputThrough) {
  const auto net = make_net({make_layer(Tensor::matrix({{1, 0}, {0, 1}}), Tensor::vector({0, 0}),
                                        Activation::kIdentity)});
  EXPECT_EQ(forward(net, Tensor::matrix({{3, 4}})).output(), Tensor::matrix({{3, 4}}));
}

TEST(Forward, ReluLayerByHand) {
  const auto net = make_net({make_layer(Tensor::matrix({{1, 0}, {-1, 0}}), Tensor::vector({0, 0}),
                                        Activation::kRelu)});
  const auto out = forward(net, Tensor::matrix({{1, 0}, {2, 0}}));
  EXPECT_EQ(out.activations[0], Tensor::matrix({{1, 0}, {2, 0}}));
  EXPECT_EQ(out.preactivations[0], Tensor::matrix({{1, -1}, {2, -2}}));
}

TEST(Forward, ZeroNetGivesZeroActivations) {
  const auto net = make_net({make_layer(Tensor(Shape{3, 2}), Tensor(Shape{3}), Activation::kRelu),
                             make_layer(Tensor(Shape{1, 3}), Tensor(Shape{1}), Activation::kIdentity)});
  const auto out = forward(net, Tensor::matrix({{5, -7}, {0.5, 2}}));
  for (const auto& a : out.activations) {
    for (double v : a.values()) EXPECT_EQ(v, 0.0);
  }
}

TEST(Forward, IsPure) {
  const auto widths = std::vector<std::size_t>{5, 7, 3};
  const auto net = init_network(widths, Activation::kTanh, 11);
  const Tensor x = testing::random_matrix(4, 5, 2);
  EXPECT_TRUE(bit_identical(forward(net, x).output(), forward(net, x).output()));
}

TEST(Forward, TapedMatchesPlain) {
  const auto widths = std::vector<std::size_t>{3, 6, 6, 2};
  const auto net = init_network(widths, Activation::kRelu, 5);
  const Tensor x = testing::random_matrix(8, 3, 9);
  GradTape tape;
  const auto taped = forward_on_tape(net, tape, x);
  EXPECT_TRUE(bit_identical(taped.output().value(), forward(net, x).output()));
}

TEST(Forward, RejectsBadInput) {
  const auto widths = std::vector<std::size_t>{2, 3, 1};
  const auto net = init_network(widths, Activation::kRelu, 1);
  EXPECT_THROW(forward(net, Tensor::matrix({{1, 2, 3}})), ShapeError);
  EXPECT_THROW(forward(net, Tensor::matrix({{1, std::numeric_limits<double>::quiet_NaN()}})), NonFiniteError);
}

TEST(Forward, DeadReluPassesNoGradient) {
  // Neuron 1 has a strictly negative preactivation on every row.
  const auto net = make_net({make_layer(Tensor::matrix({{1, 1}, {-1, -1}}), Tensor::vector({0, -0.5}),
                                        Activation::kRelu),
                             make_layer(Tensor::matrix({{1, 1}}), Tensor::vector({0}), Activation::kIdentity)});
  GradTape tape;
  const auto fwd = forward_on_tape(net, tape, Tensor::matrix({{1, 2}, {0.5, 0.1}, {3, 0}}));
  tape.backward(ops::sum(fwd.output()));
  const auto g = collect_grads(net, tape, fwd);
  EXPECT_EQ(g[0].weights.at(1, 0), 0.0);
  EXPECT_EQ(g[0].weights.at(1, 1), 0.0);
  EXPECT_EQ(g[0].bias[1], 0.0);
  EXPECT_NE(g[0].weights.at(0, 0), 0.0);
}

TEST(Init, SameSeedIsBitIdentical) {
  const auto widths = std::vector<std::size_t>{17, 64, 64, 1};
  EXPECT_TRUE(bit_identical(init_network(widths, Activation::kRelu, 42), init_network(widths, Activation::kRelu, 42)));
  EXPECT_FALSE(init_network(widths, Activation::kRelu, 42) == init_network(widths, Activation::kRelu, 43));
}

TEST(Init, ShapesBoundsAndZeroBias) {
  const auto widths = std::vector<std::size_t>{17, 64, 64, 1};
  const auto net = init_network(widths, Activation::kRelu, 7);
  ASSERT_EQ(net.depth(), 3u);
  EXPECT_EQ(net.widths(), widths);
  EXPECT_EQ(net.layers[0].weights.shape(), (Shape{64, 17}));
  EXPECT_EQ(net.layers[2].weights.shape(), (Shape{1, 64}));
  EXPECT_EQ(net.layers[2].activation, Activation::kIdentity);
  EXPECT_EQ(net.parameter_count(), 64u * 17 + 64 + 64 * 64 + 64 + 64 + 1);
  for (const auto& l : net.layers) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.n_in));
    for (double w : l.weights.values()) EXPECT_LE(std::abs(w), bound);
    for (double b : l.bias.values()) EXPECT_EQ(b, 0.0);
  }
}

TEST(Init, RejectsBadWidths) {
  const std::vector<std::size_t> one{3};
  const std::vector<std::size_t> zero{3, 0, 1};
  EXPECT_THROW(init_network(one, Activation::kRelu, 0), ConfigError);
  EXPECT_THROW(init_network(zero, Activation::kRelu, 0), ConfigError);
}

TEST(Network, ValidateCatchesWidthChain) {
  MlpNetwork net;
  net.layers.push_back(make_layer(Tensor(Shape{3, 2}), Tensor(Shape{3}), Activation::kRelu));
  net.layers.push_back(make_layer(Tensor(Shape{1, 4}), Tensor(Shape{1}), Activation::kIdentity));
  EXPECT_THROW(net.validate(), ShapeError);
  EXPECT_THROW(MlpNetwork{}.validate(), ShapeError);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto widths = std::vector<std::size_t>{4, 5, 3, 2};
  auto net = init_network(widths, Activation::kTanh, 99);
  net.layers[1].bias[0] = -0.0;
  net.layers[1].bias[1] = 1e-310;  // subnormal
  net.layers[0].weights[3] = 0.1 + 0.2;
  std::stringstream ss;
  write_checkpoint(ss, net);
  const auto back = read_checkpoint(ss);
  EXPECT_TRUE(bit_identical(net, back));
  EXPECT_EQ(back.seed, 99u);
}

TEST(Checkpoint, RejectsTruncatedAndForeignInput) {
  const auto widths = std::vector<std::size_t>{2, 2, 1};
  std::stringstream ss;
  write_checkpoint(ss, init_network(widths, Activation::kRelu, 1));
  const std::string text = ss.str();
  std::istringstream truncated(text.substr(0, text.size() / 2));
  EXPECT_THROW(read_checkpoint(truncated), FormatError);
  std::istringstream garbage("hello world\n");
  EXPECT_THROW(read_checkpoint(garbage), FormatError);
}

}  // namespace
}  // namespace plasticity
