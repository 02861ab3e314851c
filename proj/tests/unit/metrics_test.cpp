#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "plasticity/errors.hpp"
#include "plasticity/metrics.hpp"
#include "test_util.hpp"

namespace plasticity {
namespace {

using testing::make_layer;
using testing::make_net;

TEST(Dormancy, TwoSilentNeuronsAndOneActive) {
  const auto r = dormancy_index(Tensor::matrix({{0, 0, 2}, {0, 0, -4}}), 0.025);
  EXPECT_EQ(r.scores, (std::vector<double>{0, 0, 3}));
  EXPECT_EQ(r.dormant_mask, (std::vector<bool>{true, true, false}));
  EXPECT_DOUBLE_EQ(r.dormant_fraction, 2.0 / 3.0);
  EXPECT_EQ(r.batch_size, 2u);
  EXPECT_FALSE(r.degenerate);
}

TEST(Dormancy, SingleNeuronScoresOne) {
  const auto r = dormancy_index(Tensor(Shape{3, 1}, {0.1, -5.0, 2.0}), 0.025);
  EXPECT_EQ(r.scores, (std::vector<double>{1.0}));
}

TEST(Dormancy, ReluLayerByHand) {
  const auto net = make_net({make_layer(Tensor::matrix({{1, 0}, {-1, 0}}), Tensor::vector({0, 0}),
                                        Activation::kRelu)});
  const auto out = forward(net, Tensor::matrix({{1, 0}, {2, 0}}));
  const auto r = dormancy_index(out.activations[0], 0.025);
  EXPECT_EQ(r.scores, (std::vector<double>{2, 0}));
}

TEST(Dormancy, ThresholdIsInclusive) {
  // Means 1 and 3 -> scores 0.5 and 1.5.
  const auto r = dormancy_index(Tensor::matrix({{1, 3}}), 0.5);
  EXPECT_EQ(r.dormant_mask, (std::vector<bool>{true, false}));
}

TEST(Dormancy, SilentLayerIsDegenerate) {
  const auto r = dormancy_index(Tensor(Shape{4, 3}), 0.025);
  EXPECT_TRUE(r.degenerate);
  EXPECT_EQ(r.scores, (std::vector<double>{0, 0, 0}));
}

TEST(Dormancy, EmptyBatchThrows) {
  EXPECT_THROW(dormancy_index(Tensor(Shape{0, 3}), 0.025), ShapeError);
}

TEST(Magi, IdentityLayerEqualsMeanColumnSum) {
  const auto net = make_net({make_layer(Tensor::matrix({{0.3, -2}, {1, 5}}), Tensor::vector({1, -1}),
                                        Activation::kIdentity)});
  const auto r = magi(net, Tensor::matrix({{1, 2}, {3, 4}}), 0, 1e-8);
  EXPECT_EQ(r.magi, (std::vector<double>{5, 5}));
  EXPECT_EQ(r.zero_grad_fraction, 0.0);
}

TEST(Magi, ZeroBatchGivesZero) {
  const auto net = make_net({make_layer(Tensor::matrix({{1, 2}, {3, 4}, {5, 6}}), Tensor::vector({0, 0, 0}),
                                        Activation::kIdentity)});
  const auto r = magi(net, Tensor(Shape{5, 2}), 0, 0.0);
  EXPECT_EQ(r.magi, (std::vector<double>{0, 0, 0}));
  EXPECT_EQ(r.zero_grad_fraction, 1.0);
}

TEST(Magi, DeadReluNeuronHasZeroIntensity) {
  const auto net = make_net({make_layer(Tensor::matrix({{1, 1}, {-1, -1}}), Tensor::vector({0, -0.1}),
                                        Activation::kRelu)});
  const auto r = magi(net, Tensor::matrix({{1, 2}, {0.5, 0}}), 0, 1e-8);
  EXPECT_GT(r.magi[0], 0.0);
  EXPECT_EQ(r.magi[1], 0.0);
  EXPECT_EQ(r.zero_grad_mask, (std::vector<bool>{false, true}));
}

TEST(Magi, DeeperLayerUsesOnlyItsOwnOutput) {
  // Layer 1 sits behind a ReLU layer; its targets ignore anything after it.
  const auto net = make_net({make_layer(Tensor::matrix({{1, 0}, {0, 1}}), Tensor::vector({0, 0}),
                                        Activation::kRelu),
                             make_layer(Tensor::matrix({{1, 1}}), Tensor::vector({0}), Activation::kIdentity),
                             make_layer(Tensor::matrix({{100}}), Tensor::vector({0}), Activation::kIdentity)});
  const auto r = magi(net, Tensor::matrix({{1, 2}, {3, 4}}), 1, 0.0);
  // dS/dw_j = column sums of the layer input, (4 + 6) / 2.
  EXPECT_EQ(r.magi, (std::vector<double>{5}));
}

TEST(Magi, PreActivationTargetSeesThroughDeadUnits) {
  const auto net = make_net({make_layer(Tensor::matrix({{-1, -1}}), Tensor::vector({0}), Activation::kRelu)});
  const Tensor x = Tensor::matrix({{1, 2}, {3, 4}});
  EXPECT_EQ(magi(net, x, 0, 0.0).magi[0], 0.0);
  EXPECT_EQ(magi(net, x, 0, 0.0, MagiTarget::kPreActivation).magi[0], 5.0);
}

TEST(Magi, InvalidLayerThrows) {
  const auto net = make_net({make_layer(Tensor::matrix({{1}}), Tensor::vector({0}), Activation::kRelu)});
  EXPECT_THROW(magi(net, Tensor::matrix({{1}}), 1, 0.0), ShapeError);
}

TEST(Overlap, HalfOverlap) {
  const IndexSet a{1, 2}, b{2, 3};
  const auto r = overlap(a, b);
  EXPECT_EQ(r.coefficient, 0.5);
  EXPECT_EQ(r.intersection_size, 1u);
  EXPECT_FALSE(r.degenerate);
}

TEST(Overlap, IdenticalSetsAndSubsets) {
  const IndexSet a{0, 4, 7}, sub{4};
  EXPECT_EQ(overlap(a, a).coefficient, 1.0);
  EXPECT_EQ(overlap(a, sub).coefficient, 1.0);
}

TEST(Overlap, EmptySetConventions) {
  const IndexSet empty, one{3};
  const auto both = overlap(empty, empty);
  EXPECT_EQ(both.coefficient, 1.0);
  EXPECT_TRUE(both.degenerate);
  const auto left = overlap(empty, one);
  EXPECT_EQ(left.coefficient, 0.0);
  EXPECT_TRUE(left.degenerate);
  EXPECT_EQ(overlap(one, empty).coefficient, 0.0);
}

TEST(Overlap, MaskToSet) {
  EXPECT_EQ(mask_to_set({false, true, true, false, true}), (IndexSet{1, 2, 4}));
  EXPECT_TRUE(mask_to_set({false, false}).empty());
}

TEST(WeightStats, ZeroLayer) {
  const auto net = make_net({make_layer(Tensor(Shape{2, 3}), Tensor(Shape{2}), Activation::kRelu)});
  const auto s = weight_stats(net).at(0);
  EXPECT_EQ(s.weights.mean, 0.0);
  EXPECT_EQ(s.weights.std, 0.0);
  EXPECT_EQ(s.weights.l2_norm, 0.0);
  EXPECT_EQ(s.weights.max_abs, 0.0);
  EXPECT_EQ(s.bias.l2_norm, 0.0);
}

TEST(WeightStats, ThreeFourFive) {
  const auto net = make_net({make_layer(Tensor::matrix({{3, -4}}), Tensor::vector({0}), Activation::kRelu)});
  const auto s = weight_stats(net).at(0);
  EXPECT_EQ(s.weights.l2_norm, 5.0);
  EXPECT_EQ(s.weights.max_abs, 4.0);
  EXPECT_EQ(s.weights.mean, -0.5);
}

TEST(WeightStats, RowPermutationInvariant) {
  const Tensor w = testing::random_matrix(4, 3, 21);
  Tensor permuted(Shape{4, 3});
  const std::size_t order[] = {2, 0, 3, 1};
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 3; ++c) permuted.at(r, c) = w.at(order[r], c);
  const auto a = weight_stats(make_net({make_layer(w, Tensor(Shape{4}), Activation::kRelu)})).at(0);
  const auto b = weight_stats(make_net({make_layer(permuted, Tensor(Shape{4}), Activation::kRelu)})).at(0);
  EXPECT_NEAR(a.weights.mean, b.weights.mean, 1e-15);
  EXPECT_NEAR(a.weights.std, b.weights.std, 1e-15);
  EXPECT_NEAR(a.weights.l2_norm, b.weights.l2_norm, 1e-15);
  EXPECT_EQ(a.weights.max_abs, b.weights.max_abs);
  EXPECT_GE(a.weights.l2_norm, a.weights.max_abs);
}

TEST(Rank, IdentityHasFullRank) {
  Tensor eye(Shape{4, 4});
  for (std::size_t i = 0; i < 4; ++i) eye.at(i, i) = 1.0;
  const auto r = rank_stats(eye, 0.01);
  EXPECT_EQ(r.threshold_rank, 4u);
  EXPECT_NEAR(r.effective_rank, 4.0, 1e-12);
  for (double s : r.singular_values) EXPECT_NEAR(s, 1.0, 1e-14);
}

TEST(Rank, OuterProductHasRankOne) {
  Tensor m(Shape{5, 3});
  const double u[] = {1, -2, 0.5, 3, 1}, v[] = {2, 1, -1};
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 3; ++j) m.at(i, j) = u[i] * v[j];
  const auto r = rank_stats(m, 0.01);
  EXPECT_EQ(r.threshold_rank, 1u);
  EXPECT_NEAR(r.effective_rank, 1.0, 1e-9);
}

TEST(Rank, SingularValuesMatchGramEigenvalues) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Tensor m = testing::random_matrix(6, 4, 100 + seed);
    Eigen::MatrixXd a(6, 4);
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 4; ++j) a(i, j) = m.at(i, j);
    const Eigen::MatrixXd gram = a.transpose() * a;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
    std::vector<double> expected;
    for (int k = 0; k < 4; ++k) expected.push_back(std::sqrt(std::max(0.0, eig.eigenvalues()(k))));
    std::sort(expected.rbegin(), expected.rend());
    const auto got = singular_values(m);
    ASSERT_EQ(got.size(), 4u);
    for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(got[k], expected[k], 1e-8) << "seed " << seed;
    EXPECT_TRUE(std::is_sorted(got.rbegin(), got.rend()));
  }
}

TEST(Rank, WideMatrixAndBounds) {
  const Tensor m = testing::random_matrix(3, 7, 5);
  const auto r = rank_stats(m, 0.01);
  EXPECT_EQ(r.singular_values.size(), 3u);
  EXPECT_LE(r.threshold_rank, 3u);
  EXPECT_GE(r.effective_rank, 1.0);
  EXPECT_LE(r.effective_rank, 3.0 + 1e-12);
}

TEST(Rank, RejectsNonFinite) {
  Tensor m(Shape{2, 2});
  m[1] = std::numeric_limits<double>::infinity();
  EXPECT_THROW(rank_stats(m, 0.01), NonFiniteError);
}

TEST(Equivalence, HandBuiltDeadNeuron) {
  const auto net = make_net({make_layer(Tensor::matrix({{1, 0}, {-1, -1}, {0, 1}}), Tensor::vector({0, -1, 0.5}),
                                        Activation::kRelu)});
  const auto r = equivalence_check(net, Tensor::matrix({{1, 2}, {0.5, 3}, {2, 0}}), 0, 0.0, 0.0);
  EXPECT_EQ(r.dormant_mask, (std::vector<bool>{false, true, false}));
  EXPECT_EQ(r.zero_grad_mask, (std::vector<bool>{false, true, false}));
  EXPECT_TRUE(r.violations.empty());
  EXPECT_TRUE(r.strict_violations.empty());
  EXPECT_EQ(r.strictly_negative_count, 1u);
  EXPECT_EQ(r.overlap.coefficient, 1.0);
}

TEST(Equivalence, IdentityLayerHasEmptySets) {
  const auto net = make_net({make_layer(Tensor::matrix({{1, 2}, {-0.5, 1}}), Tensor::vector({0.1, 0.2}),
                                        Activation::kIdentity)});
  const auto r = equivalence_check(net, Tensor::matrix({{1, 2}, {3, -1}}), 0, 0.0, 0.0);
  EXPECT_EQ(r.dormant_count, 0u);
  EXPECT_EQ(std::count(r.zero_grad_mask.begin(), r.zero_grad_mask.end(), true), 0);
  EXPECT_TRUE(r.overlap.degenerate);
  EXPECT_TRUE(r.violations.empty());
}

TEST(Pearson, KnownValues) {
  const double x[] = {1, 2, 3, 4}, y[] = {2, 4, 6, 8}, z[] = {4, 3, 2, 1}, c[] = {1, 1, 1, 1};
  EXPECT_NEAR(pearson_correlation(x, y), 1.0, 1e-15);
  EXPECT_NEAR(pearson_correlation(x, z), -1.0, 1e-15);
  EXPECT_TRUE(std::isnan(pearson_correlation(x, c)));
}

}  // namespace
}  // namespace plasticity
