#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "plasticity/config.hpp"
#include "plasticity/experiments.hpp"
#include "plasticity/metrics.hpp"
#include "test_util.hpp"

namespace plasticity {
namespace {

constexpr int kTrials = 100;

// Random ReLU layer with biases spread so that some units die on the batch.
MlpNetwork random_relu_net(std::mt19937_64& rng, std::size_t in, std::size_t out) {
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor w(Shape{out, in}), b(Shape{out});
  for (auto& v : w.values()) v = n(rng);
  for (auto& v : b.values()) v = 2.0 * n(rng);
  return testing::make_net({testing::make_layer(w, b, Activation::kRelu)});
}

TEST(MetricProperties, DormancyScoresAverageToOne) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::size_t> size(1, 16);
  for (int t = 0; t < kTrials; ++t) {
    const auto net = random_relu_net(rng, size(rng), size(rng));
    const Tensor x = testing::random_matrix(size(rng), net.input_width(), rng());
    const auto r = dormancy_index(forward(net, x).activations[0], 0.025);
    if (r.degenerate) continue;
    const double mean = std::accumulate(r.scores.begin(), r.scores.end(), 0.0) / r.scores.size();
    EXPECT_NEAR(mean, 1.0, 1e-9);
    for (std::size_t i = 0; i < r.scores.size(); ++i) {
      EXPECT_GE(r.scores[i], 0.0);
      EXPECT_EQ(r.dormant_mask[i], r.scores[i] <= 0.025);
    }
  }
}

TEST(MetricProperties, ZeroScoreMeansAllActivationsZero) {
  std::mt19937_64 rng(2);
  std::size_t zero_scores = 0;
  for (int t = 0; t < kTrials; ++t) {
    const auto net = random_relu_net(rng, 4, 8);
    const Tensor h = forward(net, testing::random_matrix(6, 4, rng())).activations[0];
    const auto r = dormancy_index(h, 0.0);
    for (std::size_t i = 0; i < r.scores.size(); ++i) {
      if (r.scores[i] != 0.0) continue;
      ++zero_scores;
      for (std::size_t k = 0; k < h.rows(); ++k) EXPECT_EQ(h.at(k, i), 0.0);
    }
  }
  EXPECT_GT(zero_scores, 0u);
}

TEST(MetricProperties, DeadUnitsHaveZeroMagiAndZeroMagiUnitsAreSilent) {
  std::mt19937_64 rng(3);
  std::size_t dead = 0;
  for (int t = 0; t < kTrials; ++t) {
    const auto net = random_relu_net(rng, 3, 8);
    const Tensor x = testing::random_matrix(8, 3, rng());
    const auto out = forward(net, x);
    const auto g = magi(net, x, 0, 0.0);
    for (std::size_t i = 0; i < 8; ++i) {
      bool all_zero = true, all_negative = true, any_zero = false;
      for (std::size_t k = 0; k < x.rows(); ++k) {
        all_zero = all_zero && out.activations[0].at(k, i) == 0.0;
        any_zero = any_zero || out.activations[0].at(k, i) == 0.0;
        all_negative = all_negative && out.preactivations[0].at(k, i) < 0.0;
      }
      if (all_zero && all_negative) {
        ++dead;
        EXPECT_EQ(g.magi[i], 0.0);
      }
      if (g.magi[i] == 0.0 && any_zero) {
        EXPECT_TRUE(all_zero);
      }
    }
  }
  EXPECT_GT(dead, 0u);
}

TEST(MetricProperties, MagiScalesWithIdentityLayerInput) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < kTrials; ++t) {
    const Tensor w = testing::random_matrix(3, 4, rng());
    const auto net = testing::make_net({testing::make_layer(w, Tensor(Shape{3}), Activation::kIdentity)});
    Tensor x = testing::random_matrix(5, 4, rng());
    const double c = 4.0;  // power of two keeps the scaling exact
    const auto base = magi(net, x, 0, 0.0);
    for (auto& v : x.values()) v *= c;
    const auto scaled = magi(net, x, 0, 0.0);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(scaled.magi[i], c * base.magi[i]);
  }
}

TEST(MetricProperties, DormancyScoresFollowNeuronPermutation) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < kTrials; ++t) {
    const Tensor h = testing::random_matrix(7, 5, rng());
    std::vector<std::size_t> perm(5);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Tensor p(Shape{7, 5});
    for (std::size_t k = 0; k < 7; ++k)
      for (std::size_t i = 0; i < 5; ++i) p.at(k, i) = h.at(k, perm[i]);
    const auto a = dormancy_index(h, 0.3);
    const auto b = dormancy_index(p, 0.3);
    for (std::size_t i = 0; i < 5; ++i) {
      EXPECT_NEAR(b.scores[i], a.scores[perm[i]], 1e-12);
      EXPECT_EQ(b.dormant_mask[i], a.dormant_mask[perm[i]]);
    }
  }
}

TEST(MetricProperties, OverlapIsSymmetric) {
  std::mt19937_64 rng(6);
  std::bernoulli_distribution coin(0.4);
  for (int t = 0; t < kTrials; ++t) {
    IndexSet a, b;
    for (std::size_t i = 0; i < 12; ++i) {
      if (coin(rng)) a.push_back(i);
      if (coin(rng)) b.push_back(i);
    }
    const auto ab = overlap(a, b), ba = overlap(b, a);
    EXPECT_EQ(ab.coefficient, ba.coefficient);
    EXPECT_GE(ab.coefficient, 0.0);
    EXPECT_LE(ab.coefficient, 1.0);
    if (!a.empty()) {
      EXPECT_EQ(overlap(a, a).coefficient, 1.0);
    }
  }
}

TEST(MetricProperties, EquivalenceHoldsOnRandomReluNets) {
  EquivalenceConfig limits;
  std::size_t dormant = 0;
  for (std::uint64_t seed = 0; seed < kTrials; ++seed) {
    const auto net = random_equivalence_net(limits, 4, seed);
    const Tensor x = testing::random_matrix(1 + seed % limits.max_rows, 4, seed + 1000);
    for (std::size_t l = 0; l + 1 < net.depth(); ++l) {
      const auto r = equivalence_check(net, x, l, 0.0, 0.0);
      EXPECT_TRUE(r.violations.empty()) << "seed " << seed << " layer " << l;
      EXPECT_TRUE(r.strict_violations.empty()) << "seed " << seed << " layer " << l;
      dormant += r.dormant_count;
    }
  }
  EXPECT_GT(dormant, 0u);
}

}  // namespace
}  // namespace plasticity
