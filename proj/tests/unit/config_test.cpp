#include <gtest/gtest.h>

#include <sstream>

#include "plasticity/config.hpp"
#include "plasticity/errors.hpp"
#include "test_util.hpp"

namespace plasticity {
namespace {

ExperimentConfig parse(const std::string& text) {
  std::istringstream is(text);
  return parse_config(is);
}

std::string written(const ExperimentConfig& c) {
  std::ostringstream os;
  write_config(os, c);
  return os.str();
}

TEST(Config, DefaultsRoundTripForEveryKind) {
  for (auto kind : {ExperimentKind::kTaskSwitch, ExperimentKind::kPpoDormancy, ExperimentKind::kPerturbation,
                    ExperimentKind::kEquivalenceSuite}) {
    const auto c = default_config(kind);
    c.validate();
    const auto back = parse(written(c));
    EXPECT_EQ(back, c) << experiment_kind_name(kind);
    EXPECT_EQ(written(back), written(c));
  }
}

TEST(Config, EditedValuesRoundTrip) {
  auto c = default_config(ExperimentKind::kTaskSwitch);
  c.id = "custom";
  c.seeds = {3, 9};
  c.learning_rates = {0.1, 1e-4, 0.3};
  c.network.hidden = {7};
  c.network.activation = Activation::kTanh;
  c.pretrain.optimizer.kind = OptimizerKind::kAdam;
  c.pretrain.optimizer.grad_clip_norm = 0.5;
  c.finetune.optimizer.weight_clip_bound = 2.0;
  c.metrics.magi_target = MagiTarget::kPreActivation;
  c.metrics.tau_d = 0.1;
  c.ppo.metrics = c.metrics;
  c.ppo.anneal_lr = false;
  c.ppo.env.horizon = 50;
  EXPECT_EQ(parse(written(c)), c);
}

TEST(Config, MinimalFileTakesKindDefaults) {
  const auto c = parse("version = 1\n[experiment]\nkind = perturbation\n");
  auto expected = default_config(ExperimentKind::kPerturbation);
  EXPECT_EQ(c, expected);
}

TEST(Config, CommentsAreAllowed) {
  const auto c = parse("; header\nversion = 1\n[experiment]\n# the kind\nkind = task-switch\nid = x\n");
  EXPECT_EQ(c.id, "x");
}

TEST(Config, RejectsUnknownKeysAndSections) {
  EXPECT_THROW(parse("version = 1\n[experiment]\nkind = task-switch\ncolour = red\n"), ConfigError);
  EXPECT_THROW(parse("version = 1\n[experiment]\nkind = task-switch\n[extras]\na = 1\n"), ConfigError);
  EXPECT_THROW(parse("version = 1\nstray = 2\n[experiment]\nkind = task-switch\n"), ConfigError);
}

TEST(Config, RejectsMissingOrWrongVersion) {
  EXPECT_THROW(parse("[experiment]\nkind = task-switch\n"), ConfigError);
  EXPECT_THROW(parse("version = 2\n[experiment]\nkind = task-switch\n"), ConfigError);
}

TEST(Config, RejectsMissingKindAndBadValues) {
  EXPECT_THROW(parse("version = 1\n[experiment]\nid = a\n"), ConfigError);
  EXPECT_THROW(parse("version = 1\n[experiment]\nkind = teleport\n"), ConfigError);
  EXPECT_THROW(parse("version = 1\n[experiment]\nkind = task-switch\nmetric_every = ten\n"), ConfigError);
  EXPECT_THROW(parse("version = 1\n[experiment]\nkind = task-switch\n[data]\nnoise_sigma = -1\n"), ConfigError);
  EXPECT_THROW(parse("version = 1\n[experiment]\nkind = task-switch\n[ppo]\nanneal_lr = yes\n"), ConfigError);
  EXPECT_THROW(parse("version = 1\n[experiment]\nkind = task-switch\nlearning_rates = 0.1, -1\n"), ConfigError);
}

TEST(Config, RejectsDuplicateKeys) {
  EXPECT_THROW(parse("version = 1\n[experiment]\nkind = task-switch\nid = a\nid = b\n"), ConfigError);
}

TEST(Config, ValidateCatchesInvariants) {
  auto c = default_config(ExperimentKind::kTaskSwitch);
  c.id = "a/b";
  EXPECT_THROW(c.validate(), ConfigError);
  c = default_config(ExperimentKind::kTaskSwitch);
  c.burn_in_fraction = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = default_config(ExperimentKind::kTaskSwitch);
  c.finetune.patience_steps = -1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = default_config(ExperimentKind::kPerturbation);
  c.perturbation.layer = 2;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, KindNamesRoundTrip) {
  for (auto kind : {ExperimentKind::kTaskSwitch, ExperimentKind::kPpoDormancy, ExperimentKind::kPerturbation,
                    ExperimentKind::kEquivalenceSuite, ExperimentKind::kGradientFree}) {
    EXPECT_EQ(parse_experiment_kind(experiment_kind_name(kind)), kind);
  }
}

TEST(Config, SaveAndLoad) {
  testing::TempDir dir("config");
  const auto path = (dir.path() / "a.cfg").string();
  const auto c = default_config(ExperimentKind::kEquivalenceSuite);
  save_config(path, c);
  EXPECT_EQ(load_config(path), c);
  EXPECT_THROW(load_config((dir.path() / "missing.cfg").string()), Error);
}

TEST(Config, ShippedDefaultsMatchTheDocumentedChoices) {
  const auto c = default_config(ExperimentKind::kTaskSwitch);
  EXPECT_EQ(c.learning_rates, (std::vector<double>{0.01, 0.005}));
  EXPECT_EQ(c.seeds.size(), 5u);
  EXPECT_EQ(c.metric_every, 50);
  EXPECT_EQ(c.finetune.batch_size, 0u);
  EXPECT_EQ(c.data.train_size, 1000u);
  EXPECT_EQ(c.metrics.tau_d, 0.025);
  EXPECT_EQ(c.metrics.tau_g, 1e-8);
  EXPECT_EQ(c.ppo.learning_rate, 1e-4);
  EXPECT_EQ(c.ppo.total_steps, 200000);
}

}  // namespace
}  // namespace plasticity
