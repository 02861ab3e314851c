// plasticity: command-line front end for the experiment harness.
//
// Exit codes: 0 success, 1 usage or validation failure, 2 runtime error.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "plasticity/config.hpp"
#include "plasticity/errors.hpp"
#include "plasticity/experiments.hpp"
#include "plasticity/gradcheck.hpp"
#include "plasticity/numfmt.hpp"
#include "plasticity/ppo.hpp"
#include "plasticity/seeding.hpp"
#include "plasticity/tasks.hpp"
#include "plasticity/trace_io.hpp"
#include "plasticity/train.hpp"

namespace fs = std::filesystem;
using namespace plasticity;

namespace {

// Raised when a suite or a report reports failure (exit 1, not a crash).
struct ValidationFailure : Error {
  using Error::Error;
};

ExperimentConfig config_or_default(const std::string& path, ExperimentKind kind) {
  return path.empty() ? default_config(kind) : load_config(path);
}

void apply_overrides(ExperimentConfig& c, const std::vector<std::uint64_t>& seeds, const std::string& out) {
  if (!seeds.empty()) c.seeds = seeds;
  if (!out.empty()) c.output_dir = out;
  c.validate();
}

std::string run_dir(const ExperimentConfig& c) { return (fs::path(c.output_dir) / c.id).string(); }

int cmd_gen_data(std::size_t n, std::uint64_t seed, const std::string& task, double sigma, const std::string& split,
                 const std::string& out) {
  RegressionTaskSpec spec;
  const TargetKind kind = parse_target_kind(task);
  if (kind == TargetKind::kBenchmark) {
    spec = benchmark_task(sigma);
  } else {
    spec = make_pretrain_task(kind == TargetKind::kDormancyInducing ? PretrainKind::kDormancyInducing
                                                                     : PretrainKind::kBenign,
                              seed);
  }
  if (n == 0) throw ConfigError("--n must be at least 1");
  const Dataset d = generate_dataset(spec, n, seed, parse_split(split));
  if (out.empty()) {
    write_dataset_csv(std::cout, d);
  } else {
    save_dataset(out, d);
    std::cerr << "wrote " << out << " and " << out << ".manifest\n";
  }
  return 0;
}

int cmd_train(const std::string& config_path, std::optional<std::uint64_t> seed_opt, const std::string& out,
              const std::string& pretrain) {
  ExperimentConfig c = config_or_default(config_path, ExperimentKind::kTaskSwitch);
  const std::uint64_t seed = seed_opt.value_or(c.seeds.front());
  const std::string dir = out.empty() ? (fs::path(c.output_dir) / (c.id + "-train")).string() : out;
  fs::create_directories(dir);

  RegressionTaskSpec eq = benchmark_task(c.data.noise_sigma);
  eq.input = c.data.input;
  MlpNetwork net = init_network(c.network.widths(kBenchmarkInputDim, 1), c.network.activation, derive_seed(seed, 30));
  std::int64_t offset = 0;
  if (pretrain != "none") {
    const RegressionTaskSpec spec = make_pretrain_task(
        pretrain == "dormancy-inducing" ? PretrainKind::kDormancyInducing : PretrainKind::kBenign,
        derive_seed(seed, 20));
    const Dataset data = generate_dataset(spec, c.data.train_size, derive_seed(seed, 21));
    const Tensor probe = sample_inputs(spec, c.data.probe_size, derive_seed(seed, 22));
    Optimizer opt(c.pretrain.optimizer);
    TrainConfig tc;
    tc.epochs = c.pretrain.epochs;
    tc.batch_size = c.pretrain.batch_size;
    tc.metric_every = c.metric_every;
    tc.shuffle_seed = derive_seed(seed, 23);
    tc.metrics = c.metrics;
    tc.patience_steps = c.pretrain.patience_steps;
    tc.min_improvement = c.pretrain.min_improvement;
    TrainingTrace t = train_supervised(net, data, nullptr, opt, tc, probe);
    t.experiment_id = c.id;
    save_trace((fs::path(dir) / "pretrain").string(), t);
    if (t.aborted) throw Error("pretraining aborted: " + t.diagnostic);
    offset = t.records.back().step;
  }
  const Dataset train = generate_dataset(eq, c.data.train_size, derive_seed(seed, 10), SplitTag::kTrain);
  const Dataset test = generate_dataset(eq, c.data.test_size, derive_seed(seed, 11), SplitTag::kTest);
  const Tensor probe = sample_inputs(eq, c.data.probe_size, derive_seed(seed, 12));
  Optimizer opt(c.finetune.optimizer);
  TrainConfig tc;
  tc.epochs = c.finetune.epochs;
  tc.batch_size = c.finetune.batch_size;
  tc.metric_every = c.metric_every;
  tc.task_id = pretrain == "none" ? 0 : 1;
  tc.step_offset = offset;
  tc.shuffle_seed = derive_seed(seed, 40);
  tc.metrics = c.metrics;
  tc.patience_steps = c.finetune.patience_steps;
  tc.min_improvement = c.finetune.min_improvement;
  TrainingTrace t = train_supervised(net, train, &test, opt, tc, probe);
  t.experiment_id = c.id;
  save_trace((fs::path(dir) / "train").string(), t);
  save_checkpoint((fs::path(dir) / "network.ckpt").string(), net);
  if (t.aborted) throw Error("training aborted: " + t.diagnostic);
  std::cout << "final train mse " << format_double(t.records.back().train_loss) << ", test mse "
            << format_double(*t.records.back().test_loss) << "\nwrote " << dir << '\n';
  return 0;
}

int cmd_ppo(const std::string& config_path, std::optional<std::uint64_t> seed_opt, const std::string& out) {
  ExperimentConfig c = config_or_default(config_path, ExperimentKind::kPpoDormancy);
  const std::uint64_t seed = seed_opt.value_or(c.seeds.front());
  const std::string dir = out.empty() ? (fs::path(c.output_dir) / (c.id + "-ppo")).string() : out;
  fs::create_directories(dir);
  PpoResult r = ppo_train(c.ppo, seed);
  r.trace.experiment_id = c.id;
  save_trace((fs::path(dir) / ("ppo_seed" + std::to_string(seed))).string(), r.trace);
  save_checkpoint((fs::path(dir) / "policy.ckpt").string(), r.agent.policy);
  save_checkpoint((fs::path(dir) / "value.ckpt").string(), r.agent.value);
  std::cout << "iterations " << r.trace.records.size() - 1 << ", episodes " << r.episode_returns.size() << "\nwrote "
            << dir << '\n';
  return 0;
}

int cmd_experiment(const std::string& kind_name, const std::string& config_path,
                   const std::vector<std::uint64_t>& seeds, const std::string& out) {
  const ExperimentKind kind = parse_experiment_kind(kind_name);
  ExperimentConfig c = config_or_default(config_path, kind);
  if (c.kind != kind) {
    throw ConfigError(std::string("config describes a '") + experiment_kind_name(c.kind) + "' experiment, not '" +
                      kind_name + "'");
  }
  apply_overrides(c, seeds, out);
  RunOptions opts;
  opts.output_dir = run_dir(c);
  opts.log = &std::cerr;
  const ExperimentReport rep = run_experiment(c, opts);
  write_report_text(std::cout, rep);
  std::cout << "wrote " << opts.output_dir << '\n';
  return 0;
}

int cmd_report(const std::string& dir) {
  std::ifstream manifest(fs::path(dir) / "manifest.txt");
  if (!manifest) throw Error("no manifest.txt in " + dir);
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(manifest, line)) {
    const auto eq = line.find(" = ");
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 3);
  }
  std::ifstream csv(fs::path(dir) / "report.csv");
  if (!csv) throw Error("no report.csv in " + dir);
  const auto rows = read_report_csv(csv);
  const std::string metric = kv.count("metric") ? kv["metric"] : "final_test_mse";
  std::cout << "run " << kv["id"] << " (" << kv["kind"] << "), " << rows.size() << " rows, metric " << metric
            << "\n\n";
  std::cout << "arm,learning_rate,seeds,invalid,mean,std,geometric_mean\n";
  for (const auto& a : aggregate_rows(rows, metric)) {
    std::cout << a.group << ',' << format_double(a.learning_rate) << ',' << a.seeds << ',' << a.invalid_seeds << ','
              << format_double(a.mean) << ',' << format_double(a.std) << ',' << format_double(a.geometric_mean)
              << '\n';
  }
  std::cout << "\nrecorded result: " << kv["result"] << '\n';
  return 0;
}

int cmd_check(std::size_t nets, std::uint64_t seed, const std::string& config_path) {
  const GradientSuiteResult g = gradient_check_suite(nets, seed);
  const bool grad_ok = g.passed();
  std::cout << (grad_ok ? "PASS" : "FAIL") << "  gradient check: " << g.smooth_nets << " smooth nets max error "
            << format_double(g.smooth_max_error) << " (<= 1e-5), " << g.relu_nets << " ReLU nets max error "
            << format_double(g.relu_max_error) << " (<= 1e-4), " << g.skipped_near_kink << " redrawn near a kink\n";

  ExperimentConfig c = config_or_default(config_path, ExperimentKind::kEquivalenceSuite);
  if (c.kind != ExperimentKind::kEquivalenceSuite) throw ConfigError("check expects an equivalence-suite config");
  const ExperimentReport rep = run_equivalence_suite(c);
  for (const auto& cr : rep.criteria) {
    std::cout << (cr.passed ? "PASS" : "FAIL") << "  equivalence " << cr.name << ": " << cr.detail << '\n';
  }
  if (!grad_ok || !rep.passed()) throw ValidationFailure("property suites failed");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Plasticity experiments: dormancy, zero-gradient neurons, task switching and PPO"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "0.1.0");

  std::string config_path, out;
  std::vector<std::uint64_t> seeds;
  std::optional<std::uint64_t> seed;

  auto* gen = app.add_subcommand("gen-data", "Write a regression dataset as CSV (plus manifest with --out)");
  std::size_t n = 1000;
  std::uint64_t gen_seed = 0;
  std::string task = "benchmark", split = "train";
  double sigma = 0.1;
  gen->add_option("--n", n, "Rows")->capture_default_str();
  gen->add_option("--seed", gen_seed, "Generator seed")->capture_default_str();
  gen->add_option("--task", task, "benchmark | dormancy-inducing | benign")->capture_default_str();
  gen->add_option("--sigma", sigma, "Noise std of the benchmark target")->capture_default_str();
  gen->add_option("--split", split, "train | test | probe")->capture_default_str();
  gen->add_option("--out", out, "Output CSV path (stdout when omitted)");

  auto* train = app.add_subcommand("train", "Train one network on the benchmark regression");
  std::string pretrain = "none";
  train->add_option("--config", config_path, "Experiment config file");
  train->add_option("--seed", seed, "Seed (defaults to the first configured seed)");
  train->add_option("--out", out, "Output directory");
  train->add_option("--pretrain", pretrain, "none | dormancy-inducing | benign")
      ->check(CLI::IsMember({"none", "dormancy-inducing", "benign"}))
      ->capture_default_str();

  auto* ppo = app.add_subcommand("ppo", "Run PPO on the toy point-mass environment");
  ppo->add_option("--config", config_path, "Experiment config file");
  ppo->add_option("--seed", seed, "Seed (defaults to the first configured seed)");
  ppo->add_option("--out", out, "Output directory");

  auto* exp = app.add_subcommand("experiment", "Run an experiment: task-switch, ppo-dormancy, perturbation, "
                                               "equivalence-suite");
  std::string kind;
  exp->add_option("kind", kind, "Experiment kind")->required();
  exp->add_option("--config", config_path, "Experiment config file (kind defaults when omitted)");
  exp->add_option("--seed", seeds, "Seed list overriding the config");
  exp->add_option("--out", out, "Output root; the run directory is <out>/<id>");

  auto* report = app.add_subcommand("report", "Recompute the arm table of a finished run");
  std::string in;
  report->add_option("--in", in, "Run directory")->required();

  auto* check = app.add_subcommand("check", "Run the gradient-check and equivalence property suites");
  std::size_t nets = 200;
  std::uint64_t check_seed = 0;
  check->add_option("--nets", nets, "Random nets for the gradient check")->capture_default_str();
  check->add_option("--seed", check_seed, "Seed of the gradient-check draws")->capture_default_str();
  check->add_option("--config", config_path, "Equivalence-suite config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return 1;
  }

  try {
    if (*gen) return cmd_gen_data(n, gen_seed, task, sigma, split, out);
    if (*train) return cmd_train(config_path, seed, out, pretrain);
    if (*ppo) return cmd_ppo(config_path, seed, out);
    if (*exp) return cmd_experiment(kind, config_path, seeds, out);
    if (*report) return cmd_report(in);
    if (*check) return cmd_check(nets, check_seed, config_path);
  } catch (const ValidationFailure& e) {
    std::cerr << "plasticity: " << e.what() << '\n';
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "plasticity: invalid configuration: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "plasticity: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
