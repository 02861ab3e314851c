#include "plasticity/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include "plasticity/errors.hpp"
#include "plasticity/numfmt.hpp"
#include "plasticity/ppo.hpp"
#include "plasticity/seeding.hpp"
#include "plasticity/trace_io.hpp"

namespace plasticity {

namespace fs = std::filesystem;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Seed streams. Every arm of a seed shares the same data and initial weights.
enum Stream : std::uint64_t {
  kTrainData = 10,
  kTestData = 11,
  kProbeData = 12,
  kPretrainTask = 20,
  kPretrainData = 21,
  kPretrainProbe = 22,
  kPretrainShuffle = 23,
  kPretrainTest = 24,
  kInitWeights = 30,
  kFinetuneShuffle = 40,
  kPerturbNoise = 50,
};

void say(const RunOptions& o, const std::string& msg) {
  if (o.log) *o.log << msg << std::endl;
}

std::string lr_tag(double lr) { return "lr" + format_double(lr); }

std::size_t required_seeds(std::size_t n) {
  // "at least 4 of 5": 80% rounded up.
  return static_cast<std::size_t>(std::ceil(0.8 * static_cast<double>(n) - 1e-12));
}

RegressionTaskSpec benchmark_spec(const ExperimentConfig& c) {
  RegressionTaskSpec s = benchmark_task(c.data.noise_sigma);
  s.input = c.data.input;
  return s;
}

const LayerSnapshot* last_snapshot(const TrainingTrace& t, const std::string& network, std::size_t layer) {
  const auto series = t.series(network, layer);
  return series.empty() ? nullptr : series.back();
}

const LayerSnapshot* first_snapshot(const TrainingTrace& t, const std::string& network, std::size_t layer) {
  const auto series = t.series(network, layer);
  return series.empty() ? nullptr : series.front();
}

TrainConfig phase_train_config(const ExperimentConfig& c, const PhaseConfig& p, int task, std::uint64_t shuffle) {
  TrainConfig tc;
  tc.epochs = p.epochs;
  tc.batch_size = p.batch_size;
  tc.metric_every = c.metric_every;
  tc.task_id = task;
  tc.shuffle_seed = shuffle;
  tc.metrics = c.metrics;
  tc.patience_steps = p.patience_steps;
  tc.min_improvement = p.min_improvement;
  return tc;
}

double geometric_mean_ratio(const std::vector<double>& num, const std::vector<double>& den) {
  if (num.empty() || num.size() != den.size()) return kNaN;
  double acc = 0.0;
  for (std::size_t i = 0; i < num.size(); ++i) acc += std::log(num[i]) - std::log(den[i]);
  return std::exp(acc / static_cast<double>(num.size()));
}

const ReportRow* find_row(const std::vector<ReportRow>& rows, const std::string& group, double lr,
                          std::uint64_t seed) {
  for (const auto& r : rows) {
    if (r.group == group && r.learning_rate == lr && r.seed == seed) return &r;
  }
  return nullptr;
}

const ArmAggregate* find_aggregate(const std::vector<ArmAggregate>& aggs, const std::string& group, double lr) {
  for (const auto& a : aggs) {
    if (a.group == group && a.learning_rate == lr) return &a;
  }
  return nullptr;
}

std::string csv_safe(std::string s) {
  for (char& ch : s) {
    if (ch == ',' || ch == '\n' || ch == '\r') ch = ';';
  }
  return s;
}

}  // namespace

double ReportRow::value(const std::string& name) const {
  for (const auto& [k, v] : values) {
    if (k == name) return v;
  }
  return kNaN;
}

bool ExperimentReport::passed() const {
  return std::all_of(criteria.begin(), criteria.end(), [](const CriterionResult& c) { return c.passed; });
}

std::vector<ArmAggregate> aggregate_rows(const std::vector<ReportRow>& rows, const std::string& metric) {
  std::vector<ArmAggregate> out;
  std::vector<std::vector<double>> samples;
  for (const auto& r : rows) {
    auto it = std::find_if(out.begin(), out.end(), [&](const ArmAggregate& a) {
      return a.group == r.group && a.learning_rate == r.learning_rate;
    });
    if (it == out.end()) {
      ArmAggregate a;
      a.group = r.group;
      a.learning_rate = r.learning_rate;
      a.metric = metric;
      out.push_back(a);
      samples.emplace_back();
      it = out.end() - 1;
    }
    const auto k = static_cast<std::size_t>(it - out.begin());
    const double v = r.value(metric);
    if (r.valid && std::isfinite(v)) {
      samples[k].push_back(v);
    } else {
      ++it->invalid_seeds;
    }
  }
  for (std::size_t k = 0; k < out.size(); ++k) {
    const auto& s = samples[k];
    auto& a = out[k];
    a.seeds = s.size();
    if (s.empty()) {
      a.mean = a.std = a.geometric_mean = kNaN;
      continue;
    }
    double sum = 0.0, log_sum = 0.0;
    bool positive = true;
    for (double v : s) {
      sum += v;
      if (v > 0.0) {
        log_sum += std::log(v);
      } else {
        positive = false;
      }
    }
    a.mean = sum / static_cast<double>(s.size());
    double ss = 0.0;
    for (double v : s) ss += (v - a.mean) * (v - a.mean);
    a.std = s.size() > 1 ? std::sqrt(ss / static_cast<double>(s.size() - 1)) : 0.0;
    a.geometric_mean = positive ? std::exp(log_sum / static_cast<double>(s.size())) : kNaN;
  }
  return out;
}

void write_report_text(std::ostream& os, const ExperimentReport& report) {
  os << "experiment " << report.experiment_id << " (" << experiment_kind_name(report.kind) << ")\n";
  os << "metric: " << report.metric << "\n\n";
  os << std::left << std::setw(22) << "arm" << std::setw(10) << "lr" << std::setw(7) << "seeds" << std::setw(9)
     << "invalid" << std::setw(24) << "mean" << std::setw(24) << "std" << "geo_mean\n";
  for (const auto& a : report.aggregates) {
    os << std::left << std::setw(22) << a.group << std::setw(10) << format_double(a.learning_rate) << std::setw(7)
       << a.seeds << std::setw(9) << a.invalid_seeds << std::setw(24) << format_double(a.mean) << std::setw(24)
       << format_double(a.std) << format_double(a.geometric_mean) << '\n';
  }
  os << "\ncriteria:\n";
  for (const auto& c : report.criteria) {
    os << "  " << (c.passed ? "PASS" : "FAIL") << "  " << c.name << ": " << c.detail << '\n';
  }
  bool flagged = false;
  for (const auto& r : report.rows) {
    if (r.valid && r.note.empty()) continue;
    if (!flagged) os << "\nflagged rows:\n";
    flagged = true;
    os << "  " << r.group << " " << lr_tag(r.learning_rate) << " seed " << r.seed << (r.valid ? "" : " [invalid]")
       << ": " << r.note << '\n';
  }
  if (!report.notes.empty()) {
    os << "\nnotes:\n";
    for (const auto& n : report.notes) os << "  - " << n << '\n';
  }
  os << "\nresult: " << (report.passed() ? "PASS" : "FAIL") << '\n';
}

void write_report_csv(std::ostream& os, const ExperimentReport& report) {
  os << "group,learning_rate,seed,valid,name,value,note\n";
  for (const auto& r : report.rows) {
    for (const auto& [name, v] : r.values) {
      os << csv_safe(r.group) << ',' << format_double(r.learning_rate) << ',' << r.seed << ',' << (r.valid ? 1 : 0)
         << ',' << csv_safe(name) << ',' << format_double(v) << ',' << csv_safe(r.note) << '\n';
    }
  }
}

std::vector<ReportRow> read_report_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "group,learning_rate,seed,valid,name,value,note") {
    throw FormatError("report CSV header mismatch");
  }
  std::vector<ReportRow> rows;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (line.back() == ',') f.emplace_back();
    if (f.size() != 7) throw FormatError("report CSV line " + std::to_string(line_no) + ": expected 7 fields");
    const double lr = parse_double(f[1]);
    const auto seed = parse_uint(f[2]);
    if (rows.empty() || rows.back().group != f[0] || rows.back().learning_rate != lr || rows.back().seed != seed) {
      ReportRow r;
      r.group = f[0];
      r.learning_rate = lr;
      r.seed = seed;
      r.valid = f[3] == "1";
      r.note = f[6];
      rows.push_back(std::move(r));
    }
    rows.back().values.emplace_back(f[4], parse_double(f[5]));
  }
  return rows;
}

std::size_t last_hidden_layer(const MlpNetwork& net) {
  if (net.depth() < 2) throw ConfigError("network has no hidden layer");
  return net.depth() - 2;
}

PersistenceResult persistence(const TrainingTrace& trace, SetKind kind, const std::string& network, std::size_t layer,
                              std::int64_t from_step) {
  const auto series = trace.series(network, layer);
  PersistenceResult r;
  auto set_of = [kind](const LayerSnapshot* s) {
    return mask_to_set(kind == SetKind::kDormant ? s->dormancy.dormant_mask : s->gradient.zero_grad_mask);
  };
  for (std::size_t i = 1; i < series.size(); ++i) {
    if (series[i]->step < from_step) continue;
    const auto o = overlap(set_of(series[i]), set_of(series[i - 1]));
    ++r.pairs;
    if (o.degenerate) {
      ++r.degenerate_pairs;
    }
    r.min_overlap = std::min(r.min_overlap, o.coefficient);
  }
  return r;
}

void perturb_neurons(MlpNetwork& net, std::size_t layer, const IndexSet& neurons, double eta, std::mt19937_64& rng) {
  if (layer >= net.depth()) throw ShapeError("perturb_neurons: layer out of range");
  if (!(eta >= 0.0)) throw ConfigError("perturbation eta must be non-negative");
  if (eta == 0.0 || neurons.empty()) return;
  LayerSpec& l = net.layers[layer];
  const double scale = eta * moment_stats(l.weights.values()).std;
  std::normal_distribution<double> noise(0.0, 1.0);
  for (auto i : neurons) {
    if (i >= l.n_out) throw ShapeError("perturb_neurons: neuron index out of range");
    for (std::size_t j = 0; j < l.n_in; ++j) l.weights.at(i, j) += scale * noise(rng);
  }
}

MlpNetwork random_equivalence_net(const EquivalenceConfig& limits, std::size_t input_dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> depth_dist(1, limits.max_hidden_layers);
  std::uniform_int_distribution<std::size_t> width_dist(1, limits.max_width);
  std::vector<std::size_t> widths{input_dim};
  const std::size_t depth = depth_dist(rng);
  for (std::size_t k = 0; k < depth; ++k) widths.push_back(width_dist(rng));
  widths.push_back(1);
  MlpNetwork net = init_network(widths, Activation::kRelu, derive_seed(seed, 1));
  // Nonpositive biases: a unit is active on a row only if its weighted input is
  // positive there. A quarter of the units get a strongly negative bias so that
  // dead units are common.
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t l = 0; l + 1 < net.depth(); ++l) {
    for (auto& b : net.layers[l].bias.values()) b = u(rng) < 0.25 ? -(2.0 + 4.0 * u(rng)) : -0.5 * u(rng);
  }
  return net;
}

// ---------------------------------------------------------------------------
// task switch

ExperimentReport run_task_switch(const ExperimentConfig& c, const RunOptions& o) {
  c.validate();
  ExperimentReport rep;
  rep.experiment_id = c.id;
  rep.kind = ExperimentKind::kTaskSwitch;
  rep.metric = "final_test_mse";

  const RegressionTaskSpec eq = benchmark_spec(c);
  const auto widths = c.network.widths(kBenchmarkInputDim, 1);
  const std::size_t last = widths.size() - 3;

  struct Arm {
    const char* name;
    std::optional<PretrainKind> pretrain;
  };
  const Arm arms[] = {{"dormancy-pretrained", PretrainKind::kDormancyInducing},
                      {"benign-pretrained", PretrainKind::kBenign},
                      {"random-init", std::nullopt}};

  for (const auto seed : c.seeds) {
    const Dataset train = generate_dataset(eq, c.data.train_size, derive_seed(seed, kTrainData), SplitTag::kTrain);
    const Dataset test = generate_dataset(eq, c.data.test_size, derive_seed(seed, kTestData), SplitTag::kTest);
    const Tensor probe = sample_inputs(eq, c.data.probe_size, derive_seed(seed, kProbeData));
    const MlpNetwork init = init_network(widths, c.network.activation, derive_seed(seed, kInitWeights));

    for (const auto& arm : arms) {
      MlpNetwork net = init;
      std::int64_t offset = 0;
      bool valid = true;
      std::string note;
      double pre_dormant = kNaN, pre_zero_grad = kNaN, pre_loss = kNaN;
      if (arm.pretrain) {
        const RegressionTaskSpec spec = make_pretrain_task(*arm.pretrain, derive_seed(seed, kPretrainTask));
        const Dataset pre = generate_dataset(spec, c.data.train_size, derive_seed(seed, kPretrainData));
        const Tensor pre_probe = sample_inputs(spec, c.data.probe_size, derive_seed(seed, kPretrainProbe));
        Optimizer opt(c.pretrain.optimizer);
        TrainConfig tc = phase_train_config(c, c.pretrain, 0, derive_seed(seed, kPretrainShuffle));
        say(o, std::string("seed ") + std::to_string(seed) + ": pretraining " + arm.name);
        TrainingTrace t = train_supervised(net, pre, nullptr, opt, tc, pre_probe);
        t.experiment_id = c.id;
        if (t.aborted) {
          valid = false;
          note = "pretraining aborted: " + t.diagnostic;
        }
        const LayerSnapshot* s = last_snapshot(t, tc.network_name, last);
        pre_dormant = s->dormancy.dormant_fraction;
        pre_zero_grad = s->gradient.zero_grad_fraction;
        pre_loss = t.records.back().train_loss;
        offset = t.records.back().step;
        if (*arm.pretrain == PretrainKind::kDormancyInducing && pre_dormant < c.dormancy_floor) {
          valid = false;
          note = "dormancy floor missed: last hidden layer dormant fraction " + format_double(pre_dormant) + " < " +
                 format_double(c.dormancy_floor);
        }
        rep.traces.emplace_back(std::string(arm.name) + "_pretrain_seed" + std::to_string(seed), std::move(t));
      }

      for (const double lr : c.learning_rates) {
        MlpNetwork ft = net;
        OptimizerConfig oc = c.finetune.optimizer;
        oc.learning_rate = lr;
        Optimizer opt(oc);
        TrainConfig tc = phase_train_config(c, c.finetune, 1, derive_seed(seed, kFinetuneShuffle));
        tc.step_offset = offset;
        TrainingTrace t = train_supervised(ft, train, &test, opt, tc, probe);
        t.experiment_id = c.id;

        ReportRow row;
        row.group = arm.name;
        row.learning_rate = lr;
        row.seed = seed;
        row.valid = valid;
        row.note = note;
        if (t.aborted) {
          row.valid = false;
          row.note = "fine-tuning aborted: " + t.diagnostic;
        }
        const LayerSnapshot* first = first_snapshot(t, tc.network_name, last);
        const LayerSnapshot* end = last_snapshot(t, tc.network_name, last);
        // Burn-in is measured on the steps actually run, since fine-tuning
        // may stop at convergence before the epoch cap.
        const std::int64_t ran = t.records.back().step - offset;
        const auto burn_in = static_cast<std::int64_t>(std::ceil(c.burn_in_fraction * static_cast<double>(ran)));
        const auto pers = persistence(t, SetKind::kZeroGradient, tc.network_name, last, offset + burn_in);
        const auto pers_d = persistence(t, SetKind::kDormant, tc.network_name, last, offset + burn_in);
        row.values = {
            {"final_test_mse", t.aborted ? kNaN : *t.records.back().test_loss},
            {"final_train_mse", t.aborted ? kNaN : t.records.back().train_loss},
            {"initial_test_mse", *t.records.front().test_loss},
            {"pretrain_final_loss", pre_loss},
            {"pretrain_dormant_fraction", pre_dormant},
            {"pretrain_zero_grad_fraction", pre_zero_grad},
            {"switch_dormant_fraction", first->dormancy.dormant_fraction},
            {"switch_zero_grad_fraction", first->gradient.zero_grad_fraction},
            {"final_dormant_fraction", end->dormancy.dormant_fraction},
            {"final_zero_grad_fraction", end->gradient.zero_grad_fraction},
            {"zero_grad_persistence_min", pers.min_overlap},
            {"zero_grad_persistence_pairs", static_cast<double>(pers.pairs)},
            {"zero_grad_persistence_degenerate", static_cast<double>(pers.degenerate_pairs)},
            {"dormant_persistence_min", pers_d.min_overlap},
        };
        say(o, std::string("seed ") + std::to_string(seed) + " " + arm.name + " " + lr_tag(lr) +
                   ": final test mse " + format_double(row.value("final_test_mse")));
        rep.rows.push_back(std::move(row));
        rep.traces.emplace_back(std::string(arm.name) + "_" + lr_tag(lr) + "_seed" + std::to_string(seed),
                                std::move(t));
      }
    }
  }
  rep.aggregates = aggregate_rows(rep.rows, rep.metric);

  // The dormancy floor is a precondition, reported once per run.
  {
    std::size_t reached = 0;
    for (const auto seed : c.seeds) {
      const ReportRow* r = find_row(rep.rows, arms[0].name, c.learning_rates.front(), seed);
      if (r && r->value("pretrain_dormant_fraction") >= c.dormancy_floor) ++reached;
    }
    rep.criteria.push_back({"dormancy floor", reached == c.seeds.size(),
                            std::to_string(reached) + "/" + std::to_string(c.seeds.size()) +
                                " seeds reach last-hidden-layer dormant fraction >= " +
                                format_double(c.dormancy_floor)});
  }
  for (const double lr : c.learning_rates) {
    std::vector<double> d, r;
    for (const auto seed : c.seeds) {
      const ReportRow* rd = find_row(rep.rows, arms[0].name, lr, seed);
      const ReportRow* rr = find_row(rep.rows, arms[2].name, lr, seed);
      if (rd && rr && rd->valid && rr->valid) {
        d.push_back(rd->value("final_test_mse"));
        r.push_back(rr->value("final_test_mse"));
      }
    }
    const double ratio = geometric_mean_ratio(d, r);
    rep.criteria.push_back({"mse ratio " + lr_tag(lr), d.size() == c.seeds.size() && ratio <= c.max_mse_ratio,
                            "geometric-mean final test MSE dormancy-pretrained / random-init = " +
                                format_double(ratio) + " over " + std::to_string(d.size()) + " paired seeds (<= " +
                                format_double(c.max_mse_ratio) + ")"});

    const ArmAggregate* ad = find_aggregate(rep.aggregates, arms[0].name, lr);
    const ArmAggregate* ar = find_aggregate(rep.aggregates, arms[2].name, lr);
    if (ad && ar) {
      const bool overlap_bands = std::abs(ad->mean - ar->mean) <= ad->std + ar->std;
      rep.notes.push_back(lr_tag(lr) + ": +-1 std bands of dormancy-pretrained and random-init " +
                          (overlap_bands ? "overlap" : "do not overlap") + " (" + format_double(ad->mean) + " +- " +
                          format_double(ad->std) + " vs " + format_double(ar->mean) + " +- " +
                          format_double(ar->std) + ")");
    }

    std::size_t persisting = 0, applicable = 0;
    for (const auto seed : c.seeds) {
      const ReportRow* rd = find_row(rep.rows, arms[0].name, lr, seed);
      if (!rd || !rd->valid) continue;
      const double pairs = rd->value("zero_grad_persistence_pairs");
      const double degenerate = rd->value("zero_grad_persistence_degenerate");
      if (pairs > degenerate) {
        ++applicable;
        if (rd->value("zero_grad_persistence_min") >= c.persistence_threshold) ++persisting;
      }
    }
    const std::size_t need = required_seeds(c.seeds.size());
    rep.criteria.push_back({"zero-grad persistence " + lr_tag(lr), persisting >= need,
                            std::to_string(persisting) + "/" + std::to_string(c.seeds.size()) +
                                " seeds keep consecutive overlap >= " + format_double(c.persistence_threshold) +
                                " after " + format_double(c.burn_in_fraction) +
                                " burn-in on the dormancy-pretrained arm (" + std::to_string(applicable) +
                                " with a non-empty set; need " + std::to_string(need) + ")"});
  }
  rep.notes.push_back(
      "arms: dormancy-pretrained stands in for a value network pretrained with ReLU units (high dormancy), "
      "benign-pretrained for one pretrained without activations, random-init is untrained");
  rep.notes.push_back("all arms of a seed share initial weights, fine-tuning data, probe batch and shuffle order");
  return rep;
}

// ---------------------------------------------------------------------------
// perturbation

ExperimentReport run_perturbation(const ExperimentConfig& c, const RunOptions& o) {
  c.validate();
  ExperimentReport rep;
  rep.experiment_id = c.id;
  rep.kind = ExperimentKind::kPerturbation;
  rep.metric = "final_test_mse";

  const auto widths = c.network.widths(kBenchmarkInputDim, 1);
  const int hidden = static_cast<int>(c.network.hidden.size());
  const auto layer = static_cast<std::size_t>(c.perturbation.layer < 0 ? hidden + c.perturbation.layer
                                                                       : c.perturbation.layer);

  bool identical_everywhere = true;
  for (const auto seed : c.seeds) {
    const RegressionTaskSpec spec =
        make_pretrain_task(PretrainKind::kDormancyInducing, derive_seed(seed, kPretrainTask));
    const Dataset pre = generate_dataset(spec, c.data.train_size, derive_seed(seed, kPretrainData));
    const Dataset pre_test =
        generate_dataset(spec, c.data.test_size, derive_seed(seed, kPretrainTest), SplitTag::kTest);
    const Tensor pre_probe = sample_inputs(spec, c.data.probe_size, derive_seed(seed, kPretrainProbe));
    MlpNetwork base = init_network(widths, c.network.activation, derive_seed(seed, kInitWeights));
    Optimizer pre_opt(c.pretrain.optimizer);
    TrainConfig pre_tc = phase_train_config(c, c.pretrain, 0, derive_seed(seed, kPretrainShuffle));
    say(o, "seed " + std::to_string(seed) + ": pretraining");
    TrainingTrace pre_trace = train_supervised(base, pre, &pre_test, pre_opt, pre_tc, pre_probe);
    pre_trace.experiment_id = c.id;
    const std::int64_t offset = pre_trace.records.back().step;
    const bool pre_ok = !pre_trace.aborted;
    rep.traces.emplace_back("pretrain_seed" + std::to_string(seed), std::move(pre_trace));

    const auto zg = magi(base, pre_probe, layer, c.metrics.tau_g, c.metrics.magi_target);
    const IndexSet targets = mask_to_set(zg.zero_grad_mask);

    for (const double lr : c.learning_rates) {
      struct Arm {
        std::string name;
        std::optional<double> eta;
      };
      const std::vector<Arm> arms = {{"control", std::nullopt}, {"perturbed", c.perturbation.eta}, {"eta-zero", 0.0}};
      MlpNetwork control_final;
      for (const auto& arm : arms) {
        MlpNetwork net = base;
        std::mt19937_64 rng(derive_seed(seed, kPerturbNoise));
        double left = 0.0;
        if (arm.eta) {
          perturb_neurons(net, layer, targets, *arm.eta, rng);
          const auto after = magi(net, pre_probe, layer, c.metrics.tau_g, c.metrics.magi_target);
          for (auto i : targets) left += after.zero_grad_mask[i] ? 0.0 : 1.0;
        }
        const bool identical_at_start = bit_identical(net, base);
        OptimizerConfig oc = c.finetune.optimizer;
        oc.learning_rate = lr;
        Optimizer opt(oc);
        TrainConfig tc = phase_train_config(c, c.finetune, 0, derive_seed(seed, kFinetuneShuffle));
        tc.step_offset = offset;
        TrainingTrace t = train_supervised(net, pre, &pre_test, opt, tc, pre_probe);
        t.experiment_id = c.id;

        ReportRow row;
        row.group = arm.name;
        row.learning_rate = lr;
        row.seed = seed;
        row.valid = pre_ok && !t.aborted && !targets.empty();
        if (!pre_ok) row.note = "pretraining aborted";
        if (t.aborted) row.note = "continued training aborted: " + t.diagnostic;
        if (targets.empty()) row.note = "not applicable: empty zero-gradient set";
        double identical = kNaN;
        if (arm.name == "control") {
          control_final = net;
        } else if (arm.name == "eta-zero") {
          identical = bit_identical(net, control_final) ? 1.0 : 0.0;
          identical_everywhere = identical_everywhere && identical == 1.0;
        }
        row.values = {
            {"final_test_mse", t.records.back().test_loss.value_or(kNaN)},
            {"final_train_mse", t.records.back().train_loss},
            {"switch_test_mse", t.records.front().test_loss.value_or(kNaN)},
            {"zero_grad_neurons", static_cast<double>(targets.size())},
            {"neurons_left_zero_grad", left},
            {"unchanged_before_training", identical_at_start ? 1.0 : 0.0},
            {"bit_identical_to_control", identical},
        };
        say(o, "seed " + std::to_string(seed) + " " + arm.name + " " + lr_tag(lr) + ": final test mse " +
                   format_double(row.value("final_test_mse")));
        rep.rows.push_back(std::move(row));
        rep.traces.emplace_back(arm.name + "_" + lr_tag(lr) + "_seed" + std::to_string(seed), std::move(t));
      }
    }
  }
  rep.aggregates = aggregate_rows(rep.rows, rep.metric);
  rep.criteria.push_back({"eta=0 bit-identical", identical_everywhere,
                          identical_everywhere ? "eta = 0 arm matches the control bit for bit on every seed"
                                               : "eta = 0 arm diverged from the control"});
  for (const double lr : c.learning_rates) {
    std::vector<double> p, q;
    std::size_t not_applicable = 0;
    for (const auto seed : c.seeds) {
      const ReportRow* rp = find_row(rep.rows, "perturbed", lr, seed);
      const ReportRow* rc = find_row(rep.rows, "control", lr, seed);
      if (rp && rc && rp->valid && rc->valid) {
        p.push_back(rp->value("final_test_mse"));
        q.push_back(rc->value("final_test_mse"));
      } else {
        ++not_applicable;
      }
    }
    const double ratio = geometric_mean_ratio(p, q);
    rep.criteria.push_back({"perturbed / control loss " + lr_tag(lr),
                            !p.empty() && ratio <= c.perturbation.max_loss_ratio,
                            "geometric-mean final test MSE ratio " + format_double(ratio) + " over " +
                                std::to_string(p.size()) + " seeds (<= " +
                                format_double(c.perturbation.max_loss_ratio) + "), " +
                                std::to_string(not_applicable) + " not applicable"});
  }
  rep.notes.push_back("network pretrained on the dormancy-inducing task; noise std = eta * std of the layer's weights, "
                      "added to the incoming weights of the layer's zero-gradient neurons; both arms then continue on "
                      "the same task with the same data order");
  return rep;
}

// ---------------------------------------------------------------------------
// equivalence suite

ExperimentReport run_equivalence_suite(const ExperimentConfig& c, const RunOptions& o) {
  c.validate();
  ExperimentReport rep;
  rep.experiment_id = c.id;
  rep.kind = ExperimentKind::kEquivalenceSuite;
  rep.metric = "violations";
  const std::uint64_t base = c.seeds.front();
  const auto& lim = c.equivalence;

  auto check_all_hidden = [&](const MlpNetwork& net, const Tensor& batch, const std::string& group, std::uint64_t id) {
    ReportRow row;
    row.group = group;
    row.seed = id;
    double neurons = 0, dormant = 0, zero_grad = 0, violations = 0, strict = 0, negative = 0;
    double min_overlap = 1.0;
    for (std::size_t l = 0; l + 1 < net.depth(); ++l) {
      const auto r = equivalence_check(net, batch, l, 0.0, 0.0);
      neurons += static_cast<double>(r.dormant_mask.size());
      dormant += static_cast<double>(r.dormant_count);
      zero_grad += static_cast<double>(mask_to_set(r.zero_grad_mask).size());
      violations += static_cast<double>(r.violations.size());
      strict += static_cast<double>(r.strict_violations.size());
      negative += static_cast<double>(r.strictly_negative_count);
      min_overlap = std::min(min_overlap, r.overlap.coefficient);
    }
    row.values = {{"violations", violations},
                  {"strict_violations", strict},
                  {"hidden_layers", static_cast<double>(net.depth() - 1)},
                  {"neurons", neurons},
                  {"dormant", dormant},
                  {"zero_grad", zero_grad},
                  {"strictly_negative", negative},
                  {"min_overlap", min_overlap},
                  {"rows", static_cast<double>(batch.rows())}};
    return row;
  };

  std::uniform_int_distribution<std::size_t> dim_dist(1, lim.max_width);
  std::uniform_int_distribution<std::size_t> rows_dist(1, lim.max_rows);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto random_batch = [&](std::mt19937_64& rng, std::size_t input_dim) {
    Tensor x({rows_dist(rng), input_dim});
    for (auto& v : x.values()) v = gauss(rng);
    return x;
  };

  say(o, "random ReLU nets: " + std::to_string(lim.random_nets));
  for (std::size_t i = 0; i < lim.random_nets; ++i) {
    std::mt19937_64 rng(derive_seed(base, 1000 + i));
    const std::size_t input_dim = dim_dist(rng);
    const MlpNetwork net = random_equivalence_net(lim, input_dim, derive_seed(base, 2000 + i));
    rep.rows.push_back(check_all_hidden(net, random_batch(rng, input_dim), "random-relu", i));
  }

  // No rectification: activations are almost surely nonzero, so both sets
  // should be empty.
  const std::size_t identity_nets = std::max<std::size_t>(1, lim.random_nets / 10);
  for (std::size_t i = 0; i < identity_nets; ++i) {
    std::mt19937_64 rng(derive_seed(base, 3000 + i));
    const std::size_t input_dim = dim_dist(rng);
    std::vector<std::size_t> widths{input_dim};
    for (std::size_t k = 0; k < lim.max_hidden_layers; ++k) widths.push_back(dim_dist(rng));
    widths.push_back(1);
    const MlpNetwork net = init_network(widths, Activation::kIdentity, derive_seed(base, 4000 + i));
    rep.rows.push_back(check_all_hidden(net, random_batch(rng, input_dim), "identity", i));
  }

  say(o, "trained nets: " + std::to_string(lim.trained_nets));
  const auto widths = c.network.widths(kBenchmarkInputDim, 1);
  for (std::size_t j = 0; j < lim.trained_nets; ++j) {
    const std::uint64_t s = derive_seed(base, 5000 + j);
    const RegressionTaskSpec spec = make_pretrain_task(PretrainKind::kDormancyInducing, derive_seed(s, kPretrainTask));
    const Dataset data = generate_dataset(spec, c.data.train_size, derive_seed(s, kPretrainData));
    const Tensor probe = sample_inputs(spec, c.data.probe_size, derive_seed(s, kPretrainProbe));
    MlpNetwork net = init_network(widths, c.network.activation, derive_seed(s, kInitWeights));
    Optimizer opt(c.pretrain.optimizer);
    TrainConfig tc = phase_train_config(c, c.pretrain, 0, derive_seed(s, kPretrainShuffle));
    tc.metric_every = std::numeric_limits<std::int64_t>::max();
    const TrainingTrace t = train_supervised(net, data, nullptr, opt, tc, probe);
    ReportRow row = check_all_hidden(net, probe, "trained", j);
    if (t.aborted) {
      row.valid = false;
      row.note = "training aborted: " + t.diagnostic;
    }
    rep.rows.push_back(std::move(row));
  }
  rep.aggregates = aggregate_rows(rep.rows, rep.metric);

  auto total = [&](const std::string& group, const std::string& name) {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& r : rep.rows) {
      if (r.group == group) {
        s += r.value(name);
        n += r.valid ? 0 : 1;
      }
    }
    return std::pair{s, n};
  };
  for (const char* group : {"random-relu", "trained"}) {
    const auto [v, invalid] = total(group, "violations");
    const auto [sv, _] = total(group, "strict_violations");
    const auto [dormant, __] = total(group, "dormant");
    rep.criteria.push_back({std::string(group) + " nets: zero violations", v == 0.0 && sv == 0.0 && invalid == 0,
                            format_double(v) + " violations, " + format_double(sv) + " strict violations, " +
                                format_double(dormant) + " dormant neurons checked"});
  }
  {
    double min_overlap = 1.0, dormant = 0.0;
    for (const auto& r : rep.rows) {
      if (r.group != "trained") continue;
      min_overlap = std::min(min_overlap, r.value("min_overlap"));
      dormant += r.value("dormant");
    }
    rep.criteria.push_back({"trained nets: dormant / zero-grad overlap", min_overlap == 1.0 && dormant > 0.0,
                            "minimum overlap " + format_double(min_overlap) + " across hidden layers"});
  }
  {
    const auto [dormant, _] = total("identity", "dormant");
    const auto [zero_grad, __] = total("identity", "zero_grad");
    rep.criteria.push_back({"identity nets: both sets empty", dormant == 0.0 && zero_grad == 0.0,
                            format_double(dormant) + " dormant, " + format_double(zero_grad) + " zero-gradient"});
  }
  rep.notes.push_back("exact thresholds: tau_d = tau_g = 0; every hidden layer of every net is checked");
  rep.notes.push_back("a violation is a neuron in exactly one of {dormant} and {zero gradient with a zero activation}; "
                      "a strict violation is an all-negative-preactivation neuron missing from either set");
  return rep;
}

// ---------------------------------------------------------------------------
// PPO

ExperimentReport run_ppo_dormancy(const ExperimentConfig& c, const RunOptions& o) {
  c.validate();
  ExperimentReport rep;
  rep.experiment_id = c.id;
  rep.kind = ExperimentKind::kPpoDormancy;
  rep.metric = "pearson";
  const std::size_t hidden = c.ppo.hidden.size();

  for (const auto seed : c.seeds) {
    say(o, "seed " + std::to_string(seed) + ": PPO for " + std::to_string(c.ppo.total_steps) + " steps");
    PpoResult res = ppo_train(c.ppo, seed);
    res.trace.experiment_id = c.id;
    for (const char* net : {"policy", "value"}) {
      for (std::size_t l = 0; l < hidden; ++l) {
        const auto series = res.trace.series(net, l);
        std::vector<double> d, g;
        for (const auto* s : series) {
          d.push_back(s->dormancy.dormant_fraction);
          g.push_back(s->gradient.zero_grad_fraction);
        }
        const double mean_d = d.empty() ? kNaN : std::accumulate(d.begin(), d.end(), 0.0) / d.size();
        const double mean_g = g.empty() ? kNaN : std::accumulate(g.begin(), g.end(), 0.0) / g.size();
        const auto pz = persistence(res.trace, SetKind::kZeroGradient, net, l, 0);
        ReportRow row;
        row.group = std::string(net) + "_l" + std::to_string(l);
        row.learning_rate = c.ppo.learning_rate;
        row.seed = seed;
        row.values = {{"pearson", pearson_correlation(d, g)},
                      {"mean_dormant_fraction", mean_d},
                      {"mean_zero_grad_fraction", mean_g},
                      {"final_dormant_fraction", d.empty() ? kNaN : d.back()},
                      {"final_zero_grad_fraction", g.empty() ? kNaN : g.back()},
                      {"zero_grad_persistence_min", pz.min_overlap},
                      {"snapshots", static_cast<double>(d.size())}};
        if (std::isnan(row.value("pearson"))) row.note = "constant series: correlation undefined";
        rep.rows.push_back(std::move(row));
      }
    }
    double final_return = kNaN;
    for (auto it = res.trace.records.rbegin(); it != res.trace.records.rend(); ++it) {
      if (it->episodic_return) {
        final_return = *it->episodic_return;
        break;
      }
    }
    ReportRow ret;
    ret.group = "return";
    ret.learning_rate = c.ppo.learning_rate;
    ret.seed = seed;
    ret.values = {{"final_episodic_return", final_return},
                  {"first_episodic_return", res.trace.records.front().episodic_return.value_or(kNaN)}};
    rep.rows.push_back(std::move(ret));
    rep.traces.emplace_back("ppo_seed" + std::to_string(seed), std::move(res.trace));
  }
  rep.aggregates = aggregate_rows(rep.rows, rep.metric);

  const std::size_t need = required_seeds(c.seeds.size());
  for (const char* net : {"policy", "value"}) {
    const std::string group = std::string(net) + "_l" + std::to_string(hidden - 1);
    std::size_t ok = 0;
    std::string values;
    for (const auto seed : c.seeds) {
      const ReportRow* r = find_row(rep.rows, group, c.ppo.learning_rate, seed);
      const double p = r ? r->value("pearson") : kNaN;
      values += (values.empty() ? "" : " ") + format_double(p);
      if (p >= c.min_correlation) ++ok;
    }
    rep.criteria.push_back({std::string(net) + " final hidden layer correlation", ok >= need,
                            std::to_string(ok) + "/" + std::to_string(c.seeds.size()) + " seeds with Pearson >= " +
                                format_double(c.min_correlation) + " (need " + std::to_string(need) + "): " + values});
  }
  rep.notes.push_back("series: dormant and zero-gradient fractions of each hidden layer on a fixed probe batch, one "
                      "snapshot per PPO iteration; an undefined correlation (constant series) counts as a miss");
  return rep;
}

// ---------------------------------------------------------------------------

ExperimentReport run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  ExperimentReport rep;
  switch (config.kind) {
    case ExperimentKind::kTaskSwitch: rep = run_task_switch(config, options); break;
    case ExperimentKind::kPerturbation: rep = run_perturbation(config, options); break;
    case ExperimentKind::kEquivalenceSuite: rep = run_equivalence_suite(config, options); break;
    case ExperimentKind::kPpoDormancy: rep = run_ppo_dormancy(config, options); break;
    case ExperimentKind::kGradientFree:
      throw ConfigError("experiment kind 'gradient-free' is reserved: no procedure is defined for it");
  }
  if (options.output_dir.empty()) return rep;

  const fs::path dir(options.output_dir);
  fs::create_directories(dir / "traces");
  save_config((dir / "config.cfg").string(), config);
  for (const auto& [stem, trace] : rep.traces) save_trace((dir / "traces" / stem).string(), trace);
  {
    std::ofstream out(dir / "report.txt");
    write_report_text(out, rep);
    std::ofstream csv(dir / "report.csv");
    write_report_csv(csv, rep);
    if (!out || !csv) throw Error("cannot write report files in " + dir.string());
  }
  std::ofstream manifest(dir / "manifest.txt");
  manifest << "format = plasticity-run\nversion = 1\n"
           << "kind = " << experiment_kind_name(config.kind) << '\n'
           << "id = " << config.id << '\n'
           << "metric = " << rep.metric << '\n'
           << "result = " << (rep.passed() ? "pass" : "fail") << '\n'
           << "files = config.cfg report.txt report.csv";
  for (const auto& [stem, trace] : rep.traces) {
    manifest << " traces/" << stem << ".jsonl traces/" << stem << ".csv traces/" << stem << ".metrics.csv";
  }
  manifest << '\n';
  if (!manifest) throw Error("cannot write manifest in " + dir.string());
  return rep;
}

}  // namespace plasticity
