// Runs the full acceptance suite and prints one PASS/FAIL line per criterion.
// Usage: plasticity_acceptance [--out DIR]

#include <array>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oracles/eq1_oracle.hpp"
#include "plasticity/experiments.hpp"
#include "plasticity/gradcheck.hpp"
#include "plasticity/numfmt.hpp"
#include "plasticity/ppo.hpp"
#include "plasticity/tasks.hpp"

namespace fs = std::filesystem;
using namespace plasticity;

namespace {

// Pinned tolerances and budgets.
constexpr std::size_t kGradNets = 200;
constexpr double kSmoothTolerance = 1e-5;
constexpr double kReluTolerance = 1e-4;
constexpr double kGradBudgetSeconds = 60.0;
constexpr double kTheoremBudgetSeconds = 120.0;
constexpr double kNormalizationTolerance = 1e-9;
constexpr std::size_t kOraclePoints = 1000;
constexpr double kOracleTolerance = 1e-12;
constexpr double kTaskSwitchBudgetSeconds = 30.0 * 60.0;
constexpr double kPpoBudgetSeconds = 20.0 * 60.0;

struct Line {
  std::string name;
  bool passed = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string secs(double s) {
  std::ostringstream os;
  os.precision(1);
  os << std::fixed << s << " s";
  return os.str();
}

struct TimedRun {
  ExperimentReport report;
  double seconds = 0.0;
  fs::path dir;
};

TimedRun run(ExperimentKind kind, const fs::path& root) {
  const ExperimentConfig c = default_config(kind);
  TimedRun r;
  r.dir = root / c.id;
  std::cerr << "== " << experiment_kind_name(kind) << " -> " << r.dir.string() << '\n';
  const auto t0 = std::chrono::steady_clock::now();
  r.report = run_experiment(c, {r.dir.string(), &std::cerr});
  r.seconds = seconds_since(t0);
  return r;
}

// Criteria whose name starts with `prefix`; false when there are none.
bool criteria_pass(const ExperimentReport& rep, const std::string& prefix, std::string& detail) {
  bool any = false, all = true;
  for (const auto& c : rep.criteria) {
    if (c.name.rfind(prefix, 0) != 0) continue;
    any = true;
    all = all && c.passed;
    if (!detail.empty()) detail += "; ";
    detail += c.name + ": " + c.detail;
  }
  return any && all;
}

Line gradient_check() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = gradient_check_suite(kGradNets, 0);
  const double s = seconds_since(t0);
  const bool ok = r.passed(kSmoothTolerance, kReluTolerance) && s < kGradBudgetSeconds;
  return {"gradient correctness", ok,
          std::to_string(r.smooth_nets) + " smooth nets max rel err " + format_double(r.smooth_max_error) + ", " +
              std::to_string(r.relu_nets) + " ReLU nets max rel err " + format_double(r.relu_max_error) + ", " +
              secs(s)};
}

Line theorem_suite(const TimedRun& r) {
  std::string detail;
  const bool ok = criteria_pass(r.report, "", detail) && r.seconds < kTheoremBudgetSeconds;
  return {"theorem batch-form suite", ok, detail + "; " + secs(r.seconds)};
}

Line normalization(const std::vector<const TimedRun*>& runs) {
  std::size_t checked = 0, degenerate = 0;
  double worst = 0.0;
  for (const auto* r : runs) {
    for (const auto& [stem, trace] : r->report.traces) {
      for (const auto& s : trace.snapshots) {
        if (s.dormancy.degenerate) {
          ++degenerate;
          continue;
        }
        long double sum = 0.0L;
        for (double v : s.dormancy.scores) sum += v;
        const double mean = static_cast<double>(sum / static_cast<long double>(s.dormancy.scores.size()));
        worst = std::max(worst, std::abs(mean - 1.0));
        ++checked;
      }
    }
  }
  return {"dormancy score normalization", checked > 0 && worst <= kNormalizationTolerance,
          std::to_string(checked) + " snapshots, max |mean score - 1| = " + format_double(worst) + " (" +
              std::to_string(degenerate) + " degenerate skipped)"};
}

Line target_oracle() {
  using Input = std::array<double, kBenchmarkInputDim>;
  std::mt19937_64 rng(20240611);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  double worst = 0.0;
  for (std::size_t k = 0; k < kOraclePoints; ++k) {
    Input x;
    for (auto& v : x) v = u(rng);
    worst = std::max(worst, std::abs(eval_target(x) - oracle::eq1(x)));
  }
  auto unit = [](std::size_t i, double v) {
    Input x{};
    x[i] = v;
    return x;
  };
  Input pa{}, pb{};
  pa[4] = pa[5] = 2.0;
  pb[13] = pb[14] = 2.0;
  // y(0), y(e0) and one probe per term; products set both factors.
  const std::vector<std::pair<Input, double>> probes = {
      {Input{}, 2.5},
      {unit(0, 1.0), 5.0},
      {unit(1, 2.0), -2.3},
      {unit(2, std::numbers::pi / 2), 3.3},
      {unit(3, std::numbers::pi), -0.5},
      {pa, 5.3},
      {unit(6, 2.0), 2.5 - 2.4},
      {unit(7, std::sqrt(10.0)), 1.5 + 0.36787944117144233},
      {unit(8, 2.0), 4.7},
      {unit(9, 2.0), 0.5},
      {unit(10, std::log(3.0) / 2), 2.95},
      {unit(11, 2.0), 3.3},
      {unit(12, 4.0), 1.3},
      {pb, 4.5},
      {unit(15, 2.0), 1.7},
      {unit(16, 2.0), 3.1},
  };
  std::size_t exact = 0;
  std::string misses;
  for (std::size_t i = 0; i < probes.size(); ++i) {
    const double got = eval_target(probes[i].first);
    if (got == probes[i].second) {
      ++exact;
    } else {
      misses += " #" + std::to_string(i) + "=" + format_double(got);
    }
  }
  return {"benchmark target oracle", worst <= kOracleTolerance && exact == probes.size(),
          std::to_string(kOraclePoints) + " points max |diff| " + format_double(worst) + ", " +
              std::to_string(exact) + "/" + std::to_string(probes.size()) + " probes exact" + misses};
}

Line task_relevance(const TimedRun& r) {
  std::string detail;
  bool ok = criteria_pass(r.report, "dormancy floor", detail);
  ok = criteria_pass(r.report, "mse ratio", detail) && ok;
  ok = ok && r.seconds < kTaskSwitchBudgetSeconds;
  return {"task-relevance reproduction", ok, detail + "; " + secs(r.seconds)};
}

Line persistence_line(const TimedRun& r) {
  std::string detail;
  const bool ok = criteria_pass(r.report, "zero-grad persistence", detail);
  return {"zero-gradient persistence", ok, detail};
}

Line ppo_line(const TimedRun& r) {
  std::string detail;
  bool ok = criteria_pass(r.report, "policy final hidden layer", detail);
  ok = criteria_pass(r.report, "value final hidden layer", detail) && ok;
  const std::vector<double> rewards{1, 1}, values{0, 0};
  const std::vector<std::uint8_t> dones{0, 0};
  const auto g = compute_gae(rewards, values, dones, 0.0, 0.99, 0.95);
  const bool gae_ok = g.advantages[1] == 1.0 && g.advantages[0] == 1.0 + 0.99 * 0.95;
  ok = ok && gae_ok && r.seconds < kPpoBudgetSeconds;
  return {"PPO desk run", ok,
          detail + "; GAE two-step case " + (gae_ok ? "exact" : "wrong") + "; " + secs(r.seconds)};
}

Line perturbation_line(const TimedRun& r) {
  std::string detail;
  bool ok = criteria_pass(r.report, "perturbed / control loss", detail);
  ok = criteria_pass(r.report, "eta=0 bit-identical", detail) && ok;
  return {"perturbation study", ok, detail};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) return "<missing " + p.string() + ">";
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// Header plus the report.csv lines of one seed (third column).
std::string seed_rows(const fs::path& csv, std::uint64_t seed) {
  std::istringstream is(slurp(csv));
  std::string line, out;
  bool header = true;
  while (std::getline(is, line)) {
    std::istringstream fields(line);
    std::string group, lr, s;
    std::getline(fields, group, ',');
    std::getline(fields, lr, ',');
    std::getline(fields, s, ',');
    if (header || s == std::to_string(seed)) out += line + '\n';
    header = false;
  }
  return out;
}

// Reruns the experiment from its saved config restricted to the first seed and
// compares every file that seed produced.
bool rerun_matches(const TimedRun& r, const fs::path& root, std::string& detail) {
  ExperimentConfig c = load_config((r.dir / "config.cfg").string());
  const std::uint64_t seed = c.seeds.front();
  const bool whole = c.kind == ExperimentKind::kEquivalenceSuite;
  if (!whole) c.seeds = {seed};
  const fs::path dir = root / (c.id + "-rerun");
  fs::remove_all(dir);
  std::cerr << "== rerun " << c.id << " seed " << seed << '\n';
  run_experiment(c, {dir.string(), nullptr});

  std::size_t files = 0, mismatched = 0;
  auto compare = [&](const std::string& a, const std::string& b, const std::string& what) {
    ++files;
    if (a != b) {
      ++mismatched;
      detail += " " + c.id + "/" + what + " differs;";
    }
  };
  if (whole) {
    compare(slurp(r.dir / "report.csv"), slurp(dir / "report.csv"), "report.csv");
  } else {
    compare(seed_rows(r.dir / "report.csv", seed), seed_rows(dir / "report.csv", seed), "report.csv");
  }
  const std::string tag = "_seed" + std::to_string(seed) + ".";
  for (const auto& entry : fs::directory_iterator(dir / "traces")) {
    const std::string name = entry.path().filename().string();
    if (name.find(tag) == std::string::npos && name.rfind("ppo_seed" + std::to_string(seed) + ".", 0) != 0) continue;
    compare(slurp(r.dir / "traces" / name), slurp(entry.path()), "traces/" + name);
  }
  detail += " " + c.id + ": " + std::to_string(files - mismatched) + "/" + std::to_string(files) + " files identical;";
  // The equivalence suite writes no traces; the others must produce at least one.
  return files >= (whole ? 1u : 2u) && mismatched == 0;
}

Line reproducibility(const std::vector<const TimedRun*>& runs, const fs::path& root) {
  bool ok = true;
  std::string detail;
  for (const auto* r : runs) ok = rerun_matches(*r, root, detail) && ok;
  return {"reproducibility", ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path root = fs::temp_directory_path() / "plasticity_acceptance";
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--out" && i + 1 < argc) {
      root = argv[++i];
    } else {
      std::cerr << "usage: plasticity_acceptance [--out DIR]\n";
      return 1;
    }
  }
  try {
    fs::remove_all(root);
    fs::create_directories(root);

    std::vector<Line> lines;
    lines.push_back(gradient_check());
    const TimedRun equivalence = run(ExperimentKind::kEquivalenceSuite, root);
    lines.push_back(theorem_suite(equivalence));
    const TimedRun task_switch = run(ExperimentKind::kTaskSwitch, root);
    const TimedRun ppo = run(ExperimentKind::kPpoDormancy, root);
    const TimedRun perturbation = run(ExperimentKind::kPerturbation, root);
    const std::vector<const TimedRun*> all = {&equivalence, &task_switch, &ppo, &perturbation};
    lines.push_back(normalization(all));
    lines.push_back(target_oracle());
    lines.push_back(task_relevance(task_switch));
    lines.push_back(persistence_line(task_switch));
    lines.push_back(ppo_line(ppo));
    lines.push_back(perturbation_line(perturbation));
    lines.push_back(reproducibility(all, root));

    bool all_passed = true;
    for (const auto& l : lines) {
      std::cout << (l.passed ? "PASS " : "FAIL ") << l.name << ": " << l.detail << '\n';
      all_passed = all_passed && l.passed;
    }
    return all_passed ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "plasticity_acceptance: " << e.what() << '\n';
    return 2;
  }
}
