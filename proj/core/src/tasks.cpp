#include "plasticity/tasks.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <sstream>

#include "plasticity/errors.hpp"
#include "plasticity/numfmt.hpp"

namespace plasticity {

double eval_target(std::span<const double> x, std::optional<double> noise) {
  if (x.size() != kBenchmarkInputDim) {
    throw ShapeError("eval_target expects 17 inputs, got " + std::to_string(x.size()));
  }
  for (double v : x) {
    if (!std::isfinite(v)) throw NonFiniteError("non-finite input to eval_target");
  }
  double y = 2.5 * x[0];
  y += -1.2 * x[1] * x[1];
  y += 0.8 * std::sin(x[2]);
  y += 1.5 * std::cos(x[3]);
  y += 0.7 * x[4] * x[5];
  y += -0.3 * x[6] * x[6] * x[6];
  y += std::exp(-0.1 * x[7] * x[7]);
  y += 1.1 * x[8];
  y += -0.5 * x[9] * x[9];
  y += 0.9 * std::tanh(x[10]);
  y += 0.2 * x[11] * x[11];
  y += -0.6 * std::sqrt(std::abs(x[12]));
  y += 0.5 * x[13] * x[14];
  y += -0.4 * x[15];
  y += 0.3 * x[16];
  return y + noise.value_or(0.0);
}

const char* target_kind_name(TargetKind k) noexcept {
  switch (k) {
    case TargetKind::kBenchmark: return "benchmark";
    case TargetKind::kDormancyInducing: return "dormancy-inducing";
    case TargetKind::kBenign: return "benign";
  }
  return "?";
}

TargetKind parse_target_kind(const std::string& name) {
  if (name == "benchmark") return TargetKind::kBenchmark;
  if (name == "dormancy-inducing") return TargetKind::kDormancyInducing;
  if (name == "benign") return TargetKind::kBenign;
  throw ConfigError("unknown target kind '" + name + "'");
}

void RegressionTaskSpec::validate() const {
  if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be non-negative");
  if (!(input.low < input.high)) throw ConfigError("input range must satisfy low < high");
  if (input_dim == 0) throw ConfigError("input_dim must be positive");
  if (target == TargetKind::kBenchmark) {
    if (input_dim != kBenchmarkInputDim) throw ConfigError("benchmark target needs input_dim 17");
  } else if (direction.size() != input_dim) {
    throw ConfigError("pretraining target direction must have input_dim entries");
  }
}

double RegressionTaskSpec::clean_target(std::span<const double> x) const {
  if (target == TargetKind::kBenchmark) return eval_target(x);
  if (x.size() != input_dim) throw ShapeError("task input has wrong dimensionality");
  double proj = 0.0;
  for (std::size_t j = 0; j < input_dim; ++j) proj += direction[j] * x[j];
  return offset + amplitude * std::sin(proj);
}

RegressionTaskSpec benchmark_task(double noise_sigma) {
  RegressionTaskSpec s;
  s.noise_sigma = noise_sigma;
  return s;
}

RegressionTaskSpec make_pretrain_task(PretrainKind kind, std::uint64_t seed) {
  RegressionTaskSpec s;
  s.seed = seed;
  s.input_dim = kBenchmarkInputDim;
  s.noise_sigma = 0.0;
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  s.direction.resize(s.input_dim);
  double norm = 0.0;
  for (double& d : s.direction) {
    d = normal(rng);
    norm += d * d;
  }
  norm = std::sqrt(norm);
  for (double& d : s.direction) d /= norm;
  if (kind == PretrainKind::kDormancyInducing) {
    s.target = TargetKind::kDormancyInducing;
    s.input = {0.0, 1.0};
    s.offset = 20.0;
    s.amplitude = 1.0;
  } else {
    s.target = TargetKind::kBenign;
    s.input = {-2.0, 2.0};
    s.offset = 0.0;
    s.amplitude = 0.5;
  }
  return s;
}

const char* split_name(SplitTag s) noexcept {
  switch (s) {
    case SplitTag::kTrain: return "train";
    case SplitTag::kTest: return "test";
    case SplitTag::kProbe: return "probe";
  }
  return "?";
}

SplitTag parse_split(const std::string& name) {
  if (name == "train") return SplitTag::kTrain;
  if (name == "test") return SplitTag::kTest;
  if (name == "probe") return SplitTag::kProbe;
  throw FormatError("unknown split tag '" + name + "'");
}

Dataset generate_dataset(const RegressionTaskSpec& spec, std::size_t n, std::uint64_t seed, SplitTag split) {
  spec.validate();
  if (n == 0) throw ConfigError("dataset size must be at least 1");
  Dataset d;
  d.spec = spec;
  d.split = split;
  d.generator_seed = seed;
  d.inputs = Tensor({n, spec.input_dim});
  d.targets = Tensor({n, 1});
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(spec.input.low, spec.input.high);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t k = 0; k < n; ++k) {
    auto row = d.inputs.row(k);
    for (double& v : row) v = uniform(rng);
    const double eps = spec.noise_sigma * normal(rng);
    d.targets[k] = spec.clean_target(row) + eps;
  }
  return d;
}

Tensor sample_inputs(const RegressionTaskSpec& spec, std::size_t n, std::uint64_t seed) {
  return generate_dataset(spec, n, seed, SplitTag::kProbe).inputs;
}

void TaskSchedule::validate() const {
  if (phases.empty()) throw ConfigError("task schedule needs at least one task");
  for (const auto& p : phases) {
    if (p.steps <= 0) throw ConfigError("task '" + p.name + "' needs a positive step budget");
    p.task.validate();
  }
}

std::vector<std::int64_t> TaskSchedule::switch_boundaries() const {
  std::vector<std::int64_t> b;
  std::int64_t at = 0;
  for (std::size_t i = 0; i + 1 < phases.size(); ++i) {
    at += phases[i].steps;
    b.push_back(at);
  }
  return b;
}

std::int64_t TaskSchedule::total_steps() const {
  std::int64_t t = 0;
  for (const auto& p : phases) t += p.steps;
  return t;
}

void write_dataset_csv(std::ostream& os, const Dataset& d) {
  const std::size_t dim = d.inputs.cols();
  for (std::size_t j = 0; j < dim; ++j) os << 'X' << j << ',';
  os << "y\n";
  for (std::size_t k = 0; k < d.size(); ++k) {
    for (double v : d.inputs.row(k)) os << format_double(v) << ',';
    os << format_double(d.targets[k]) << '\n';
  }
}

void write_dataset_manifest(std::ostream& os, const Dataset& d) {
  const auto& s = d.spec;
  os << "format=plasticity-dataset\n";
  os << "version=1\n";
  os << "rows=" << d.size() << '\n';
  os << "split=" << split_name(d.split) << '\n';
  os << "generator_seed=" << d.generator_seed << '\n';
  os << "target=" << target_kind_name(s.target) << '\n';
  os << "input_dim=" << s.input_dim << '\n';
  os << "noise_sigma=" << format_double(s.noise_sigma) << '\n';
  os << "input_low=" << format_double(s.input.low) << '\n';
  os << "input_high=" << format_double(s.input.high) << '\n';
  os << "task_seed=" << s.seed << '\n';
  os << "offset=" << format_double(s.offset) << '\n';
  os << "amplitude=" << format_double(s.amplitude) << '\n';
  os << "direction=";
  for (std::size_t j = 0; j < s.direction.size(); ++j) os << (j ? "," : "") << format_double(s.direction[j]);
  os << '\n';
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

Dataset read_dataset(std::istream& csv, std::istream& manifest) {
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("manifest line without '=': " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError("manifest missing key '" + key + "'");
    return it->second;
  };
  if (get("format") != "plasticity-dataset" || get("version") != "1") {
    throw FormatError("unsupported dataset manifest");
  }
  Dataset d;
  RegressionTaskSpec& s = d.spec;
  try {
    s.target = parse_target_kind(get("target"));
  } catch (const ConfigError& e) {
    throw FormatError(e.what());
  }
  s.input_dim = parse_uint(get("input_dim"));
  s.noise_sigma = parse_double(get("noise_sigma"));
  s.input.low = parse_double(get("input_low"));
  s.input.high = parse_double(get("input_high"));
  s.seed = parse_uint(get("task_seed"));
  s.offset = parse_double(get("offset"));
  s.amplitude = parse_double(get("amplitude"));
  for (const auto& cell : split_csv(get("direction"))) {
    if (!cell.empty()) s.direction.push_back(parse_double(cell));
  }
  d.split = parse_split(get("split"));
  d.generator_seed = parse_uint(get("generator_seed"));
  const std::size_t rows = parse_uint(get("rows"));

  if (!std::getline(csv, line)) throw FormatError("dataset CSV is empty");
  const auto header = split_csv(line);
  if (header.size() != s.input_dim + 1 || header.back() != "y") throw FormatError("dataset CSV header mismatch");
  for (std::size_t j = 0; j < s.input_dim; ++j) {
    if (header[j] != "X" + std::to_string(j)) throw FormatError("dataset CSV header mismatch at column " + header[j]);
  }
  std::vector<double> inputs, targets;
  inputs.reserve(rows * s.input_dim);
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != s.input_dim + 1) throw FormatError("dataset CSV row has wrong column count");
    for (std::size_t j = 0; j < s.input_dim; ++j) inputs.push_back(parse_double(cells[j]));
    targets.push_back(parse_double(cells.back()));
  }
  if (targets.size() != rows) throw FormatError("dataset CSV row count disagrees with manifest");
  d.inputs = Tensor({rows, s.input_dim}, std::move(inputs));
  d.targets = Tensor({rows, 1}, std::move(targets));
  return d;
}

void save_dataset(const std::string& path, const Dataset& d) {
  std::ofstream csv(path);
  std::ofstream manifest(path + ".manifest");
  if (!csv || !manifest) throw Error("cannot write dataset to " + path);
  write_dataset_csv(csv, d);
  write_dataset_manifest(manifest, d);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream csv(path);
  std::ifstream manifest(path + ".manifest");
  if (!csv || !manifest) throw Error("cannot open dataset " + path + " (and its .manifest)");
  return read_dataset(csv, manifest);
}

}  // namespace plasticity
