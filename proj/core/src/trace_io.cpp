#include "plasticity/trace_io.hpp"

#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <nlohmann/json.hpp>
#include <ostream>

#include "plasticity/errors.hpp"
#include "plasticity/numfmt.hpp"

namespace plasticity {

using json = nlohmann::ordered_json;

namespace {

json mask_json(const std::vector<bool>& mask) {
  json a = json::array();
  for (bool b : mask) a.push_back(b ? 1 : 0);
  return a;
}

std::vector<bool> mask_from(const json& a) {
  std::vector<bool> m;
  for (const auto& v : a) m.push_back(v.get<int>() != 0);
  return m;
}

double number_or_nan(const json& v) {
  return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
}

json moments_json(const MomentStats& m) {
  return json{{"mean", m.mean}, {"std", m.std}, {"l2_norm", m.l2_norm}, {"max_abs", m.max_abs}};
}

MomentStats moments_from(const json& j) {
  return {j.at("mean").get<double>(), j.at("std").get<double>(), j.at("l2_norm").get<double>(),
          j.at("max_abs").get<double>()};
}

json snapshot_json(const std::string& experiment, const LayerSnapshot& s) {
  json j;
  j["kind"] = "snapshot";
  j["experiment"] = experiment;
  j["iteration"] = s.step;
  j["network"] = s.network;
  j["layer"] = s.layer;
  j["id"] = s.id;
  j["dormancy"] = json{{"scores", s.dormancy.scores},
                       {"dormant_mask", mask_json(s.dormancy.dormant_mask)},
                       {"dormant_fraction", s.dormancy.dormant_fraction},
                       {"batch_size", s.dormancy.batch_size},
                       {"tau_d", s.dormancy.tau_d},
                       {"degenerate", s.dormancy.degenerate}};
  j["gradient"] = json{{"magi", s.gradient.magi},
                       {"zero_grad_mask", mask_json(s.gradient.zero_grad_mask)},
                       {"zero_grad_fraction", s.gradient.zero_grad_fraction},
                       {"tau_g", s.gradient.tau_g}};
  j["weights"] = json{{"weights", moments_json(s.weights.weights)}, {"bias", moments_json(s.weights.bias)}};
  j["rank"] = json{{"singular_values", s.rank.singular_values},
                   {"threshold_rank", s.rank.threshold_rank},
                   {"effective_rank", s.rank.effective_rank},
                   {"delta", s.rank.delta}};
  return j;
}

LayerSnapshot snapshot_from(const json& j) {
  LayerSnapshot s;
  s.id = j.at("id").get<std::size_t>();
  s.step = j.at("iteration").get<std::int64_t>();
  s.network = j.at("network").get<std::string>();
  s.layer = j.at("layer").get<std::size_t>();
  const auto& d = j.at("dormancy");
  s.dormancy.layer_index = s.layer;
  for (const auto& v : d.at("scores")) s.dormancy.scores.push_back(number_or_nan(v));
  s.dormancy.dormant_mask = mask_from(d.at("dormant_mask"));
  s.dormancy.dormant_fraction = d.at("dormant_fraction").get<double>();
  s.dormancy.batch_size = d.at("batch_size").get<std::size_t>();
  s.dormancy.tau_d = d.at("tau_d").get<double>();
  s.dormancy.degenerate = d.at("degenerate").get<bool>();
  const auto& g = j.at("gradient");
  s.gradient.layer_index = s.layer;
  for (const auto& v : g.at("magi")) s.gradient.magi.push_back(number_or_nan(v));
  s.gradient.zero_grad_mask = mask_from(g.at("zero_grad_mask"));
  s.gradient.zero_grad_fraction = g.at("zero_grad_fraction").get<double>();
  s.gradient.tau_g = g.at("tau_g").get<double>();
  s.weights.layer_index = s.layer;
  s.weights.weights = moments_from(j.at("weights").at("weights"));
  s.weights.bias = moments_from(j.at("weights").at("bias"));
  const auto& r = j.at("rank");
  s.rank.layer_index = s.layer;
  s.rank.singular_values = r.at("singular_values").get<std::vector<double>>();
  s.rank.threshold_rank = r.at("threshold_rank").get<std::size_t>();
  s.rank.effective_rank = r.at("effective_rank").get<double>();
  s.rank.delta = r.at("delta").get<double>();
  return s;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string csv_number(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

using SeriesKey = std::pair<std::string, std::size_t>;

std::vector<SeriesKey> series_keys(const TrainingTrace& trace) {
  std::vector<SeriesKey> keys;
  for (const auto& s : trace.snapshots) {
    SeriesKey k{s.network, s.layer};
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
  }
  return keys;
}

const LayerSnapshot* find_in_record(const TrainingTrace& trace, const TraceRecord& r, const SeriesKey& key) {
  for (auto id : r.snapshot_ids) {
    const auto& s = trace.snapshot(id);
    if (s.network == key.first && s.layer == key.second) return &s;
  }
  return nullptr;
}

}  // namespace

void write_trace_jsonl(std::ostream& os, const TrainingTrace& trace) {
  for (const auto& s : trace.snapshots) os << snapshot_json(trace.experiment_id, s).dump() << '\n';
  for (const auto& r : trace.records) {
    json j;
    j["kind"] = "record";
    j["experiment"] = trace.experiment_id;
    j["step"] = r.step;
    j["task"] = r.task_id;
    j["train_loss"] = r.train_loss;
    j["test_loss"] = optional_json(r.test_loss);
    j["episodic_return"] = optional_json(r.episodic_return);
    j["snapshots"] = r.snapshot_ids;
    os << j.dump() << '\n';
  }
  if (trace.aborted) {
    json j{{"kind", "aborted"}, {"experiment", trace.experiment_id}, {"diagnostic", trace.diagnostic}};
    os << j.dump() << '\n';
  }
}

TrainingTrace read_trace_jsonl(std::istream& is) {
  TrainingTrace trace;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      const std::string kind = j.at("kind").get<std::string>();
      trace.experiment_id = j.at("experiment").get<std::string>();
      if (kind == "snapshot") {
        LayerSnapshot s = snapshot_from(j);
        if (s.id != trace.snapshots.size()) throw FormatError("snapshot ids out of order");
        trace.snapshots.push_back(std::move(s));
      } else if (kind == "record") {
        TraceRecord r;
        r.step = j.at("step").get<std::int64_t>();
        r.task_id = j.at("task").get<int>();
        r.train_loss = j.at("train_loss").get<double>();
        if (!j.at("test_loss").is_null()) r.test_loss = j.at("test_loss").get<double>();
        if (!j.at("episodic_return").is_null()) r.episodic_return = j.at("episodic_return").get<double>();
        r.snapshot_ids = j.at("snapshots").get<std::vector<std::size_t>>();
        trace.records.push_back(std::move(r));
      } else if (kind == "aborted") {
        trace.aborted = true;
        trace.diagnostic = j.at("diagnostic").get<std::string>();
      } else {
        throw FormatError("unknown line kind '" + kind + "'");
      }
    } catch (const json::exception& e) {
      throw FormatError("trace line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  trace.validate();
  return trace;
}

void write_summary_csv(std::ostream& os, const TrainingTrace& trace) {
  const auto keys = series_keys(trace);
  os << "step,task,train_loss,test_loss,episodic_return";
  for (const auto& [net, layer] : keys) {
    const std::string p = net + "_l" + std::to_string(layer) + "_";
    os << ',' << p << "dormant_fraction," << p << "zero_grad_fraction," << p << "dormant_overlap," << p
       << "zero_grad_overlap";
  }
  os << '\n';
  std::map<SeriesKey, const LayerSnapshot*> previous;
  for (const auto& r : trace.records) {
    os << r.step << ',' << r.task_id << ',' << format_double(r.train_loss) << ',' << csv_number(r.test_loss) << ','
       << csv_number(r.episodic_return);
    for (const auto& key : keys) {
      const LayerSnapshot* s = find_in_record(trace, r, key);
      if (!s) {
        os << ",,,,";
        continue;
      }
      os << ',' << format_double(s->dormancy.dormant_fraction) << ',' << format_double(s->gradient.zero_grad_fraction);
      const auto it = previous.find(key);
      if (it != previous.end()) {
        const auto d = overlap(mask_to_set(s->dormancy.dormant_mask), mask_to_set(it->second->dormancy.dormant_mask));
        const auto g = overlap(mask_to_set(s->gradient.zero_grad_mask),
                               mask_to_set(it->second->gradient.zero_grad_mask));
        os << ',' << format_double(d.coefficient) << ',' << format_double(g.coefficient);
      } else {
        os << ",,";
      }
      previous[key] = s;
    }
    os << '\n';
  }
}

void write_metrics_csv(std::ostream& os, const TrainingTrace& trace) {
  os << "experiment,iteration,network,layer,neurons,dormant_fraction,zero_grad_fraction,dormant_overlap,"
        "zero_grad_overlap,overlap_degenerate,dormancy_degenerate,mean_magi,weight_mean,weight_std,weight_l2,"
        "weight_max_abs,bias_mean,bias_std,bias_l2,bias_max_abs,threshold_rank,effective_rank\n";
  std::map<SeriesKey, const LayerSnapshot*> previous;
  for (const auto& s : trace.snapshots) {
    const SeriesKey key{s.network, s.layer};
    double mean_magi = 0.0;
    for (double g : s.gradient.magi) mean_magi += g;
    if (!s.gradient.magi.empty()) mean_magi /= static_cast<double>(s.gradient.magi.size());
    os << trace.experiment_id << ',' << s.step << ',' << s.network << ',' << s.layer << ','
       << s.dormancy.scores.size() << ',' << format_double(s.dormancy.dormant_fraction) << ','
       << format_double(s.gradient.zero_grad_fraction) << ',';
    const auto it = previous.find(key);
    if (it != previous.end()) {
      const auto d = overlap(mask_to_set(s.dormancy.dormant_mask), mask_to_set(it->second->dormancy.dormant_mask));
      const auto g =
          overlap(mask_to_set(s.gradient.zero_grad_mask), mask_to_set(it->second->gradient.zero_grad_mask));
      os << format_double(d.coefficient) << ',' << format_double(g.coefficient) << ','
         << ((d.degenerate || g.degenerate) ? 1 : 0);
    } else {
      os << ",,";
    }
    os << ',' << (s.dormancy.degenerate ? 1 : 0) << ',' << format_double(mean_magi);
    for (const MomentStats* m : {&s.weights.weights, &s.weights.bias}) {
      os << ',' << format_double(m->mean) << ',' << format_double(m->std) << ',' << format_double(m->l2_norm) << ','
         << format_double(m->max_abs);
    }
    os << ',' << s.rank.threshold_rank << ',' << format_double(s.rank.effective_rank) << '\n';
    previous[key] = &s;
  }
}

void save_trace(const std::string& stem, const TrainingTrace& trace) {
  std::ofstream jsonl(stem + ".jsonl");
  std::ofstream summary(stem + ".csv");
  std::ofstream metrics(stem + ".metrics.csv");
  if (!jsonl || !summary || !metrics) throw Error("cannot write trace files at " + stem);
  write_trace_jsonl(jsonl, trace);
  write_summary_csv(summary, trace);
  write_metrics_csv(metrics, trace);
}

}  // namespace plasticity
