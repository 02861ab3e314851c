#pragma once

#include <iosfwd>
#include <string>

#include "plasticity/train.hpp"

namespace plasticity {

// JSONL trace: one object per line, either
//   {"kind":"record","experiment":..,"step":..,"task":..,"train_loss":..,
//    "test_loss":..|null,"episodic_return":..|null,"snapshots":[ids]}
// or
//   {"kind":"snapshot","experiment":..,"iteration":..,"network":..,"layer":..,
//    "id":..,"dormancy":{..},"gradient":{..},"weights":{..},"rank":{..}}
// Snapshot lines come first, in id order.

void write_trace_jsonl(std::ostream& os, const TrainingTrace& trace);
TrainingTrace read_trace_jsonl(std::istream& is);

/// Wide per-record CSV: step, task, losses, episodic return, then per
/// (network, layer) dormant/zero-grad fractions and overlaps with the
/// previous record.
void write_summary_csv(std::ostream& os, const TrainingTrace& trace);

/// Long per-snapshot CSV consumed by the figure pipeline.
void write_metrics_csv(std::ostream& os, const TrainingTrace& trace);

/// Writes `<stem>.jsonl`, `<stem>.csv` and `<stem>.metrics.csv`.
void save_trace(const std::string& stem, const TrainingTrace& trace);

}  // namespace plasticity
