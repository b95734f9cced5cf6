#pragma once

#include <filesystem>
#include <vector>

#include "artuda/eval.hpp"

namespace artuda::evalkit {

/// Reads every record in <dir>/metrics.jsonl.
std::vector<MetricsRecord> read_metrics(const std::filesystem::path& dir);

/// Aggregates records (median and mean over seeds, grouped by method and
/// lambda) into report.md and report_summary.csv, and renders SVG line plots
/// for any budget_sweep.csv found in dir or dir/sweeps. Errors if the
/// directory holds no records.
void emit_report(const std::filesystem::path& dir);

}  // namespace artuda::evalkit
