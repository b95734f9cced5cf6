#pragma once

#include <filesystem>

#include "artuda/config.hpp"
#include "artuda/eval.hpp"

namespace artuda::evalkit {

// Orchestration behind the CLI subcommands. Each call is deterministic given
// the config: reruns produce identical JSONL/CSV output except wall_time_s
// (which the CSVs therefore never contain).

/// train -> evaluate (clean + each configured attack + black-box) ->
/// analyses, for every seed and every lambda grid point; writes
/// metrics.jsonl, summary.csv, per-run epochs.csv, checkpoints, and the
/// lambda table when a lambda grid is configured. Returns a process exit
/// code (0 on success).
int run_experiment(const ExperimentConfig& cfg);
int run_experiment(const std::filesystem::path& config_path);

/// Trains per seed and evaluates the eps x j_max grid; writes
/// budget_sweep.csv (median over seeds) and the two SVG line plots.
int run_sweep(const ExperimentConfig& cfg);

/// Trains natural, defended and substitute models on the configured task and
/// runs the four-check sanity suite; writes sanity.md, prints one pass/fail
/// line per check, exit code 0 iff all pass.
int run_sanity(const ExperimentConfig& cfg);

}  // namespace artuda::evalkit
