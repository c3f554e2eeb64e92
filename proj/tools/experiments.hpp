// Experiment engine behind the command-line tool: JSON config resolution
// against documented defaults, the experiment drivers (axis-a, axis-b,
// nc-check, multi-agent, exploitability, oracle-audit), deterministic artifact
// writers, and the results-directory report generator.
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace bidlab::cli {

// Configuration problems: parse failures, unknown keys, bad types or values,
// missing referenced files. Maps to process exit code 1.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Parses a config file; parse errors are rethrown as ConfigError with
// 1-based line:column diagnostics.
nlohmann::json load_config_file(const std::string& path);

// Full documented default tree for one experiment name.
nlohmann::json experiment_defaults(const std::string& experiment);

// Deep-merges user JSON over the experiment defaults, rejecting unknown keys
// and type mismatches, then validates values. The result echoes every
// resolved field and is embedded verbatim in run metadata.
nlohmann::json resolve_config(const nlohmann::json& user);

// One per-episode metrics row of a single-agent training run. oracle_profit
// is the per-episode sum of the per-period enumeration optima; ma10 is the
// trailing mean of gap over the last up-to-10 episodes.
struct EpisodeRow {
  int episode = 0;  // 1-based
  double profit = 0.0;
  double oracle_profit = 0.0;
  double gap = 0.0;
  double ma10 = 0.0;
};

// One per-period trace row: realized market outcome plus the per-period
// oracle candidates for audit.
struct StepRow {
  int episode = 0;
  int t = 0;
  double demand = 0.0;
  double price = 0.0;
  double q_agent = 0.0;
  double profit = 0.0;
  double pi_star = 0.0;  // -inf when the period is infeasible for the oracle
  double p_star = 0.0;
  double q_star = 0.0;
};

// Submitted curve at the fixed trace period, one row per segment.
struct SurfaceRow {
  int episode = 0;
  int segment = 0;   // 1-based
  double q_hi = 0.0; // cumulative breakpoint at the segment's right edge
  double price = 0.0;
};

struct GapRunResult {
  std::vector<EpisodeRow> episodes;
  std::vector<StepRow> trace;
  std::vector<SurfaceRow> surface;
  nlohmann::json checkpoint;  // versioned final policy; null when diverged
  double env_gamma = 1.0;     // cost curvature drawn from the run seed
  bool diverged = false;
  std::string error;
};

// Trains one (mode, algorithm, seed) job on the single-node market and
// tracks the per-episode oracle gap. keep_trace toggles the per-step rows;
// metrics and surfaces are always collected.
GapRunResult run_gap_training(const nlohmann::json& resolved, const std::string& mode,
                              const std::string& algo, std::uint64_t seed, bool keep_trace);

struct RunOutcome {
  std::vector<std::string> artifacts;  // files written, config order
  std::vector<std::string> failures;   // "label: message" per failed job
};

// Dispatches on config["experiment"] and writes artifacts under out_dir,
// then derives the summary artifacts from the written files (the same path
// report_directory takes). jobs bounds the worker threads across independent
// (mode, algorithm, seed) jobs; each job is single-threaded.
RunOutcome run_experiment(const nlohmann::json& resolved, const std::string& out_dir,
                          int jobs);

// Reads a results directory and (re)emits summaries plus long-format plot
// data under <results_dir>/report. Missing per-run files become warnings
// inside summary.json. Returns 0, or 1 when the directory holds no run
// metadata (empty summary is still written).
int report_directory(const std::string& results_dir);

}  // namespace bidlab::cli
