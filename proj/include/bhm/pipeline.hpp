// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bhm/battery_data.hpp"
#include "bhm/evaluation.hpp"
#include "bhm/synth.hpp"

namespace bhm {

struct DatasetSpec {
  std::string cell_id;
  // Exactly one of cycles_csv / history_json is set.
  std::optional<std::filesystem::path> cycles_csv;
  std::optional<std::filesystem::path> capacity_csv;
  std::optional<std::filesystem::path> history_json;
  IngestOptions ingest;
};

struct FusionSpec {
  std::string id;
  std::vector<std::string> constituents;
};

struct GridSearchSpec {
  std::vector<std::string> hi_ids;
  // Search bounds per HI; falls back to the descriptor's default reference
  // with the full plausible span when omitted.
  std::map<std::string, IntervalSpec> bounds;
  std::size_t n_points = 10;
  bool refine = true;
};

struct HeatmapSpec {
  std::vector<std::string> hi_ids;
  double step_pct = 5.0;
  double range_lo = 0.0;
  double range_hi = 100.0;
};

// One validated run configuration. Loading folds defaults in and applies
// CLI/environment overrides; `canonical_json` is the resulting effective
// config (sorted keys), and `config_hash` fingerprints it, so identical
// effective configurations hash identically regardless of file formatting.
struct PipelineConfig {
  int schema_version = 1;
  std::filesystem::path out_dir = "out";
  std::size_t jobs = 1;
  std::vector<DatasetSpec> datasets;
  std::vector<SynthCellParams> synthetic_cells;   // generated in memory and
                                                  // appended to the dataset set
  std::optional<SynthFleetParams> synthetic_sessions;
  EngineConfig engine;
  std::vector<std::string> hi_ids;                // extract / evaluate selection
  std::map<std::string, IntervalSpec> intervals;  // per-HI window overrides
  GridSearchSpec grid_search;
  HeatmapSpec heatmap;
  ScreeningConfig screening;
  std::optional<std::filesystem::path> sessions_csv;
  std::vector<FusionSpec> fusions;

  std::string canonical_json;
  std::string config_hash;  // 16 hex digits (64-bit FNV-1a of canonical_json)
};

struct ConfigOverrides {
  std::optional<std::filesystem::path> out_dir;  // --out / BHM_OUT_DIR
  std::optional<std::uint64_t> seed;             // --seed (replaces engine.base_seed)
  std::optional<std::size_t> jobs;               // --jobs / BHM_JOBS
  bool read_env = true;
};

PipelineConfig load_config(const std::filesystem::path& path,
                           const ConfigOverrides& overrides);
PipelineConfig parse_config(const std::string& json_text,
                            const ConfigOverrides& overrides);

// JSON bindings for the synthetic generators, shared with the C interface.
// Accept the same objects the config file uses for synthetic_cells entries
// and synthetic_sessions.
SynthCellParams synth_cell_params_from_json(const std::string& json_text);
SynthFleetParams synth_fleet_params_from_json(const std::string& json_text);

struct CommandResult {
  int exit_code = 0;                  // 0 iff failures empty
  std::vector<std::string> outputs;   // files written (relative to out_dir)
  std::vector<std::string> failures;  // per-unit error messages
};

// Verbs: generate, extract, evaluate, optimize-intervals, heatmap, screen,
// probability, fuse, report. Unknown verb raises errc::argument. Partial
// failures (one HI, one cell) are collected per unit; unrelated work still
// completes and the exit code turns nonzero.
CommandResult run_command(const std::string& verb, const PipelineConfig& config);

} // namespace bhm
