// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bhm/types.hpp"

namespace bhm {

struct IngestOptions {
  // Leave unset to auto-infer from the data (see implementation notes).
  std::optional<double> nominal_capacity_ah;
  std::optional<double> cc_charge_current_a;
  std::optional<double> upper_cutoff_v;
  std::optional<double> lower_cutoff_v;
  // Classification tolerances. Current tolerance defaults to 2% of the CC
  // current when unset; voltage tolerance to 10 mV.
  std::optional<double> current_tolerance_a;
  double voltage_tolerance_v = 0.01;
  std::string cell_id = "cell";
  // Set when the source logs discharge current as positive; samples are
  // flipped to the internal convention (positive = charging) on load.
  bool flip_current_sign = false;
};

// Parse a cycle CSV (header: cycle_index,time_s,current_a,voltage_v,
// temperature_c[,phase]) into a CellHistory. When the optional phase column
// is present its labels are authoritative and segments are runs of equal
// labels; otherwise phases are classified from current/voltage. Discharge
// capacity is coulomb-counted per cycle unless a capacity sidecar
// (cycle_index,capacity_ah) is supplied, which overrides it; a sidecar value
// disagreeing with the coulomb count by more than 1% is kept but noted in
// `warnings` (if given). SOC excursions and inference fallbacks are reported
// the same way.
CellHistory ingest_cycles_csv(const std::filesystem::path& cycles_csv,
                              const std::optional<std::filesystem::path>& capacity_csv,
                              const IngestOptions& options,
                              std::vector<std::string>* warnings = nullptr);

// Phase classification for one cycle, exposed for tests and re-segmentation
// after edits. Rules, in order of precedence per sample:
//   cc_charge     |i - cc| <= tol_i
//   cv_charge     i > tol_i and |v - upper| <= tol_v
//   cc_discharge  i < -tol_i
//   rest          |i| <= tol_i
//   other         anything else
// Consecutive samples with the same kind form one segment; segments cover
// every sample exactly once.
std::vector<PhaseSegment> segment_phases(const SampleSeries& series,
                                         double cc_charge_current_a,
                                         double upper_cutoff_v,
                                         double current_tolerance_a,
                                         double voltage_tolerance_v);

// Structural validation of a parsed/constructed history (time monotone,
// equal lengths, positive voltage, phase cover, capacity/soh consistency).
// Throws errc::data / errc::argument on violation.
void validate_history(const CellHistory& history);

// Coulomb-counted discharge capacity of one cycle in Ah: trapezoidal
// integral of |current| over cc_discharge segments, divided by 3600.
double discharge_capacity_ah(const Cycle& cycle);

// SOC series in percent of `capacity_ah` over the inclusive sample range
// [first, last]: SOC(i) = anchor_soc_pct + 100 * (signed coulomb count from
// `anchor` to i) / (3600 * capacity_ah). Values are not clamped; when any
// value leaves [0, 100], *out_of_range is set (if given). Callers choose the
// reference capacity: SOC-referenced HI extraction passes the nominal
// capacity (charge windows anchored 0% at CC-charge start, discharge
// windows 100% at discharge start), matching what a BMS SOC display scales
// against.
std::vector<double> compute_soc_series(const SampleSeries& series,
                                       std::size_t first, std::size_t last,
                                       std::size_t anchor, double anchor_soc_pct,
                                       double capacity_ah,
                                       bool* out_of_range = nullptr);

// Canonical JSON round trip. Serialization is byte-stable: keys are ordered,
// doubles use shortest round-trip formatting.
std::string to_json(const CellHistory& history);
CellHistory history_from_json(const std::string& json_text);

void save_history(const CellHistory& history, const std::filesystem::path& path);
CellHistory load_history(const std::filesystem::path& path);

// Writes the cycle CSV (with explicit phase column) and optional capacity
// sidecar; inverse of ingest_cycles_csv for data produced by this library.
void write_cycles_csv(const CellHistory& history,
                      const std::filesystem::path& cycles_csv,
                      const std::optional<std::filesystem::path>& capacity_csv);

} // namespace bhm
