// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace bhm {

// Column-oriented sample log of one cycle. All four channels share the
// same length; time is strictly increasing within a cycle.
struct SampleSeries {
  std::vector<double> time_s;
  std::vector<double> current_a;     // signed: >0 charge, <0 discharge
  std::vector<double> voltage_v;
  std::vector<double> temperature_c;

  std::size_t size() const noexcept { return time_s.size(); }
  bool empty() const noexcept { return time_s.empty(); }
};

enum class PhaseKind : std::uint8_t {
  cc_charge,
  cv_charge,
  cc_discharge,
  rest,
  other,
};

const char* phase_kind_name(PhaseKind k) noexcept;
std::optional<PhaseKind> phase_kind_from_name(const std::string& name) noexcept;

// Half-open is deliberately avoided: [first, last] are inclusive sample
// indices so a segment always carries its boundary samples (the clip and
// integration kernels need them).
struct PhaseSegment {
  PhaseKind kind = PhaseKind::other;
  std::size_t first = 0;
  std::size_t last = 0;  // inclusive

  std::size_t count() const noexcept { return last - first + 1; }
};

struct Cycle {
  int index = 0;
  SampleSeries series;
  std::vector<PhaseSegment> phases;
  double discharge_capacity_ah = 0.0;
  double soh_pct = 0.0;   // 100 * discharge_capacity_ah / nominal
};

// Full per-cell record: everything downstream (extraction, evaluation,
// screening) consumes this one type.
struct CellHistory {
  std::string cell_id;
  double nominal_capacity_ah = 0.0;
  double upper_cutoff_v = 0.0;
  double lower_cutoff_v = 0.0;
  double cc_charge_current_a = 0.0;
  std::vector<Cycle> cycles;
};

// Which measured channel an interval is expressed in.
enum class IntervalRef : std::uint8_t {
  time_s,        // seconds from scoped-phase start
  voltage_v,
  current_a,
  temperature_c,
  soc_pct,
};

const char* interval_ref_name(IntervalRef r) noexcept;
std::optional<IntervalRef> interval_ref_from_name(const std::string& name) noexcept;

struct IntervalSpec {
  IntervalRef reference = IntervalRef::voltage_v;
  double lower = 0.0;
  double upper = 0.0;
};

} // namespace bhm
