// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bhm/fleet.hpp"
#include "bhm/types.hpp"

namespace bhm {

struct FadeModel {
  enum class Kind : std::uint8_t { linear, power } kind = Kind::linear;
  // linear: C_k = C0 * (1 - rate * (k - 1)).
  double rate_per_cycle = 0.001;
  // power:  C_k = C0 * (1 - alpha * (k - 1)^exponent).
  double alpha = 0.0;
  double exponent = 1.0;
};

// Everything the cycler simulation needs. Defaults give a 2 Ah cell with a
// CC(0.75C)-CV charge to 4.2 V and a 1C CC discharge to 2.7 V, mild
// resistance growth, and a first-order thermal response.
struct SynthCellParams {
  std::string cell_id = "synth";
  double nominal_capacity_ah = 2.0;
  std::size_t cycles = 100;
  FadeModel fade;
  double initial_resistance_ohm = 0.05;
  double resistance_growth_ohm_per_cycle = 2e-4;
  double cc_charge_current_a = 1.5;
  double cc_discharge_current_a = 2.0;
  double upper_cutoff_v = 4.2;
  double lower_cutoff_v = 2.7;
  double cv_cutoff_current_a = 0.1;
  double ambient_c = 24.0;
  double heating_c_per_w = 40.0;    // steady-state rise per watt of I^2 R
  double thermal_tau_s = 400.0;
  double rest_s = 300.0;
  double sample_period_s = 10.0;
  double noise_sd_current_a = 0.0;
  double noise_sd_voltage_v = 0.0;
  double noise_sd_temperature_c = 0.0;
  std::uint64_t seed = 1;
};

// Deterministic synthetic degradation run. Per cycle: CC charge until the
// terminal voltage (two-sigmoid OCV + IR) reaches the upper cutoff, CV hold
// until the current decays to the cutoff, rest, CC discharge sized so the
// cycle's throughput equals the faded capacity exactly. discharge_capacity
// and soh are recorded from the simulation before noise is applied, so
// ground truth is exact. Raises errc::argument when the fade model drives
// SOH to zero or below within the horizon.
CellHistory gen_cell(const SynthCellParams& params);

struct Distribution {
  enum class Kind : std::uint8_t { constant, uniform, normal } kind = Kind::constant;
  double a = 0.0;  // constant value / uniform lo / normal mean
  double b = 0.0;  // uniform hi / normal sd
};

struct SynthFleetParams {
  std::size_t n_sessions = 0;
  double charging_fraction = 0.5;  // remainder is driving
  Distribution charge_start;       // start SOC of charging sessions
  Distribution charge_span;        // SOC gained
  Distribution drive_start;        // start SOC of driving sessions
  Distribution drive_span;         // SOC lost
  std::uint64_t seed = 1;
};

// Session population with declared start/span laws, clamped to [0, 100],
// directions consistent with category by construction.
std::vector<DrivingSession> gen_sessions(const SynthFleetParams& params);

} // namespace bhm
