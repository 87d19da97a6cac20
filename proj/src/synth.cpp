// SPDX-License-Identifier: Apache-2.0
#include "bhm/synth.hpp"

#include <algorithm>
#include <cmath>

#include "bhm/battery_data.hpp"
#include "bhm/error.hpp"
#include "bhm/rng.hpp"

namespace bhm {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Open-circuit voltage over relative state of charge s (0..1, mild
// extrapolation tolerated). Two sigmoids give the curve two plateaus, so
// differential features have real structure to find.
double ocv(double s) {
  return 3.0 + 0.45 * sigmoid(8.0 * (s - 0.12)) + 0.50 * sigmoid(6.0 * (s - 0.6)) + 0.3 * s;
}

double capacity_at(const SynthCellParams& p, std::size_t k /*1-based*/) {
  const auto n = static_cast<double>(k - 1);
  switch (p.fade.kind) {
    case FadeModel::Kind::linear:
      return p.nominal_capacity_ah * (1.0 - p.fade.rate_per_cycle * n);
    case FadeModel::Kind::power:
      return p.nominal_capacity_ah * (1.0 - p.fade.alpha * std::pow(n, p.fade.exponent));
  }
  return p.nominal_capacity_ah;
}

struct CycleBuilder {
  SampleSeries series;
  std::vector<PhaseSegment> phases;
  double t = 0.0;
  double temp;

  explicit CycleBuilder(double ambient) : temp(ambient) {}

  void sample(double i, double v) {
    series.time_s.push_back(t);
    series.current_a.push_back(i);
    series.voltage_v.push_back(v);
    series.temperature_c.push_back(temp);
  }

  void close_phase(PhaseKind kind, std::size_t first) {
    if (series.time_s.size() > first)
      phases.push_back({kind, first, series.time_s.size() - 1});
  }
};

} // namespace

CellHistory gen_cell(const SynthCellParams& p) {
  if (p.cycles == 0) raise(errc::argument, "cycles must be >= 1");
  if (p.nominal_capacity_ah <= 0.0) raise(errc::argument, "nominal capacity must be > 0");
  if (p.cc_charge_current_a <= 0.0 || p.cc_discharge_current_a <= 0.0)
    raise(errc::argument, "currents must be > 0");
  if (p.sample_period_s <= 0.0) raise(errc::argument, "sample period must be > 0");
  if (p.cv_cutoff_current_a <= 0.0 || p.cv_cutoff_current_a >= p.cc_charge_current_a)
    raise(errc::argument, "cv cutoff must be inside (0, cc current)");
  if (capacity_at(p, p.cycles) <= 0.0)
    raise(errc::argument, "fade model drives SOH to zero within the horizon");

  CellHistory h;
  h.cell_id = p.cell_id;
  h.nominal_capacity_ah = p.nominal_capacity_ah;
  h.upper_cutoff_v = p.upper_cutoff_v;
  h.lower_cutoff_v = p.lower_cutoff_v;
  h.cc_charge_current_a = p.cc_charge_current_a;

  const double dt = p.sample_period_s;
  for (std::size_t k = 1; k <= p.cycles; ++k) {
    const double cap = capacity_at(p, k);
    const double res =
        p.initial_resistance_ohm + p.resistance_growth_ohm_per_cycle * static_cast<double>(k - 1);

    CycleBuilder b(p.ambient_c);
    auto step_temp = [&](double current) {
      const double steady = p.ambient_c + p.heating_c_per_w * current * current * res;
      b.temp += dt * (steady - b.temp) / p.thermal_tau_s;
    };

    // CC charge from empty until the terminal voltage reaches the cutoff.
    double q = 0.0;
    std::size_t first = 0;
    while (true) {
      const double v = ocv(q / cap) + p.cc_charge_current_a * res;
      if (v >= p.upper_cutoff_v) break;
      b.sample(p.cc_charge_current_a, v);
      step_temp(p.cc_charge_current_a);
      b.t += dt;
      q += p.cc_charge_current_a * dt / 3600.0;
      if (b.t > 48.0 * 3600.0) raise(errc::internal, "CC charge fails to terminate");
    }
    b.close_phase(PhaseKind::cc_charge, first);

    // CV hold at the cutoff voltage until the current decays away.
    first = b.series.time_s.size();
    while (true) {
      const double i = (p.upper_cutoff_v - ocv(q / cap)) / res;
      if (i <= p.cv_cutoff_current_a) break;
      b.sample(i, p.upper_cutoff_v);
      step_temp(i);
      b.t += dt;
      q += i * dt / 3600.0;
      if (b.t > 96.0 * 3600.0) raise(errc::internal, "CV charge fails to terminate");
    }
    b.close_phase(PhaseKind::cv_charge, first);

    // Rest.
    first = b.series.time_s.size();
    const auto n_rest = static_cast<std::size_t>(std::llround(p.rest_s / dt));
    for (std::size_t j = 0; j < n_rest; ++j) {
      b.sample(0.0, ocv(q / cap));
      step_temp(0.0);
      b.t += dt;
    }
    b.close_phase(PhaseKind::rest, first);

    // CC discharge timed so the throughput equals the faded capacity
    // exactly; the grid gets one extra off-period sample when the duration
    // is not a multiple of the sample period.
    first = b.series.time_s.size();
    const double duration = 3600.0 * cap / p.cc_discharge_current_a;
    const double t0 = b.t;
    const auto n_full = static_cast<std::size_t>(std::floor(duration / dt));
    for (std::size_t j = 0; j <= n_full; ++j) {
      const double rel = static_cast<double>(j) * dt;
      b.t = t0 + rel;
      const double s = (q - p.cc_discharge_current_a * rel / 3600.0) / cap;
      b.sample(-p.cc_discharge_current_a, ocv(s) - p.cc_discharge_current_a * res);
      step_temp(p.cc_discharge_current_a);
    }
    if (duration - static_cast<double>(n_full) * dt > 1e-9 * dt) {
      b.t = t0 + duration;
      const double s = (q - cap) / cap;
      b.sample(-p.cc_discharge_current_a, ocv(s) - p.cc_discharge_current_a * res);
    }
    b.close_phase(PhaseKind::cc_discharge, first);

    Cycle cycle;
    cycle.index = static_cast<std::uint32_t>(k);
    cycle.series = std::move(b.series);
    cycle.phases = std::move(b.phases);
    cycle.discharge_capacity_ah = cap;  // ground truth, pre-noise
    cycle.soh_pct = 100.0 * cap / p.nominal_capacity_ah;

    if (p.noise_sd_current_a > 0.0) {
      rng64 g(mix_seed(p.seed, k, 1));
      for (double& v : cycle.series.current_a) v += normal(g, 0.0, p.noise_sd_current_a);
    }
    if (p.noise_sd_voltage_v > 0.0) {
      rng64 g(mix_seed(p.seed, k, 2));
      for (double& v : cycle.series.voltage_v) v += normal(g, 0.0, p.noise_sd_voltage_v);
    }
    if (p.noise_sd_temperature_c > 0.0) {
      rng64 g(mix_seed(p.seed, k, 3));
      for (double& v : cycle.series.temperature_c) v += normal(g, 0.0, p.noise_sd_temperature_c);
    }

    h.cycles.push_back(std::move(cycle));
  }

  validate_history(h);
  return h;
}

namespace {

double draw(const Distribution& d, rng64& g) {
  switch (d.kind) {
    case Distribution::Kind::constant: return d.a;
    case Distribution::Kind::uniform: return uniform(g, d.a, d.b);
    case Distribution::Kind::normal: return normal(g, d.a, d.b);
  }
  return d.a;
}

} // namespace

std::vector<DrivingSession> gen_sessions(const SynthFleetParams& p) {
  if (!(p.charging_fraction >= 0.0 && p.charging_fraction <= 1.0))
    raise(errc::argument, "charging_fraction must be inside [0, 1]");
  const auto n_charging = static_cast<std::size_t>(
      std::llround(p.charging_fraction * static_cast<double>(p.n_sessions)));
  std::vector<DrivingSession> out;
  out.reserve(p.n_sessions);
  rng64 g(p.seed);
  for (std::size_t i = 0; i < p.n_sessions; ++i) {
    DrivingSession s;
    if (i < n_charging) {
      s.category = SessionCategory::charging;
      const double start = std::clamp(draw(p.charge_start, g), 0.0, 100.0);
      const double span = std::max(0.0, draw(p.charge_span, g));
      s.start_soc = start;
      s.end_soc = std::min(100.0, start + span);
    } else {
      s.category = SessionCategory::driving;
      const double start = std::clamp(draw(p.drive_start, g), 0.0, 100.0);
      const double span = std::max(0.0, draw(p.drive_span, g));
      s.start_soc = start;
      s.end_soc = std::max(0.0, start - span);
    }
    out.push_back(s);
  }
  return out;
}

} // namespace bhm
