// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <set>

#include "bhm/battery_data.hpp"
#include "bhm/error.hpp"
#include "bhm/synth.hpp"

using namespace bhm;

TEST_CASE("synthetic cell capacities follow the fade model exactly") {
  SynthCellParams p;
  p.cell_id = "lin";
  p.cycles = 6;
  const CellHistory h = gen_cell(p);
  REQUIRE(h.cycles.size() == 6);
  CHECK(h.nominal_capacity_ah == p.nominal_capacity_ah);
  for (std::size_t k = 0; k < 6; ++k) {
    const double expect =
        p.nominal_capacity_ah * (1.0 - p.fade.rate_per_cycle * static_cast<double>(k));
    CHECK(h.cycles[k].index == static_cast<int>(k) + 1);
    CHECK(h.cycles[k].discharge_capacity_ah == doctest::Approx(expect).epsilon(1e-15));
    CHECK(h.cycles[k].soh_pct ==
          doctest::Approx(100.0 * expect / p.nominal_capacity_ah).epsilon(1e-15));
  }

  SynthCellParams pw = p;
  pw.fade.kind = FadeModel::Kind::power;
  pw.fade.alpha = 0.004;
  pw.fade.exponent = 0.8;
  const CellHistory hp = gen_cell(pw);
  const double c4 = pw.nominal_capacity_ah * (1.0 - 0.004 * std::pow(4.0, 0.8));
  CHECK(hp.cycles[4].discharge_capacity_ah == doctest::Approx(c4).epsilon(1e-15));
}

TEST_CASE("synthetic cycle structure: phases, cutoffs, timed discharge") {
  SynthCellParams p;
  p.cycles = 3;
  p.noise_sd_voltage_v = 0.0;
  const CellHistory h = gen_cell(p);
  for (const Cycle& c : h.cycles) {
    std::set<PhaseKind> kinds;
    for (const auto& seg : c.phases) kinds.insert(seg.kind);
    CHECK(kinds.count(PhaseKind::cc_charge));
    CHECK(kinds.count(PhaseKind::cv_charge));
    CHECK(kinds.count(PhaseKind::rest));
    CHECK(kinds.count(PhaseKind::cc_discharge));

    for (const auto& seg : c.phases) {
      if (seg.kind == PhaseKind::cc_discharge) {
        const double duration = c.series.time_s[seg.last] - c.series.time_s[seg.first];
        const double expect = 3600.0 * c.discharge_capacity_ah / p.cc_discharge_current_a;
        CHECK(duration == doctest::Approx(expect).epsilon(1e-9));
        for (std::size_t i = seg.first; i <= seg.last; ++i)
          CHECK(c.series.current_a[i] == -p.cc_discharge_current_a);
      }
      if (seg.kind == PhaseKind::cv_charge) {
        for (std::size_t i = seg.first; i <= seg.last; ++i) {
          CHECK(c.series.voltage_v[i] == doctest::Approx(p.upper_cutoff_v).epsilon(1e-12));
          CHECK(c.series.current_a[i] > 0.0);
        }
      }
    }
    // Noise-free terminal voltage stays inside the protocol window
    // (numerically the CC->CV handoff may graze the cutoff).
    for (double v : c.series.voltage_v) {
      CHECK(v <= p.upper_cutoff_v + 0.05);
      CHECK(v >= p.lower_cutoff_v - 0.35);
    }
  }
}

TEST_CASE("synthetic generation is deterministic and seed-sensitive") {
  SynthCellParams p;
  p.cycles = 3;
  p.noise_sd_voltage_v = 0.005;
  p.noise_sd_current_a = 0.002;
  p.noise_sd_temperature_c = 0.05;
  p.seed = 77;
  const std::string a = to_json(gen_cell(p));
  const std::string b = to_json(gen_cell(p));
  CHECK(a == b);
  p.seed = 78;
  CHECK(to_json(gen_cell(p)) != a);

  // Without noise the seed is irrelevant.
  SynthCellParams q;
  q.cycles = 2;
  q.seed = 1;
  const std::string c = to_json(gen_cell(q));
  q.seed = 999;
  CHECK(to_json(gen_cell(q)) == c);
}

TEST_CASE("synthetic cell parameter validation") {
  SynthCellParams p;
  p.cycles = 0;
  CHECK_THROWS_AS((void)gen_cell(p), Error);

  SynthCellParams fade_out;
  fade_out.cycles = 2000;
  fade_out.fade.rate_per_cycle = 0.01;  // hits zero near cycle 100
  try {
    (void)gen_cell(fade_out);
    FAIL("expected argument error");
  } catch (const Error& e) {
    CHECK(e.code() == errc::argument);
  }

  SynthCellParams bad_cv;
  bad_cv.cv_cutoff_current_a = 10.0;  // above the CC current
  CHECK_THROWS_AS((void)gen_cell(bad_cv), Error);
}

TEST_CASE("synthetic sessions: counts, direction, clamping, determinism") {
  SynthFleetParams p;
  p.n_sessions = 200;
  p.charging_fraction = 0.25;
  p.charge_start = {Distribution::Kind::uniform, 0.0, 90.0};
  p.charge_span = {Distribution::Kind::uniform, 10.0, 60.0};
  p.drive_start = {Distribution::Kind::uniform, 20.0, 100.0};
  p.drive_span = {Distribution::Kind::normal, 30.0, 10.0};
  p.seed = 5;
  const auto sessions = gen_sessions(p);
  REQUIRE(sessions.size() == 200);
  std::size_t n_charge = 0;
  for (const auto& s : sessions) {
    CHECK(s.start_soc >= 0.0);
    CHECK(s.start_soc <= 100.0);
    CHECK(s.end_soc >= 0.0);
    CHECK(s.end_soc <= 100.0);
    if (s.category == SessionCategory::charging) {
      ++n_charge;
      CHECK(s.end_soc >= s.start_soc);
    } else {
      CHECK(s.end_soc <= s.start_soc);
    }
  }
  CHECK(n_charge == 50);

  const auto again = gen_sessions(p);
  for (std::size_t i = 0; i < sessions.size(); ++i) {
    CHECK(sessions[i].start_soc == again[i].start_soc);
    CHECK(sessions[i].end_soc == again[i].end_soc);
  }

  SynthFleetParams bad = p;
  bad.charging_fraction = 1.5;
  CHECK_THROWS_AS((void)gen_sessions(bad), Error);
}
