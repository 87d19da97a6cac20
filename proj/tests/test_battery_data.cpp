// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "bhm/battery_data.hpp"
#include "bhm/error.hpp"
#include "textio.hpp"

using namespace bhm;

namespace {

std::filesystem::path tmp_file(const char* name) {
  return std::filesystem::temp_directory_path() / name;
}

// One hand-built cycle: 1 A CC charge for 10 samples, CV hold, rest,
// 2 A discharge. dt = 100 s.
SampleSeries make_series() {
  SampleSeries s;
  auto push = [&](double t, double i, double v, double c) {
    s.time_s.push_back(t);
    s.current_a.push_back(i);
    s.voltage_v.push_back(v);
    s.temperature_c.push_back(c);
  };
  double t = 0.0;
  for (int k = 0; k < 10; ++k, t += 100) push(t, 1.0, 3.0 + 0.12 * k, 25.0);
  for (int k = 0; k < 4; ++k, t += 100) push(t, 0.5 - 0.1 * k, 4.2, 25.5);
  for (int k = 0; k < 2; ++k, t += 100) push(t, 0.0, 4.15, 25.0);
  for (int k = 0; k < 8; ++k, t += 100) push(t, -2.0, 4.1 - 0.18 * k, 26.0);
  return s;
}

} // namespace

TEST_CASE("segment_phases applies the precedence rules") {
  const SampleSeries s = make_series();
  const auto segs = segment_phases(s, 1.0, 4.2, 0.02, 0.01);
  REQUIRE(segs.size() == 4);
  CHECK(segs[0].kind == PhaseKind::cc_charge);
  CHECK(segs[0].first == 0);
  CHECK(segs[0].last == 9);
  CHECK(segs[1].kind == PhaseKind::cv_charge);
  CHECK(segs[1].last == 13);
  CHECK(segs[2].kind == PhaseKind::rest);
  CHECK(segs[3].kind == PhaseKind::cc_discharge);
  CHECK(segs[3].last == s.size() - 1);
  // Segments tile the series.
  for (std::size_t i = 1; i < segs.size(); ++i) CHECK(segs[i].first == segs[i - 1].last + 1);
}

TEST_CASE("segment precedence: cc_charge beats cv_charge at the cutoff") {
  SampleSeries s;
  s.time_s = {0, 1};
  s.current_a = {1.0, 0.3};
  s.voltage_v = {4.2, 4.2};
  s.temperature_c = {25, 25};
  const auto segs = segment_phases(s, 1.0, 4.2, 0.02, 0.01);
  REQUIRE(segs.size() == 2);
  CHECK(segs[0].kind == PhaseKind::cc_charge);
  CHECK(segs[1].kind == PhaseKind::cv_charge);
}

TEST_CASE("discharge capacity by coulomb counting") {
  Cycle c;
  c.series = make_series();
  c.phases = segment_phases(c.series, 1.0, 4.2, 0.02, 0.01);
  // 2 A over 700 s of trapezoid = 1400 As -> 0.38889 Ah.
  CHECK(discharge_capacity_ah(c) == doctest::Approx(1400.0 / 3600.0).epsilon(1e-12));
}

TEST_CASE("compute_soc_series anchors and counts coulombs") {
  SampleSeries s;
  const int n = 37;
  for (int i = 0; i < n; ++i) {
    s.time_s.push_back(i * 100.0);
    s.current_a.push_back(1.0);
    s.voltage_v.push_back(3.5);
    s.temperature_c.push_back(25.0);
  }
  // 1 A for 3600 s on a 1 Ah reference: exactly 0 -> 100 %.
  const auto soc = compute_soc_series(s, 0, n - 1, 0, 0.0, 1.0, nullptr);
  REQUIRE(soc.size() == static_cast<std::size_t>(n));
  CHECK(soc.front() == 0.0);
  CHECK(soc.back() == doctest::Approx(100.0).epsilon(1e-12));
  CHECK(soc[18] == doctest::Approx(50.0).epsilon(1e-12));

  // Discharge framing: anchor 100 at the start, negative current.
  for (auto& i : s.current_a) i = -1.0;
  bool oor = false;
  const auto soc_d = compute_soc_series(s, 0, n - 1, 0, 100.0, 1.0, &oor);
  CHECK(soc_d.front() == 100.0);
  CHECK(soc_d.back() == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(!oor);

  // Smaller reference capacity drives SOC past the range.
  const auto soc_over = compute_soc_series(s, 0, n - 1, 0, 100.0, 0.5, &oor);
  CHECK(oor);
  CHECK(soc_over.back() < 0.0);
}

TEST_CASE("history JSON round trip is byte-stable") {
  CellHistory h;
  h.cell_id = "rt";
  h.nominal_capacity_ah = 0.4;
  h.upper_cutoff_v = 4.2;
  h.lower_cutoff_v = 2.7;
  h.cc_charge_current_a = 1.0;
  Cycle c;
  c.index = 1;
  c.series = make_series();
  c.phases = segment_phases(c.series, 1.0, 4.2, 0.02, 0.01);
  c.discharge_capacity_ah = discharge_capacity_ah(c);
  c.soh_pct = 100.0 * c.discharge_capacity_ah / h.nominal_capacity_ah;
  h.cycles.push_back(c);
  validate_history(h);

  const std::string j1 = to_json(h);
  const CellHistory h2 = history_from_json(j1);
  const std::string j2 = to_json(h2);
  CHECK(j1 == j2);
  CHECK(h2.cycles.size() == 1);
  CHECK(h2.cycles[0].phases.size() == 4);
  CHECK(h2.cycles[0].series.voltage_v == h.cycles[0].series.voltage_v);

  const auto path = tmp_file("bhm_history_rt.json");
  save_history(h, path);
  const CellHistory h3 = load_history(path);
  CHECK(to_json(h3) == j1);
  std::filesystem::remove(path);
}

TEST_CASE("validate_history rejects broken structure") {
  CellHistory h;
  h.cell_id = "bad";
  h.nominal_capacity_ah = 1.0;
  h.upper_cutoff_v = 4.2;
  h.lower_cutoff_v = 2.7;
  h.cc_charge_current_a = 1.0;
  Cycle c;
  c.index = 1;
  c.series = make_series();
  c.series.time_s[5] = c.series.time_s[4];  // non-increasing
  c.phases = segment_phases(c.series, 1.0, 4.2, 0.02, 0.01);
  c.discharge_capacity_ah = 0.3;
  c.soh_pct = 30.0;
  h.cycles.push_back(c);
  try {
    validate_history(h);
    FAIL("expected data error");
  } catch (const Error& e) {
    CHECK(e.code() == errc::data);
  }
}

TEST_CASE("cycles CSV ingest: explicit phases, sidecar override, warnings") {
  const auto cyc = tmp_file("bhm_ing_cycles.csv");
  const auto cap = tmp_file("bhm_ing_capacity.csv");
  std::string csv = "cycle_index,time_s,current_a,voltage_v,temperature_c,phase\n";
  auto row = [&](int k, double t, double i, double v, const char* ph) {
    csv += std::to_string(k) + "," + textio::format_double(t) + "," +
           textio::format_double(i) + "," + textio::format_double(v) + ",25," + ph + "\n";
  };
  for (int k = 1; k <= 2; ++k) {
    row(k, 0, 1.0, 3.0, "cc_charge");
    row(k, 1800, 1.0, 4.2, "cc_charge");
    row(k, 1900, 0.2, 4.2, "cv_charge");
    row(k, 2000, 0.0, 4.15, "rest");
    row(k, 2100, -1.0, 4.1, "cc_discharge");
    row(k, 3900, -1.0, 3.0, "cc_discharge");
  }
  textio::write_text_file(cyc, csv);
  // Sidecar disagrees with the 0.5 Ah coulomb count by > 1 %.
  textio::write_text_file(cap, "cycle_index,capacity_ah\n1,0.52\n2,0.50\n");

  IngestOptions opt;
  opt.cell_id = "ing";
  opt.nominal_capacity_ah = 0.52;
  std::vector<std::string> warnings;
  const CellHistory h = ingest_cycles_csv(cyc, cap, opt, &warnings);
  REQUIRE(h.cycles.size() == 2);
  CHECK(h.cell_id == "ing");
  CHECK(h.cycles[0].phases.size() == 4);
  CHECK(h.cycles[0].phases[0].kind == PhaseKind::cc_charge);
  // Sidecar value wins; the disagreement is reported, not fixed up.
  CHECK(h.cycles[0].discharge_capacity_ah == 0.52);
  CHECK(h.cycles[0].soh_pct == doctest::Approx(100.0).epsilon(1e-12));
  CHECK(h.cycles[1].discharge_capacity_ah == 0.50);
  bool noted = false;
  for (const auto& w : warnings)
    if (w.find("1") != std::string::npos && w.find("%") != std::string::npos) noted = true;
  CHECK(noted);

  std::filesystem::remove(cyc);
  std::filesystem::remove(cap);
}

TEST_CASE("cycles CSV round trip through write_cycles_csv") {
  CellHistory h;
  h.cell_id = "loop";
  h.nominal_capacity_ah = 1400.0 / 3600.0;
  h.upper_cutoff_v = 4.2;
  h.lower_cutoff_v = 2.7;
  h.cc_charge_current_a = 1.0;
  for (int k = 1; k <= 2; ++k) {
    Cycle c;
    c.index = k;
    c.series = make_series();
    c.phases = segment_phases(c.series, 1.0, 4.2, 0.02, 0.01);
    c.discharge_capacity_ah = discharge_capacity_ah(c);
    c.soh_pct = 100.0 * c.discharge_capacity_ah / h.nominal_capacity_ah;
    h.cycles.push_back(c);
  }
  validate_history(h);

  const auto cyc = tmp_file("bhm_rt_cycles.csv");
  const auto cap = tmp_file("bhm_rt_capacity.csv");
  write_cycles_csv(h, cyc, cap);

  IngestOptions opt;
  opt.cell_id = "loop";
  opt.nominal_capacity_ah = h.nominal_capacity_ah;
  opt.cc_charge_current_a = 1.0;
  opt.upper_cutoff_v = 4.2;
  opt.lower_cutoff_v = 2.7;
  const CellHistory back = ingest_cycles_csv(cyc, cap, opt, nullptr);
  CHECK(to_json(back) == to_json(h));

  std::filesystem::remove(cyc);
  std::filesystem::remove(cap);
}

TEST_CASE("ingest errors carry the right category") {
  const auto cyc = tmp_file("bhm_bad_cycles.csv");
  textio::write_text_file(cyc, "wrong,header\n1,2\n");
  try {
    (void)ingest_cycles_csv(cyc, std::nullopt, IngestOptions{}, nullptr);
    FAIL("expected format error");
  } catch (const Error& e) {
    CHECK(e.code() == errc::format);
  }
  std::filesystem::remove(cyc);
  try {
    (void)ingest_cycles_csv(tmp_file("bhm_missing_nowhere.csv"), std::nullopt, IngestOptions{},
                            nullptr);
    FAIL("expected io error");
  } catch (const Error& e) {
    CHECK(e.code() == errc::io);
  }
}
