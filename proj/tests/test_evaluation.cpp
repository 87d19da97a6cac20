// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "bhm/battery_data.hpp"
#include "bhm/error.hpp"
#include "bhm/evaluation.hpp"
#include "bhm/registry.hpp"
#include "bhm/rng.hpp"
#include "bhm/synth.hpp"

using namespace bhm;

namespace {

// Discharge-only cells with a closed-form voltage-vs-SOC slope per cycle.
// Cycle k: capacity 2(1 - 0.01 k) Ah at -2 A, so soh = 100 - k and the SOC
// sweep covers [k, 100]; v(soc) = 4.1 - m_k (100 - soc). Any VDE_SOC window
// therefore extracts exactly m_k * window_width.
CellHistory ramp_cell(const std::string& id, std::size_t n_cycles,
                      const std::vector<double>& slope_per_cycle) {
  CellHistory h;
  h.cell_id = id;
  h.nominal_capacity_ah = 2.0;
  h.upper_cutoff_v = 4.2;
  h.lower_cutoff_v = 2.7;
  h.cc_charge_current_a = 1.5;
  for (std::size_t k = 0; k < n_cycles; ++k) {
    const double cap = 2.0 * (1.0 - 0.01 * static_cast<double>(k));
    const double dur = 1800.0 * cap;  // seconds at 2 A
    const double m = slope_per_cycle[k];
    Cycle c;
    c.index = static_cast<int>(k) + 1;
    SampleSeries& s = c.series;
    const std::size_t n = 61;
    for (std::size_t i = 0; i < n; ++i) {
      const double t = dur * static_cast<double>(i) / static_cast<double>(n - 1);
      s.time_s.push_back(t);
      s.current_a.push_back(-2.0);
      s.voltage_v.push_back(4.1 - m * t / 36.0);  // soc falls 1 %/36 s
      s.temperature_c.push_back(25.0);
    }
    c.phases = segment_phases(s, 1.5, 4.2, 0.03, 0.01);
    c.discharge_capacity_ah = discharge_capacity_ah(c);
    c.soh_pct = 100.0 * c.discharge_capacity_ah / h.nominal_capacity_ah;
    h.cycles.push_back(std::move(c));
  }
  validate_history(h);
  return h;
}

std::vector<double> linear_slopes(std::size_t n) {
  std::vector<double> m(n);
  for (std::size_t k = 0; k < n; ++k)
    m[k] = 0.012 * (1.0 + 0.05 * static_cast<double>(k));
  return m;
}

EvaluationRecord make_rec(std::string id, std::optional<double> mean_pcc, bool partial,
                          double rmse_woa) {
  EvaluationRecord r;
  r.hi_id = std::move(id);
  r.mean_abs_pcc = mean_pcc;
  r.partial = partial;
  r.rmse_elm = rmse_woa + 0.5;
  r.rmse_woa_elm = rmse_woa;
  return r;
}

EngineConfig fast_engine() {
  EngineConfig e;
  e.hidden_dim = 4;
  e.n_seeds = 2;
  e.woa_population = 5;
  e.woa_iterations = 3;
  return e;
}

} // namespace

TEST_CASE("pcc fixtures and failure modes") {
  const std::vector<double> x{1.0, 2.0, 3.0, 4.0};
  const std::vector<double> y{1.0, 2.0, 4.0, 8.0};
  CHECK(pcc(x, y) == doctest::Approx(11.5 / std::sqrt(143.75)).epsilon(1e-14));

  std::vector<double> lin(x.size()), neg(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    lin[i] = 2.0 * x[i] + 3.0;
    neg[i] = -x[i];
  }
  CHECK(std::abs(pcc(x, lin) - 1.0) < 1e-12);
  CHECK(std::abs(pcc(x, neg) + 1.0) < 1e-12);

  const std::vector<double> two{1.0, 2.0};
  try {
    (void)pcc(two, two);
    FAIL("expected insufficient");
  } catch (const Error& e) {
    CHECK(e.code() == errc::insufficient);
  }
  const std::vector<double> flat{5.0, 5.0, 5.0};
  const std::vector<double> vary{1.0, 2.0, 3.0};
  try {
    (void)pcc(flat, vary);
    FAIL("expected degenerate");
  } catch (const Error& e) {
    CHECK(e.code() == errc::degenerate);
  }
  CHECK_THROWS_AS((void)pcc(x, vary), Error);  // length mismatch
}

TEST_CASE("pcc agrees with the product-moment form and is affine-invariant") {
  rng64 g(314);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 5 + static_cast<std::size_t>(g() % 40);
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = uniform(g, -5.0, 5.0);
      y[i] = 0.7 * x[i] + uniform(g, -2.0, 2.0);
    }
    // Direct product-moment evaluation, different algebra from the library.
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
      sx += x[i];
      sy += y[i];
      sxx += x[i] * x[i];
      syy += y[i] * y[i];
      sxy += x[i] * y[i];
    }
    const double nn = static_cast<double>(n);
    const double ref = (nn * sxy - sx * sy) /
                       std::sqrt((nn * sxx - sx * sx) * (nn * syy - sy * sy));
    const double lib = pcc(x, y);
    CHECK(std::abs(lib - ref) < 1e-12);

    std::vector<double> xs(n);
    const double a = uniform(g, -3.0, 3.0);
    const double b = uniform(g, -10.0, 10.0);
    if (a == 0.0) continue;
    for (std::size_t i = 0; i < n; ++i) xs[i] = a * x[i] + b;
    const double scaled = pcc(xs, y);
    CHECK(std::abs(scaled - (a > 0 ? lib : -lib)) < 1e-12);
  }
}

TEST_CASE("box statistics five-number fixtures") {
  BoxStats s = box_stats({9, 1, 5, 3, 7, 2, 8, 4, 6});
  CHECK(s.min == 1);
  CHECK(s.q1 == 3);
  CHECK(s.median == 5);
  CHECK(s.q3 == 7);
  CHECK(s.max == 9);
  CHECK(s.mean == 5);
  CHECK(s.whisker_lo == 1);
  CHECK(s.whisker_hi == 9);
  CHECK(s.outliers.empty());

  BoxStats o = box_stats({1, 2, 3, 4, 100});
  CHECK(o.q1 == 2);
  CHECK(o.median == 3);
  CHECK(o.q3 == 4);
  CHECK(o.whisker_hi == 4);  // 100 sits beyond the 1.5 IQR fence
  REQUIRE(o.outliers.size() == 1);
  CHECK(o.outliers[0] == 100);

  // Even length: quantiles interpolate between order statistics.
  BoxStats e = box_stats({1, 2, 3, 4});
  CHECK(e.q1 == doctest::Approx(1.75).epsilon(1e-15));
  CHECK(e.median == doctest::Approx(2.5).epsilon(1e-15));
  CHECK(e.q3 == doctest::Approx(3.25).epsilon(1e-15));

  CHECK_THROWS_AS((void)box_stats({}), Error);
}

TEST_CASE("evaluate_hi scores a clean synthetic pair of cells") {
  const Registry reg = Registry::builtin();
  SynthCellParams p;
  p.cycles = 12;
  p.seed = 7;
  p.cell_id = "cell_a";
  std::vector<CellHistory> cells{gen_cell(p)};
  p.seed = 9;
  p.cell_id = "cell_b";
  cells.push_back(gen_cell(p));

  const EngineConfig engine = fast_engine();
  const EvaluationRecord rec =
      evaluate_hi(cells, reg, reg.get("CCDT"), std::nullopt, engine);
  // Discharge duration is exactly proportional to capacity here.
  REQUIRE(rec.mean_abs_pcc.has_value());
  CHECK(*rec.mean_abs_pcc > 0.999);
  CHECK(rec.per_cell_pcc.size() == 2);
  CHECK(rec.degenerate_cells == 0);
  CHECK(!rec.partial);
  CHECK(!rec.interval.has_value());
  for (const auto& [id, n] : rec.n_cycles_used) CHECK(n == 12);
  CHECK(rec.rmse_elm > 0.0);
  CHECK(rec.rmse_woa_elm > 0.0);
  CHECK(std::isfinite(rec.rmse_elm));
  CHECK(std::isfinite(rec.rmse_woa_elm));

  // Same inputs, same numbers: the seed schedule is derived, not ambient.
  const EvaluationRecord again =
      evaluate_hi(cells, reg, reg.get("CCDT"), std::nullopt, engine);
  CHECK(again.rmse_elm == rec.rmse_elm);
  CHECK(again.rmse_woa_elm == rec.rmse_woa_elm);
}

TEST_CASE("evaluate_hi counts degenerate cells without failing") {
  const Registry reg = Registry::builtin();
  std::vector<CellHistory> cells;
  cells.push_back(ramp_cell("good", 8, linear_slopes(8)));

  // Constant discharge duration with varying current: capacity (and SOH)
  // move while CCDT stays flat.
  CellHistory flat;
  flat.cell_id = "flat";
  flat.nominal_capacity_ah = 2.0;
  flat.upper_cutoff_v = 4.2;
  flat.lower_cutoff_v = 2.7;
  flat.cc_charge_current_a = 1.5;
  for (std::size_t k = 0; k < 8; ++k) {
    Cycle c;
    c.index = static_cast<int>(k) + 1;
    const double amps = 2.0 * (1.0 - 0.01 * static_cast<double>(k));
    for (std::size_t i = 0; i <= 60; ++i) {
      const double t = 3600.0 * static_cast<double>(i) / 60.0;
      c.series.time_s.push_back(t);
      c.series.current_a.push_back(-amps);
      c.series.voltage_v.push_back(4.0 - t / 3600.0);
      c.series.temperature_c.push_back(25.0);
    }
    c.phases = segment_phases(c.series, 1.5, 4.2, 0.03, 0.01);
    c.discharge_capacity_ah = discharge_capacity_ah(c);
    c.soh_pct = 100.0 * c.discharge_capacity_ah / flat.nominal_capacity_ah;
    flat.cycles.push_back(std::move(c));
  }
  validate_history(flat);
  cells.push_back(std::move(flat));

  const EvaluationRecord rec =
      evaluate_hi(cells, reg, reg.get("CCDT"), std::nullopt, fast_engine());
  CHECK(rec.degenerate_cells == 1);
  CHECK(rec.per_cell_pcc.size() == 1);
  CHECK(rec.per_cell_pcc.count("good") == 1);
  REQUIRE(rec.mean_abs_pcc.has_value());
  CHECK(*rec.mean_abs_pcc > 0.999);
}

TEST_CASE("evaluate_hi raises when no cell can fit a model") {
  const Registry reg = Registry::builtin();
  std::vector<CellHistory> cells{ramp_cell("tiny", 4, linear_slopes(4))};
  try {
    (void)evaluate_hi(cells, reg, reg.get("CCDT"), std::nullopt, fast_engine());
    FAIL("expected evaluation error");
  } catch (const Error& e) {
    CHECK(e.code() == errc::evaluation);
  }
}

TEST_CASE("evaluate_hi on a fused indicator reports no PCC") {
  Registry reg = Registry::builtin();
  reg.fuse({"VRE_SOC", "VDE_SOC"}, "FUSED");
  SynthCellParams p;
  p.cycles = 10;
  p.seed = 3;
  std::vector<CellHistory> cells{gen_cell(p)};
  const EvaluationRecord rec =
      evaluate_hi(cells, reg, reg.get("FUSED"), std::nullopt, fast_engine());
  CHECK(!rec.mean_abs_pcc.has_value());
  CHECK(rec.per_cell_pcc.empty());
  CHECK(rec.rmse_elm > 0.0);
}

TEST_CASE("interval grid search enumerates every ordered pair") {
  const Registry reg = Registry::builtin();
  std::vector<CellHistory> cells{ramp_cell("a", 10, linear_slopes(10))};

  const IntervalSpec bounds{IntervalRef::soc_pct, 0.0, 100.0};
  const GridSearchResult res =
      grid_search_interval(cells, reg, reg.get("VDE_SOC"), bounds, 10, true);
  // 10 breakpoints -> 45 ordered pairs; a perfect score suppresses the
  // refinement pass.
  CHECK(res.candidates.size() == 45);
  CHECK(!res.refined);
  CHECK(res.best_mean_abs_pcc == doctest::Approx(1.0).epsilon(1e-9));
  // The returned interval is the argmax over everything evaluated.
  for (const auto& c : res.candidates)
    if (c.mean_abs_pcc) CHECK(*c.mean_abs_pcc <= res.best_mean_abs_pcc + 1e-12);
}

TEST_CASE("interval grid search refines below the confidence bar") {
  const Registry reg = Registry::builtin();
  // Alternating slope perturbation caps |PCC| near 0.93 for every window.
  std::vector<double> m(10);
  for (std::size_t k = 0; k < 10; ++k)
    m[k] = 0.012 * (1.0 + 0.05 * static_cast<double>(k) +
                    0.12 * static_cast<double>(k % 2));
  std::vector<CellHistory> cells{ramp_cell("n", 10, m)};

  const IntervalSpec bounds{IntervalRef::soc_pct, 0.0, 100.0};
  const GridSearchResult res =
      grid_search_interval(cells, reg, reg.get("VDE_SOC"), bounds, 10, true);
  CHECK(res.refined);
  CHECK(res.candidates.size() == 90);
  CHECK(res.best_mean_abs_pcc > 0.9);
  CHECK(res.best_mean_abs_pcc < 0.95);

  // Refinement off: single pass only.
  const GridSearchResult flat =
      grid_search_interval(cells, reg, reg.get("VDE_SOC"), bounds, 10, false);
  CHECK(!flat.refined);
  CHECK(flat.candidates.size() == 45);
}

TEST_CASE("interval grid search validation and unscorable grids") {
  const Registry reg = Registry::builtin();
  std::vector<CellHistory> cells{ramp_cell("a", 10, linear_slopes(10))};
  const IntervalSpec bounds{IntervalRef::soc_pct, 0.0, 100.0};

  CHECK_THROWS_AS(
      (void)grid_search_interval(cells, reg, reg.get("CCDT"), bounds, 10, true), Error);
  const IntervalSpec wrong{IntervalRef::voltage_v, 0.0, 100.0};
  CHECK_THROWS_AS(
      (void)grid_search_interval(cells, reg, reg.get("VDE_SOC"), wrong, 10, true), Error);
  const IntervalSpec inverted{IntervalRef::soc_pct, 100.0, 0.0};
  CHECK_THROWS_AS(
      (void)grid_search_interval(cells, reg, reg.get("VDE_SOC"), inverted, 10, true),
      Error);
  CHECK_THROWS_AS(
      (void)grid_search_interval(cells, reg, reg.get("VDE_SOC"), bounds, 1, true), Error);

  // Two cycles: every candidate lacks the 3 pairs a correlation needs.
  std::vector<CellHistory> two{ramp_cell("b", 2, linear_slopes(2))};
  try {
    (void)grid_search_interval(two, reg, reg.get("VDE_SOC"), bounds, 4, true);
    FAIL("expected search error");
  } catch (const Error& e) {
    CHECK(e.code() == errc::search);
  }
}

TEST_CASE("SOC heatmap grid, indexing, and entry status") {
  const Registry reg = Registry::builtin();
  std::vector<CellHistory> cells;
  cells.push_back(ramp_cell("a", 10, linear_slopes(10)));
  cells.push_back(ramp_cell("b", 10, linear_slopes(10)));

  const HeatmapTable t = soc_heatmap(cells, reg, reg.get("VDE_SOC"), 50.0, 0.0, 100.0);
  REQUIRE(t.breakpoints.size() == 3);
  CHECK(t.breakpoints[0] == 0.0);
  CHECK(t.breakpoints[1] == 50.0);
  CHECK(t.breakpoints[2] == 100.0);
  REQUIRE(t.entries.size() == 3);
  CHECK(t.pair_index(0, 1) == 0);
  CHECK(t.pair_index(0, 2) == 1);
  CHECK(t.pair_index(1, 2) == 2);
  CHECK_THROWS_AS((void)t.pair_index(1, 1), Error);
  CHECK_THROWS_AS((void)t.pair_index(0, 3), Error);
  // Clipped windows ([0,50], [0,100]) mix the per-cycle slope with a
  // shrinking covered span, so only the fully covered pair is exactly
  // affine in SOH; the others stay close.
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = i + 1; j < 3; ++j) {
      CHECK(t.at(i, j).status == HeatCell::ok);
      CHECK(t.at(i, j).abs_pcc > 0.98);
    }
  CHECK(t.at(1, 2).abs_pcc == doctest::Approx(1.0).epsilon(1e-9));

  // Degenerate: values exist but no cell musters a defined correlation.
  std::vector<CellHistory> two{ramp_cell("c", 2, linear_slopes(2))};
  const HeatmapTable d = soc_heatmap(two, reg, reg.get("VDE_SOC"), 50.0, 0.0, 50.0);
  REQUIRE(d.entries.size() == 1);
  CHECK(d.at(0, 1).status == HeatCell::degenerate);

  // Missing: the window is never covered (these cycles stop above 5 % SOC).
  CellHistory high = ramp_cell("d", 10, linear_slopes(10));
  high.cycles.erase(high.cycles.begin(), high.cycles.begin() + 6);
  const std::vector<CellHistory> hv{high};
  const HeatmapTable miss = soc_heatmap(hv, reg, reg.get("VDE_SOC"), 5.0, 0.0, 5.0);
  REQUIRE(miss.entries.size() == 1);
  CHECK(miss.at(0, 1).status == HeatCell::missing);

  CHECK_THROWS_AS((void)soc_heatmap(cells, reg, reg.get("CCDT"), 50.0, 0.0, 100.0),
                  Error);
  CHECK_THROWS_AS((void)soc_heatmap(cells, reg, reg.get("VDE_SOC"), 0.0, 0.0, 100.0),
                  Error);
}

TEST_CASE("screening walks the four-step funnel") {
  const Registry reg = Registry::builtin();
  std::vector<EvaluationRecord> recs;
  recs.push_back(make_rec("CCDT", 0.997, false, 0.2));
  recs.push_back(make_rec("TEVD", 0.995, true, 0.5));
  recs.push_back(make_rec("SDV", 0.993, true, 0.6));
  recs.push_back(make_rec("VDET", 0.978, true, 0.8));
  recs.push_back(make_rec("ICP", 0.981, true, 0.84));
  recs.push_back(make_rec("ICPL", 0.901, true, 2.5));
  recs.push_back(make_rec("DVV", 0.979, true, 0.9));
  recs.push_back(make_rec("SK", 0.789, false, 2.4));
  recs.push_back(make_rec("SD", 0.610, false, 3.0));

  const std::map<std::string, double> probs{{"VDE_SOC", 0.1067}, {"ICP_SOC", 0.1336}};
  const ScreeningReport rep = screen(recs, reg, probs, ScreeningConfig::defaults());

  REQUIRE(rep.step_survivors.size() == 4);
  CHECK(rep.step_survivors[0].size() == 7);  // SK, SD below the floor
  CHECK(rep.step_survivors[1].size() == 6);  // CCDT needs the full curve
  CHECK(rep.step_survivors[2] == std::vector<std::string>{"VDET", "ICP", "DVV"});
  CHECK(rep.final_ids == std::vector<std::string>{"VDE_SOC", "ICP_SOC"});
  CHECK(rep.soc_mapping.at("VDET") == "VDE_SOC");
  CHECK(rep.soc_mapping.at("ICP") == "ICP_SOC");

  auto reason_of = [&](const std::string& id) {
    for (const auto& d : rep.drops)
      if (d.id == id) return d.reason;
    return std::string();
  };
  CHECK(reason_of("SK").find("below threshold") != std::string::npos);
  CHECK(reason_of("CCDT") == "needs the full curve");
  CHECK(reason_of("TEVD") == "redundant with VDET");
  CHECK(reason_of("SDV") == "redundant with VDET");
  CHECK(reason_of("ICPL") == "redundant with ICP");
  CHECK(reason_of("DVV") == "no SOC-referenced form");

  // Report JSON carries the same story.
  const std::string j = rep.to_json();
  CHECK(j.find("\"final_ids\"") != std::string::npos);
  CHECK(j.find("VDE_SOC") != std::string::npos);
}

TEST_CASE("screening keeper falls back to the best surviving member") {
  const Registry reg = Registry::builtin();
  std::vector<EvaluationRecord> recs;
  recs.push_back(make_rec("TEVD", 0.995, true, 0.5));
  recs.push_back(make_rec("SDV", 0.993, true, 0.6));
  const ScreeningReport rep =
      screen(recs, reg, {}, ScreeningConfig::defaults());
  CHECK(rep.step_survivors[2] == std::vector<std::string>{"TEVD"});
  bool sdv_dropped = false;
  for (const auto& d : rep.drops)
    if (d.id == "SDV" && d.step == 3) {
      sdv_dropped = true;
      CHECK(d.reason == "redundant with TEVD");
    }
  CHECK(sdv_dropped);
  // TEVD has no SOC-referenced form, so nothing reaches the final list.
  CHECK(rep.final_ids.empty());
}

TEST_CASE("screening probability and model-error gates") {
  const Registry reg = Registry::builtin();
  std::vector<EvaluationRecord> recs{make_rec("VDET", 0.978, true, 0.8)};

  const ScreeningReport starved =
      screen(recs, reg, {{"VDE_SOC", 0.01}}, ScreeningConfig::defaults());
  CHECK(starved.final_ids.empty());
  REQUIRE(starved.drops.size() == 1);
  CHECK(starved.drops[0].reason.find("below floor") != std::string::npos);

  const ScreeningReport unmapped = screen(recs, reg, {}, ScreeningConfig::defaults());
  REQUIRE(unmapped.drops.size() == 1);
  CHECK(unmapped.drops[0].reason.find("no acquisition probability") != std::string::npos);

  std::vector<EvaluationRecord> bad{make_rec("VDET", 0.978, true, 3.5)};
  const ScreeningReport sloppy =
      screen(bad, reg, {{"VDE_SOC", 0.1067}}, ScreeningConfig::defaults());
  REQUIRE(sloppy.drops.size() == 1);
  CHECK(sloppy.drops[0].reason.find("above ceiling") != std::string::npos);

  ScreeningConfig cfg = ScreeningConfig::defaults();
  cfg.redundancy_groups.push_back({{"VDET", "TEVD"}, "CCCT"});  // keeper outside
  CHECK_THROWS_AS((void)screen(recs, reg, {}, cfg), Error);
}
