// SPDX-License-Identifier: Apache-2.0
#include "bhm/battery_data.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <json.hpp>

#include "bhm/error.hpp"
#include "bhm/kernels.hpp"
#include "textio.hpp"

namespace bhm {

using nlohmann::ordered_json;

namespace {

void validate_series(const SampleSeries& s, const std::string& ctx) {
  const std::size_t n = s.time_s.size();
  if (n == 0) raise(errc::data, ctx + ": empty series");
  if (s.current_a.size() != n || s.voltage_v.size() != n || s.temperature_c.size() != n)
    raise(errc::data, ctx + ": channel lengths differ");
  for (std::size_t i = 0; i + 1 < n; ++i)
    if (!(s.time_s[i] < s.time_s[i + 1]))
      raise(errc::data, ctx + ": time not strictly increasing at sample " + std::to_string(i + 1));
  for (std::size_t i = 0; i < n; ++i)
    if (!(s.voltage_v[i] > 0.0))
      raise(errc::data, ctx + ": non-positive voltage at sample " + std::to_string(i));
}

// Most populated 1%-of-max bin of the positive currents; robust against a
// long CV tail outweighing the CC plateau.
double infer_cc_current(const std::vector<const Cycle*>& cycles) {
  double max_pos = 0.0;
  for (const auto* c : cycles)
    for (double i : c->series.current_a) max_pos = std::max(max_pos, i);
  if (max_pos <= 0.0) return 0.0;
  constexpr int nbins = 100;
  std::array<std::uint64_t, nbins> count{};
  std::array<double, nbins> sum{};
  for (const auto* c : cycles)
    for (double i : c->series.current_a) {
      if (i <= 0.0) continue;
      int b = std::min(nbins - 1, static_cast<int>(i / max_pos * nbins));
      ++count[static_cast<std::size_t>(b)];
      sum[static_cast<std::size_t>(b)] += i;
    }
  std::size_t best = 0;
  for (std::size_t b = 1; b < nbins; ++b)
    if (count[b] > count[best]) best = b;
  return count[best] ? sum[best] / static_cast<double>(count[best]) : 0.0;
}

} // namespace

std::vector<PhaseSegment> segment_phases(const SampleSeries& series,
                                         double cc_charge_current_a,
                                         double upper_cutoff_v,
                                         double current_tolerance_a,
                                         double voltage_tolerance_v) {
  if (series.empty()) raise(errc::argument, "segment_phases: empty series");
  if (!(cc_charge_current_a > 0.0))
    raise(errc::argument, "segment_phases: cc charge current must be > 0");
  if (!(current_tolerance_a > 0.0) || !(voltage_tolerance_v > 0.0))
    raise(errc::argument, "segment_phases: tolerances must be > 0");

  auto classify = [&](std::size_t i) {
    const double cur = series.current_a[i];
    const double v = series.voltage_v[i];
    if (std::abs(cur - cc_charge_current_a) <= current_tolerance_a) return PhaseKind::cc_charge;
    if (cur > current_tolerance_a && std::abs(v - upper_cutoff_v) <= voltage_tolerance_v)
      return PhaseKind::cv_charge;
    if (cur < -current_tolerance_a) return PhaseKind::cc_discharge;
    if (std::abs(cur) <= current_tolerance_a) return PhaseKind::rest;
    return PhaseKind::other;
  };

  std::vector<PhaseSegment> out;
  const std::size_t n = series.size();
  std::size_t start = 0;
  PhaseKind kind = classify(0);
  for (std::size_t i = 1; i < n; ++i) {
    const PhaseKind k = classify(i);
    if (k != kind) {
      out.push_back({kind, start, i - 1});
      start = i;
      kind = k;
    }
  }
  out.push_back({kind, start, n - 1});
  return out;
}

double discharge_capacity_ah(const Cycle& cycle) {
  double ah = 0.0;
  for (const auto& seg : cycle.phases) {
    if (seg.kind != PhaseKind::cc_discharge || seg.count() < 2) continue;
    for (std::size_t i = seg.first; i < seg.last; ++i) {
      const double dt = cycle.series.time_s[i + 1] - cycle.series.time_s[i];
      ah += 0.5 * (std::abs(cycle.series.current_a[i]) + std::abs(cycle.series.current_a[i + 1])) * dt;
    }
  }
  return ah / 3600.0;
}

std::vector<double> compute_soc_series(const SampleSeries& series,
                                       std::size_t first, std::size_t last,
                                       std::size_t anchor, double anchor_soc_pct,
                                       double capacity_ah,
                                       bool* out_of_range) {
  if (!(capacity_ah > 0.0)) raise(errc::argument, "compute_soc_series: capacity must be > 0");
  if (last >= series.size() || first > last || anchor < first || anchor > last)
    raise(errc::argument, "compute_soc_series: index range invalid");
  const std::size_t n = last - first + 1;
  std::vector<double> soc(n);
  const double scale = 100.0 / (3600.0 * capacity_ah);
  soc[anchor - first] = anchor_soc_pct;
  // Forward from the anchor, then backward, trapezoid per step.
  for (std::size_t i = anchor; i < last; ++i) {
    const double dt = series.time_s[i + 1] - series.time_s[i];
    const double dq = 0.5 * (series.current_a[i] + series.current_a[i + 1]) * dt;
    soc[i + 1 - first] = soc[i - first] + dq * scale;
  }
  for (std::size_t i = anchor; i > first; --i) {
    const double dt = series.time_s[i] - series.time_s[i - 1];
    const double dq = 0.5 * (series.current_a[i] + series.current_a[i - 1]) * dt;
    soc[i - 1 - first] = soc[i - first] - dq * scale;
  }
  if (out_of_range) {
    *out_of_range = false;
    for (double v : soc)
      if (v < 0.0 || v > 100.0) {
        *out_of_range = true;
        break;
      }
  }
  return soc;
}

void validate_history(const CellHistory& history) {
  if (!(history.nominal_capacity_ah > 0.0))
    raise(errc::argument, history.cell_id + ": nominal capacity must be > 0");
  if (!(history.upper_cutoff_v > history.lower_cutoff_v))
    raise(errc::data, history.cell_id + ": upper cutoff must exceed lower cutoff");
  int prev_index = 0;
  bool first = true;
  for (const auto& cycle : history.cycles) {
    const std::string ctx = history.cell_id + " cycle " + std::to_string(cycle.index);
    if (!first && cycle.index <= prev_index)
      raise(errc::data, ctx + ": cycle indices not increasing");
    prev_index = cycle.index;
    first = false;
    validate_series(cycle.series, ctx);
    if (cycle.discharge_capacity_ah < 0.0) raise(errc::data, ctx + ": negative capacity");
    // Phases must tile the series.
    std::size_t expect = 0;
    for (const auto& seg : cycle.phases) {
      if (seg.first != expect || seg.last < seg.first || seg.last >= cycle.series.size())
        raise(errc::data, ctx + ": phase segments do not tile the series");
      expect = seg.last + 1;
    }
    if (expect != cycle.series.size())
      raise(errc::data, ctx + ": phase segments do not cover the series");
  }
}

CellHistory ingest_cycles_csv(const std::filesystem::path& cycles_csv,
                              const std::optional<std::filesystem::path>& capacity_csv,
                              const IngestOptions& options,
                              std::vector<std::string>* warnings) {
  auto table = textio::read_csv(cycles_csv);
  const int ci = table.column("cycle_index");
  const int ct = table.column("time_s");
  const int cc = table.column("current_a");
  const int cv = table.column("voltage_v");
  const int ctemp = table.column("temperature_c");
  const int cphase = table.column("phase");
  for (auto [idx, name] : {std::pair{ci, "cycle_index"}, {ct, "time_s"}, {cc, "current_a"},
                           {cv, "voltage_v"}, {ctemp, "temperature_c"}})
    if (idx < 0)
      raise(errc::format, cycles_csv.string() + ": missing column " + name);

  struct RawCycle {
    SampleSeries series;
    std::vector<PhaseKind> labels;
  };
  std::map<long long, RawCycle> grouped;
  std::size_t line = 1;
  for (const auto& row : table.rows) {
    ++line;
    auto idx = textio::parse_int(row[static_cast<std::size_t>(ci)]);
    auto t = textio::parse_double(row[static_cast<std::size_t>(ct)]);
    auto i = textio::parse_double(row[static_cast<std::size_t>(cc)]);
    auto v = textio::parse_double(row[static_cast<std::size_t>(cv)]);
    auto temp = textio::parse_double(row[static_cast<std::size_t>(ctemp)]);
    if (!idx || !t || !i || !v || !temp)
      raise(errc::format, cycles_csv.string() + ": unparseable number near data row " +
                              std::to_string(line));
    auto& rc = grouped[*idx];
    rc.series.time_s.push_back(*t);
    rc.series.current_a.push_back(options.flip_current_sign ? -*i : *i);
    rc.series.voltage_v.push_back(*v);
    rc.series.temperature_c.push_back(*temp);
    if (cphase >= 0) {
      auto kind = phase_kind_from_name(row[static_cast<std::size_t>(cphase)]);
      if (!kind)
        raise(errc::format, cycles_csv.string() + ": unknown phase label '" +
                                row[static_cast<std::size_t>(cphase)] + "'");
      rc.labels.push_back(*kind);
    }
  }
  if (grouped.empty()) raise(errc::format, cycles_csv.string() + ": no data rows");

  CellHistory history;
  history.cell_id = options.cell_id;
  std::vector<const Cycle*> view;

  for (auto& [index, raw] : grouped) {
    Cycle cycle;
    cycle.index = static_cast<int>(index);
    cycle.series = std::move(raw.series);
    validate_series(cycle.series, history.cell_id + " cycle " + std::to_string(index));
    if (cphase >= 0) {
      // Labels authoritative: runs of equal labels become segments.
      const auto& labels = raw.labels;
      std::size_t start = 0;
      for (std::size_t i = 1; i <= labels.size(); ++i) {
        if (i == labels.size() || labels[i] != labels[start]) {
          cycle.phases.push_back({labels[start], start, i - 1});
          start = i;
        }
      }
    }
    history.cycles.push_back(std::move(cycle));
  }
  for (const auto& c : history.cycles) view.push_back(&c);

  // Protocol parameters: explicit options win, else inferred from the data.
  double vmax = 0.0, vmin = 1e300;
  for (const auto* c : view)
    for (double v : c->series.voltage_v) {
      vmax = std::max(vmax, v);
      vmin = std::min(vmin, v);
    }
  history.upper_cutoff_v = options.upper_cutoff_v.value_or(vmax);
  history.lower_cutoff_v = options.lower_cutoff_v.value_or(vmin);
  double cc_inferred = options.cc_charge_current_a ? *options.cc_charge_current_a
                                                   : infer_cc_current(view);
  if (!(cc_inferred > 0.0)) {
    cc_inferred = 1.0;  // no charging samples at all; keep segmentation defined
    if (warnings)
      warnings->push_back(history.cell_id + ": no positive current found, cc inference fell back to 1 A");
  }
  history.cc_charge_current_a = cc_inferred;
  const double tol_i = options.current_tolerance_a.value_or(0.02 * history.cc_charge_current_a);

  for (auto& cycle : history.cycles) {
    if (cycle.phases.empty())
      cycle.phases = segment_phases(cycle.series, history.cc_charge_current_a,
                                    history.upper_cutoff_v, tol_i,
                                    options.voltage_tolerance_v);
    cycle.discharge_capacity_ah = discharge_capacity_ah(cycle);
  }

  if (capacity_csv) {
    auto side = textio::read_csv(*capacity_csv);
    const int sci = side.column("cycle_index");
    const int sca = side.column("capacity_ah");
    if (sci < 0 || sca < 0)
      raise(errc::format, capacity_csv->string() + ": needs columns cycle_index,capacity_ah");
    std::map<long long, double> cap;
    for (const auto& row : side.rows) {
      auto idx = textio::parse_int(row[static_cast<std::size_t>(sci)]);
      auto ah = textio::parse_double(row[static_cast<std::size_t>(sca)]);
      if (!idx || !ah)
        raise(errc::format, capacity_csv->string() + ": unparseable row");
      cap[*idx] = *ah;
    }
    for (auto& cycle : history.cycles) {
      auto it = cap.find(cycle.index);
      if (it == cap.end()) continue;
      const double counted = cycle.discharge_capacity_ah;
      if (counted > 0.0 && std::abs(counted - it->second) > 0.01 * it->second && warnings)
        warnings->push_back(history.cell_id + " cycle " + std::to_string(cycle.index) +
                            ": sidecar capacity " + textio::format_double(it->second) +
                            " Ah disagrees with coulomb count " + textio::format_double(counted) +
                            " Ah by more than 1%");
      cycle.discharge_capacity_ah = it->second;
    }
  }

  if (options.nominal_capacity_ah && !(*options.nominal_capacity_ah > 0.0))
    raise(errc::argument, history.cell_id + ": nominal capacity must be > 0");
  double nominal = options.nominal_capacity_ah.value_or(0.0);
  if (!(nominal > 0.0)) {
    // Largest observed capacity is the best stand-in for the rating.
    for (const auto& cycle : history.cycles)
      nominal = std::max(nominal, cycle.discharge_capacity_ah);
    if (!(nominal > 0.0))
      raise(errc::argument, history.cell_id + ": nominal capacity neither given nor inferable");
    if (warnings)
      warnings->push_back(history.cell_id + ": nominal capacity inferred as " +
                          textio::format_double(nominal) + " Ah");
  }
  history.nominal_capacity_ah = nominal;
  for (auto& cycle : history.cycles)
    cycle.soh_pct = 100.0 * cycle.discharge_capacity_ah / nominal;

  validate_history(history);
  return history;
}

namespace {

ordered_json series_to_json(const SampleSeries& s) {
  return ordered_json{{"time_s", s.time_s},
                      {"current_a", s.current_a},
                      {"voltage_v", s.voltage_v},
                      {"temperature_c", s.temperature_c}};
}

SampleSeries series_from_json(const ordered_json& j) {
  SampleSeries s;
  s.time_s = j.at("time_s").get<std::vector<double>>();
  s.current_a = j.at("current_a").get<std::vector<double>>();
  s.voltage_v = j.at("voltage_v").get<std::vector<double>>();
  s.temperature_c = j.at("temperature_c").get<std::vector<double>>();
  return s;
}

} // namespace

std::string to_json(const CellHistory& history) {
  ordered_json cycles = ordered_json::array();
  for (const auto& c : history.cycles) {
    ordered_json phases = ordered_json::array();
    for (const auto& p : c.phases)
      phases.push_back(ordered_json{{"kind", phase_kind_name(p.kind)},
                                    {"first", p.first},
                                    {"last", p.last}});
    cycles.push_back(ordered_json{{"index", c.index},
                                  {"discharge_capacity_ah", c.discharge_capacity_ah},
                                  {"soh_pct", c.soh_pct},
                                  {"phases", std::move(phases)},
                                  {"series", series_to_json(c.series)}});
  }
  ordered_json j{{"schema_version", 1},
                 {"cell_id", history.cell_id},
                 {"nominal_capacity_ah", history.nominal_capacity_ah},
                 {"upper_cutoff_v", history.upper_cutoff_v},
                 {"lower_cutoff_v", history.lower_cutoff_v},
                 {"cc_charge_current_a", history.cc_charge_current_a},
                 {"cycles", std::move(cycles)}};
  return textio::dump_json(j);
}

CellHistory history_from_json(const std::string& json_text) {
  ordered_json j;
  try {
    j = ordered_json::parse(json_text);
  } catch (const std::exception& e) {
    raise(errc::format, std::string("cell history JSON: ") + e.what());
  }
  try {
    if (j.at("schema_version").get<int>() != 1)
      raise(errc::format, "cell history JSON: unsupported schema_version");
    CellHistory h;
    h.cell_id = j.at("cell_id").get<std::string>();
    h.nominal_capacity_ah = j.at("nominal_capacity_ah").get<double>();
    h.upper_cutoff_v = j.at("upper_cutoff_v").get<double>();
    h.lower_cutoff_v = j.at("lower_cutoff_v").get<double>();
    h.cc_charge_current_a = j.at("cc_charge_current_a").get<double>();
    for (const auto& cj : j.at("cycles")) {
      Cycle c;
      c.index = cj.at("index").get<int>();
      c.discharge_capacity_ah = cj.at("discharge_capacity_ah").get<double>();
      c.soh_pct = cj.at("soh_pct").get<double>();
      c.series = series_from_json(cj.at("series"));
      for (const auto& pj : cj.at("phases")) {
        PhaseSegment seg;
        auto kind = phase_kind_from_name(pj.at("kind").get<std::string>());
        if (!kind) raise(errc::format, "cell history JSON: unknown phase kind");
        seg.kind = *kind;
        seg.first = pj.at("first").get<std::size_t>();
        seg.last = pj.at("last").get<std::size_t>();
        c.phases.push_back(seg);
      }
      h.cycles.push_back(std::move(c));
    }
    validate_history(h);
    return h;
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    raise(errc::format, std::string("cell history JSON: ") + e.what());
  }
}

void save_history(const CellHistory& history, const std::filesystem::path& path) {
  textio::write_text_file(path, to_json(history));
}

CellHistory load_history(const std::filesystem::path& path) {
  return history_from_json(textio::read_text_file(path));
}

void write_cycles_csv(const CellHistory& history,
                      const std::filesystem::path& cycles_csv,
                      const std::optional<std::filesystem::path>& capacity_csv) {
  std::string out = "cycle_index,time_s,current_a,voltage_v,temperature_c,phase\n";
  for (const auto& c : history.cycles) {
    // Per-sample phase labels reconstructed from the segments.
    std::vector<PhaseKind> labels(c.series.size(), PhaseKind::other);
    for (const auto& seg : c.phases)
      for (std::size_t i = seg.first; i <= seg.last; ++i) labels[i] = seg.kind;
    for (std::size_t i = 0; i < c.series.size(); ++i) {
      out += std::to_string(c.index);
      out += ',';
      out += textio::format_double(c.series.time_s[i]);
      out += ',';
      out += textio::format_double(c.series.current_a[i]);
      out += ',';
      out += textio::format_double(c.series.voltage_v[i]);
      out += ',';
      out += textio::format_double(c.series.temperature_c[i]);
      out += ',';
      out += phase_kind_name(labels[i]);
      out += '\n';
    }
  }
  textio::write_text_file(cycles_csv, out);
  if (capacity_csv) {
    std::string side = "cycle_index,capacity_ah\n";
    for (const auto& c : history.cycles) {
      side += std::to_string(c.index);
      side += ',';
      side += textio::format_double(c.discharge_capacity_ah);
      side += '\n';
    }
    textio::write_text_file(*capacity_csv, side);
  }
}

} // namespace bhm
