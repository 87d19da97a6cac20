// SPDX-License-Identifier: Apache-2.0
#include "bhm/registry.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <span>

#include <json.hpp>

#include "bhm/battery_data.hpp"
#include "bhm/error.hpp"
#include "bhm/kernels.hpp"
#include "textio.hpp"

namespace bhm {

using nlohmann::ordered_json;

const char* hi_category_name(HiCategory c) noexcept {
  switch (c) {
    case HiCategory::time: return "time";
    case HiCategory::temperature: return "temperature";
    case HiCategory::integral: return "integral";
    case HiCategory::differential: return "differential";
    case HiCategory::statistics: return "statistics";
    case HiCategory::soc_based: return "soc_based";
    case HiCategory::fusion: return "fusion";
  }
  return "time";
}

const char* scenario_name(Scenario s) noexcept {
  switch (s) {
    case Scenario::cc_charge: return "cc_charge";
    case Scenario::cv_charge: return "cv_charge";
    case Scenario::cccv_charge: return "cccv_charge";
    case Scenario::cc_discharge: return "cc_discharge";
    case Scenario::full_cycle: return "full_cycle";
    case Scenario::charge_and_discharge: return "charge_and_discharge";
  }
  return "full_cycle";
}

const char* signal_kind_name(SignalKind s) noexcept {
  switch (s) {
    case SignalKind::current: return "current";
    case SignalKind::voltage: return "voltage";
    case SignalKind::temperature: return "temperature";
    case SignalKind::charge: return "charge";
    case SignalKind::derived_curve: return "derived_curve";
  }
  return "voltage";
}

std::size_t FeatureSeries::missing_count() const noexcept {
  std::size_t n = 0;
  for (const auto& v : per_cycle)
    if (!v) ++n;
  return n;
}

// ---------------------------------------------------------------------------
// Built-in catalog
// ---------------------------------------------------------------------------

namespace {

constexpr double kIcBinWidthV = 0.010;   // IC / DT curves bin on voltage
constexpr double kDvBinWidthPct = 1.0;   // DV curve bins on SOC percent
constexpr std::size_t kCurveSmooth = 5;

std::vector<std::string> tags_for(HiCategory c) {
  switch (c) {
    case HiCategory::time: return {"LLI", "IMTRE", "IMTRAM"};
    case HiCategory::temperature: return {"IOR", "ICTR", "IMTRE", "IMTRAM"};
    case HiCategory::integral: return {"LLI", "LAM_PE", "LAM_NE", "IOR"};
    case HiCategory::differential: return {"LLI", "LAM_PE", "LAM_NE"};
    case HiCategory::statistics: return {"LLI", "LAM_PE", "LAM_NE"};
    default: return {};
  }
}

HIDescriptor full_hi(std::string id, HiCategory cat, Scenario sc, SignalKind sig) {
  HIDescriptor d;
  d.id = std::move(id);
  d.category = cat;
  d.scenario = sc;
  d.signal = sig;
  d.partial = false;
  d.degradation_tags = tags_for(cat);
  return d;
}

HIDescriptor partial_hi(std::string id, HiCategory cat, Scenario sc, SignalKind sig,
                        IntervalRef ref, double lo, double hi) {
  HIDescriptor d = full_hi(std::move(id), cat, sc, sig);
  d.partial = true;
  d.reference = ref;
  d.default_interval = IntervalSpec{ref, lo, hi};
  return d;
}

} // namespace

Registry Registry::builtin() {
  Registry r;

  // Time family. Default windows are the narrow-band selections published
  // for a 2 Ah NCA cell cycled CC(0.75C)-CV/1C; override per dataset.
  r.add(full_hi("CCDT", HiCategory::time, Scenario::cc_discharge, SignalKind::current));
  r.add(partial_hi("TEVD", HiCategory::time, Scenario::cc_discharge, SignalKind::voltage,
                   IntervalRef::voltage_v, 3.4, 3.8));
  r.add(partial_hi("SDV", HiCategory::time, Scenario::cc_discharge, SignalKind::voltage,
                   IntervalRef::voltage_v, 3.4, 3.8));
  r.add(full_hi("CCCT", HiCategory::time, Scenario::cc_charge, SignalKind::current));
  r.add(partial_hi("SCV", HiCategory::time, Scenario::cc_charge, SignalKind::voltage,
                   IntervalRef::voltage_v, 3.9, 4.0));
  r.add(partial_hi("VDET", HiCategory::time, Scenario::cc_discharge, SignalKind::voltage,
                   IntervalRef::time_s, 0.0, 1000.0));
  r.add(partial_hi("TEVR", HiCategory::time, Scenario::cc_charge, SignalKind::voltage,
                   IntervalRef::voltage_v, 3.9, 4.0));
  r.add(partial_hi("VRET", HiCategory::time, Scenario::cc_charge, SignalKind::voltage,
                   IntervalRef::time_s, 925.0, 975.0));
  r.add(partial_hi("CDET", HiCategory::time, Scenario::cv_charge, SignalKind::current,
                   IntervalRef::time_s, 3700.0, 4800.0));
  r.add(partial_hi("TETR", HiCategory::time, Scenario::cc_discharge, SignalKind::temperature,
                   IntervalRef::temperature_c, 29.0, 36.0));
  r.add(partial_hi("SDT", HiCategory::time, Scenario::cc_discharge, SignalKind::temperature,
                   IntervalRef::temperature_c, 29.0, 36.0));
  r.add(partial_hi("SCC", HiCategory::time, Scenario::cv_charge, SignalKind::current,
                   IntervalRef::current_a, 0.5, 1.2));
  r.add(partial_hi("TECD", HiCategory::time, Scenario::cv_charge, SignalKind::current,
                   IntervalRef::current_a, 0.5, 1.2));
  r.add(partial_hi("TRET", HiCategory::time, Scenario::cc_discharge, SignalKind::temperature,
                   IntervalRef::time_s, 1000.0, 1400.0));
  r.add(full_hi("RCCCV", HiCategory::time, Scenario::cccv_charge, SignalKind::current));
  r.add(full_hi("CVCT", HiCategory::time, Scenario::cv_charge, SignalKind::current));

  // Temperature family: {highest, mean, lowest} x scope.
  const std::pair<const char*, Scenario> temp_scopes[] = {
      {"T", Scenario::full_cycle},
      {"CT", Scenario::cccv_charge},
      {"DT", Scenario::cc_discharge},
      {"CCCT", Scenario::cc_charge},
      {"CVCT", Scenario::cv_charge},
  };
  // Table order: HDT, HT, MDT, MT, HCCCT, MCT, LCCCT, HCVCT, HCT, MCVCT,
  // MCCCT, LCVCT, LDT, LCT, LT — materialized explicitly to keep the
  // catalog order stable and obvious.
  const char* temp_order[] = {"HDT", "HT",    "MDT",   "MT",    "HCCCT",
                              "MCT", "LCCCT", "HCVCT", "HCT",   "MCVCT",
                              "MCCCT", "LCVCT", "LDT", "LCT",   "LT"};
  for (const char* id : temp_order) {
    std::string s(id);
    const std::string scope = s.substr(1);
    Scenario sc = Scenario::full_cycle;
    for (const auto& [suffix, scenario] : temp_scopes)
      if (scope == suffix) sc = scenario;
    r.add(full_hi(s, HiCategory::temperature, sc, SignalKind::temperature));
  }

  // Integral family: {area, energy} x scope x signal, Table order.
  const char* integral_order[] = {
      "ADC",  "ECCDC", "EDC",   "ACCDC", "ECC",   "ACC",   "ECCCV", "ACCCV",
      "ACCCC", "ECCCC", "ECCDV", "ACCDV", "ACCCT", "EDV",   "ADV",   "ECCCT",
      "ACVCT", "ECVCT", "ACCDT", "ADT",   "ECVCV", "ACVCV", "ACVCC", "ECV",
      "ACV",  "ECVCC", "ACT",   "ECCDT", "ECT",   "EDT"};
  for (const char* id : integral_order) {
    std::string s(id);
    // id = (A|E) + scope + (C|V|T); scope in {"", CC, CV, CCD, D}.
    const std::string body = s.substr(1, s.size() - 2);
    Scenario sc;
    if (body == "C")
      sc = Scenario::cccv_charge;
    else if (body == "CCC")
      sc = Scenario::cc_charge;
    else if (body == "CVC")
      sc = Scenario::cv_charge;
    else if (body == "CCD" || body == "D")
      sc = Scenario::cc_discharge;
    else
      raise(errc::internal, "bad integral id " + s);
    const char last = s.back();
    SignalKind sig = last == 'C'   ? SignalKind::current
                     : last == 'V' ? SignalKind::voltage
                                   : SignalKind::temperature;
    r.add(full_hi(s, HiCategory::integral, sc, sig));
  }

  // Differential family. Peak windows default to the plausible span of the
  // reference axis; the location/slope/area semantics live in extraction.
  r.add(full_hi("ICA", HiCategory::differential, Scenario::cc_charge, SignalKind::derived_curve));
  r.add(partial_hi("ICP", HiCategory::differential, Scenario::cc_charge,
                   SignalKind::derived_curve, IntervalRef::voltage_v, 3.0, 4.2));
  r.add(partial_hi("DVV", HiCategory::differential, Scenario::cc_discharge,
                   SignalKind::derived_curve, IntervalRef::soc_pct, 5.0, 95.0));
  r.add(partial_hi("ICPL", HiCategory::differential, Scenario::cc_charge,
                   SignalKind::derived_curve, IntervalRef::voltage_v, 3.0, 4.2));
  r.add(partial_hi("ICS", HiCategory::differential, Scenario::cc_charge,
                   SignalKind::derived_curve, IntervalRef::voltage_v, 3.0, 4.2));
  r.add(full_hi("DVA", HiCategory::differential, Scenario::cc_discharge, SignalKind::derived_curve));
  r.add(full_hi("DTA", HiCategory::differential, Scenario::cc_discharge, SignalKind::derived_curve));
  r.add(partial_hi("DVS", HiCategory::differential, Scenario::cc_discharge,
                   SignalKind::derived_curve, IntervalRef::soc_pct, 5.0, 95.0));
  r.add(partial_hi("DVVL", HiCategory::differential, Scenario::cc_discharge,
                    SignalKind::derived_curve, IntervalRef::soc_pct, 5.0, 95.0));
  r.add(partial_hi("DTS", HiCategory::differential, Scenario::cc_discharge,
                   SignalKind::derived_curve, IntervalRef::voltage_v, 3.0, 4.2));
  r.add(partial_hi("DTP", HiCategory::differential, Scenario::cc_discharge,
                   SignalKind::derived_curve, IntervalRef::voltage_v, 3.0, 4.2));
  r.add(partial_hi("DTPL", HiCategory::differential, Scenario::cc_discharge,
                    SignalKind::derived_curve, IntervalRef::voltage_v, 3.0, 4.2));

  // Statistics family, over the CC-discharge voltage sequence.
  r.add(full_hi("SE", HiCategory::statistics, Scenario::cc_discharge, SignalKind::voltage));
  r.add(full_hi("KT", HiCategory::statistics, Scenario::cc_discharge, SignalKind::voltage));
  r.add(full_hi("SK", HiCategory::statistics, Scenario::cc_discharge, SignalKind::voltage));
  r.add(full_hi("SD", HiCategory::statistics, Scenario::cc_discharge, SignalKind::voltage));

  // SOC-referenced family with published windows and acquisition rules.
  // Each re-references an existing HI, so it inherits that parent's
  // degradation tags rather than getting a family of its own.
  auto soc_hi = [](std::string id, Scenario sc, SignalKind sig, double lo, double hi,
                   AcquisitionRule::Kind rule, double width, HiCategory parent) {
    HIDescriptor d = partial_hi(std::move(id), HiCategory::soc_based, sc, sig,
                                IntervalRef::soc_pct, lo, hi);
    d.acquisition.kind = rule;
    d.acquisition.width_pct = width;
    d.degradation_tags = tags_for(parent);
    return d;
  };
  r.add(soc_hi("VRE_SOC", Scenario::cc_charge, SignalKind::voltage, 20.0, 50.0,
               AcquisitionRule::Kind::any_subwindow, 5.0, HiCategory::time));
  r.add(soc_hi("ICP_SOC", Scenario::cc_charge, SignalKind::derived_curve, 20.0, 31.0,
               AcquisitionRule::Kind::full_interval, 0.0, HiCategory::differential));
  r.add(soc_hi("CDE_SOC", Scenario::cccv_charge, SignalKind::current, 74.0, 100.0,
               AcquisitionRule::Kind::any_subwindow, 5.0, HiCategory::time));
  r.add(soc_hi("TRE_SOC", Scenario::cc_discharge, SignalKind::temperature, 25.0, 60.0,
               AcquisitionRule::Kind::any_subwindow, 5.0, HiCategory::time));
  r.add(soc_hi("VDE_SOC", Scenario::cc_discharge, SignalKind::voltage, 10.0, 40.0,
               AcquisitionRule::Kind::any_subwindow, 5.0, HiCategory::time));

  return r;
}

void Registry::add(HIDescriptor d) {
  if (by_id_.count(d.id)) raise(errc::argument, "duplicate HI id " + d.id);
  by_id_[d.id] = ordered_.size();
  ordered_.push_back(std::move(d));
}

const HIDescriptor* Registry::find(const std::string& id) const noexcept {
  auto it = by_id_.find(id);
  return it == by_id_.end() ? nullptr : &ordered_[it->second];
}

const HIDescriptor& Registry::get(const std::string& id) const {
  const HIDescriptor* d = find(id);
  if (!d) raise(errc::argument, "unknown HI id " + id);
  return *d;
}

std::map<HiCategory, std::size_t> Registry::category_counts() const {
  std::map<HiCategory, std::size_t> out;
  for (const auto& d : ordered_) ++out[d.category];
  return out;
}

const HIDescriptor& Registry::to_soc_based(const HIDescriptor& descriptor) const {
  static const std::map<std::string, std::string> mapping = {
      {"VRET", "VRE_SOC"}, {"VDET", "VDE_SOC"}, {"CDET", "CDE_SOC"},
      {"TRET", "TRE_SOC"}, {"ICP", "ICP_SOC"},
  };
  auto it = mapping.find(descriptor.id);
  if (it == mapping.end())
    raise(errc::conversion, descriptor.id + " has no SOC-referenced form");
  return get(it->second);
}

const HIDescriptor& Registry::fuse(const std::vector<std::string>& ids,
                                   const std::string& fusion_id) {
  if (ids.size() < 2) raise(errc::argument, "fusion needs at least 2 constituents");
  if (fusion_id.empty()) raise(errc::argument, "fusion id must not be empty");
  if (by_id_.count(fusion_id)) raise(errc::argument, "HI id " + fusion_id + " already exists");
  std::set<std::string> seen;
  bool charge = false, discharge = false, cv = false;
  for (const auto& id : ids) {
    const HIDescriptor& d = get(id);
    if (d.category != HiCategory::soc_based)
      raise(errc::argument, "fusion constituent " + id + " is not SOC-based");
    if (!seen.insert(id).second) raise(errc::argument, "duplicate fusion constituent " + id);
    switch (d.scenario) {
      case Scenario::cc_charge: charge = true; break;
      case Scenario::cv_charge: charge = true; cv = true; break;
      case Scenario::cccv_charge: charge = true; cv = true; break;
      case Scenario::cc_discharge: discharge = true; break;
      default: raise(errc::argument, "fusion constituent " + id + " has unsupported scenario");
    }
  }
  HIDescriptor d;
  d.id = fusion_id;
  d.category = HiCategory::fusion;
  d.signal = SignalKind::derived_curve;
  d.reference = IntervalRef::soc_pct;
  d.partial = true;
  d.constituents = ids;
  if (charge && discharge)
    d.scenario = Scenario::charge_and_discharge;
  else if (charge)
    d.scenario = cv ? Scenario::cccv_charge : Scenario::cc_charge;
  else
    d.scenario = Scenario::cc_discharge;
  add(std::move(d));
  return ordered_.back();
}

// ---------------------------------------------------------------------------
// Extraction
// ---------------------------------------------------------------------------

namespace {

struct Run {
  std::size_t first = 0;
  std::size_t last = 0;
  std::size_t count() const noexcept { return last - first + 1; }
};

bool in_scope(PhaseKind k, Scenario s) {
  switch (s) {
    case Scenario::cc_charge: return k == PhaseKind::cc_charge;
    case Scenario::cv_charge: return k == PhaseKind::cv_charge;
    case Scenario::cccv_charge: return k == PhaseKind::cc_charge || k == PhaseKind::cv_charge;
    case Scenario::cc_discharge: return k == PhaseKind::cc_discharge;
    case Scenario::full_cycle: return k != PhaseKind::rest;
    case Scenario::charge_and_discharge:
      return k == PhaseKind::cc_charge || k == PhaseKind::cv_charge ||
             k == PhaseKind::cc_discharge;
  }
  return false;
}

// Scoped phase segments merged wherever they are contiguous in samples.
std::vector<Run> scoped_runs(const Cycle& cycle, Scenario scenario) {
  std::vector<Run> out;
  for (const auto& seg : cycle.phases) {
    if (!in_scope(seg.kind, scenario)) continue;
    if (!out.empty() && out.back().last + 1 == seg.first)
      out.back().last = seg.last;
    else
      out.push_back({seg.first, seg.last});
  }
  return out;
}

const Run* principal_run(const std::vector<Run>& runs) {
  const Run* best = nullptr;
  for (const auto& r : runs)
    if (!best || r.count() > best->count()) best = &r;
  return best;
}

std::span<const double> slice(std::span<const double> v, const Run& r) {
  return v.subspan(r.first, r.count());
}

std::span<const double> channel(const SampleSeries& s, SignalKind k) {
  switch (k) {
    case SignalKind::current: return s.current_a;
    case SignalKind::voltage: return s.voltage_v;
    case SignalKind::temperature: return s.temperature_c;
    default: raise(errc::internal, "channel: no raw channel for this signal kind");
  }
}

std::span<const double> channel_ref(const SampleSeries& s, IntervalRef r) {
  switch (r) {
    case IntervalRef::time_s: return s.time_s;
    case IntervalRef::voltage_v: return s.voltage_v;
    case IntervalRef::current_a: return s.current_a;
    case IntervalRef::temperature_c: return s.temperature_c;
    default: raise(errc::internal, "channel_ref: SOC has no raw channel");
  }
}

double interp_at(std::span<const double> x, std::span<const double> y, double xq) {
  // x strictly increasing.
  if (xq <= x.front()) return y.front();
  if (xq >= x.back()) return y.back();
  std::size_t lo = 0, hi = x.size() - 1;
  while (hi - lo > 1) {
    const std::size_t mid = (lo + hi) / 2;
    (x[mid] <= xq ? lo : hi) = mid;
  }
  const double t = (xq - x[lo]) / (x[lo + 1] - x[lo]);
  return y[lo] + t * (y[lo + 1] - y[lo]);
}

bool covers(double have_lo, double have_hi, const IntervalSpec& w) {
  const double eps = 1e-9 * (w.upper - w.lower) + 1e-12;
  return have_lo <= w.lower + eps && have_hi >= w.upper - eps;
}

// Window rule on a clipped axis: full traversal or minimum overlap width.
bool rule_satisfied(const kernels::ClippedSegment& clipped, const IntervalSpec& w,
                    const AcquisitionRule& rule) {
  if (clipped.empty()) return false;
  auto [mn, mx] = std::minmax_element(clipped.axis.begin(), clipped.axis.end());
  if (rule.kind == AcquisitionRule::Kind::full_interval) return covers(*mn, *mx, w);
  const double eps = 1e-9 * rule.width_pct + 1e-12;
  return (*mx - *mn) >= rule.width_pct - eps;
}

// Cumulative coulomb count (Ah, signed) over a run, zero at the run start.
std::vector<double> cumulative_charge_ah(const SampleSeries& s, const Run& r) {
  std::vector<double> q(r.count(), 0.0);
  for (std::size_t i = r.first; i < r.last; ++i) {
    const double dt = s.time_s[i + 1] - s.time_s[i];
    q[i + 1 - r.first] = q[i - r.first] +
                         0.5 * (s.current_a[i] + s.current_a[i + 1]) * dt / 3600.0;
  }
  return q;
}

std::size_t curve_bins(double span, double bin_width) {
  auto n = static_cast<std::size_t>(std::llround(span / bin_width));
  return n < 2 ? 2 : n;
}

std::size_t curve_smooth_window(std::size_t nbins) {
  std::size_t w = std::min<std::size_t>(kCurveSmooth, nbins);
  if (w % 2 == 0) --w;
  return w == 0 ? 1 : w;
}

struct CycleContext {
  const CellHistory* history = nullptr;
  const Cycle* cycle = nullptr;
};

// Span-guarded differential curve; returns nullopt (=> missing) when the
// primary span cannot hold two bins.
std::optional<kernels::DifferentialCurve>
build_curve(std::span<const double> primary, std::span<const double> secondary,
            kernels::CurveKind kind, double bin_width) {
  if (primary.size() < 2) return std::nullopt;
  auto [mn, mx] = std::minmax_element(primary.begin(), primary.end());
  const double span = *mx - *mn;
  if (span < 2.0 * bin_width) return std::nullopt;
  const std::size_t nbins = curve_bins(span, bin_width);
  return kernels::differential_curve(primary, secondary, kind, bin_width,
                                     curve_smooth_window(nbins));
}

// IC curve of the principal CC-charge run: dQ/dV (Ah/V) vs volts.
std::optional<kernels::DifferentialCurve> ic_curve(const CycleContext& ctx, const Run& run) {
  const auto& s = ctx.cycle->series;
  auto q = cumulative_charge_ah(s, run);
  return build_curve(slice(s.voltage_v, run), q, kernels::CurveKind::ic, kIcBinWidthV);
}

double magnitude_delta(const kernels::ClippedSegment& clipped, std::size_t companion) {
  return std::abs(clipped.companions[companion].back() - clipped.companions[companion].front());
}

} // namespace

FeatureSeries Registry::extract(const CellHistory& history, const std::string& id,
                                const std::optional<IntervalSpec>& interval) const {
  return extract(history, get(id), interval);
}

FeatureSeries Registry::extract(const CellHistory& history,
                                const HIDescriptor& desc,
                                const std::optional<IntervalSpec>& interval) const {
  FeatureSeries out;
  out.soh_pct.reserve(history.cycles.size());
  for (const auto& c : history.cycles) out.soh_pct.push_back(c.soh_pct);

  if (desc.category == HiCategory::fusion) {
    if (interval)
      raise(errc::argument, desc.id + ": fusion extraction does not take an interval override");
    std::vector<FeatureSeries> parts;
    parts.reserve(desc.constituents.size());
    for (const auto& cid : desc.constituents)
      parts.push_back(extract(history, get(cid), std::nullopt));
    out.width = desc.constituents.size();
    out.per_cycle.resize(history.cycles.size());
    for (std::size_t i = 0; i < history.cycles.size(); ++i) {
      std::vector<double> vec;
      vec.reserve(out.width);
      bool missing = false;
      for (const auto& p : parts) {
        if (!p.per_cycle[i]) {
          missing = true;
          break;
        }
        vec.push_back((*p.per_cycle[i])[0]);
      }
      if (!missing) out.per_cycle[i] = std::move(vec);
    }
    return out;
  }

  // Interval resolution and compatibility.
  if (interval) {
    if (!desc.partial)
      raise(errc::argument, desc.id + ": full-curve HI takes no interval");
    if (!(interval->lower < interval->upper))
      raise(errc::argument, desc.id + ": interval lower must be < upper");
    if (desc.reference && interval->reference != *desc.reference)
      raise(errc::argument, desc.id + ": interval reference mismatch (expected " +
                                std::string(interval_ref_name(*desc.reference)) + ")");
  }
  std::optional<IntervalSpec> eff = interval ? interval : desc.default_interval;
  if (desc.partial && !eff)
    raise(errc::argument, desc.id + ": partial HI needs an interval");

  out.width = 1;
  out.per_cycle.resize(history.cycles.size());
  for (std::size_t i = 0; i < history.cycles.size(); ++i) {
    CycleContext ctx{&history, &history.cycles[i]};
    try {
      auto v = extract_cycle_value(&ctx, desc, eff);
      if (v) out.per_cycle[i] = std::vector<double>{*v};
    } catch (const Error& e) {
      switch (e.code()) {
        case errc::coverage:
        case errc::degenerate:
        case errc::insufficient:
        case errc::undefined_entropy:
          break;  // missing for this cycle
        default:
          throw;
      }
    }
  }
  return out;
}

// Scalar extraction of one non-fusion HI on one cycle; nullopt or a listed
// recoverable error kind => missing.
std::optional<double> Registry::extract_cycle_value(const void* ctx_opaque,
                                                    const HIDescriptor& desc,
                                                    const std::optional<IntervalSpec>& eff) {
  const auto& ctx = *static_cast<const CycleContext*>(ctx_opaque);
  const Cycle& cycle = *ctx.cycle;
  const SampleSeries& s = cycle.series;
  const double nominal = ctx.history->nominal_capacity_ah;

  auto runs = scoped_runs(cycle, desc.scenario);
  const Run* prin = principal_run(runs);

  auto duration_of = [&](PhaseKind k) {
    double sum = 0.0;
    bool any = false;
    for (const auto& seg : cycle.phases)
      if (seg.kind == k) {
        any = true;
        sum += s.time_s[seg.last] - s.time_s[seg.first];
      }
    return any ? std::optional<double>(sum) : std::nullopt;
  };

  // SOC over a run, charge runs anchored 0 at the run start, discharge runs
  // anchored 100 — per-cycle self-contained conversion.
  auto soc_over = [&](const Run& r) {
    const bool discharge = desc.scenario == Scenario::cc_discharge;
    return compute_soc_series(s, r.first, r.last, r.first, discharge ? 100.0 : 0.0,
                              nominal, nullptr);
  };

  switch (desc.category) {
    case HiCategory::time: {
      if (desc.id == "CCCT") return duration_of(PhaseKind::cc_charge);
      if (desc.id == "CVCT") return duration_of(PhaseKind::cv_charge);
      if (desc.id == "CCDT") return duration_of(PhaseKind::cc_discharge);
      if (desc.id == "RCCCV") {
        auto cc = duration_of(PhaseKind::cc_charge);
        auto cv = duration_of(PhaseKind::cv_charge);
        if (!cc || !cv || !(*cv > 0.0)) return std::nullopt;
        return *cc / *cv;
      }
      if (!prin) return std::nullopt;
      if (eff->reference == IntervalRef::time_s) {
        // Fixed window from phase start: increment of the signal channel.
        const double t0 = s.time_s[prin->first] + eff->lower;
        const double t1 = s.time_s[prin->first] + eff->upper;
        if (t1 > s.time_s[prin->last] + 1e-9) return std::nullopt;
        auto time = slice(s.time_s, *prin);
        auto sig = slice(channel(s, desc.signal), *prin);
        return std::abs(interp_at(time, sig, t1) - interp_at(time, sig, t0));
      }
      // Value band on the reference channel: elapsed time or slope.
      auto axis = slice(channel_ref(s, eff->reference), *prin);
      auto time = slice(s.time_s, *prin);
      auto clipped = kernels::clip_to_interval(axis, {time}, eff->lower, eff->upper);
      if (clipped.empty()) return std::nullopt;
      auto [mn, mx] = std::minmax_element(clipped.axis.begin(), clipped.axis.end());
      if (!covers(*mn, *mx, *eff)) return std::nullopt;
      const bool is_slope = desc.id[0] == 'S';
      if (is_slope) return kernels::line_slope(clipped.companions[0], clipped.axis);
      return clipped.companions[0].back() - clipped.companions[0].front();
    }

    case HiCategory::temperature: {
      if (runs.empty()) return std::nullopt;
      double mx = -1e300, mn = 1e300, sum = 0.0;
      std::size_t n = 0;
      for (const auto& r : runs)
        for (std::size_t i = r.first; i <= r.last; ++i) {
          const double t = s.temperature_c[i];
          mx = std::max(mx, t);
          mn = std::min(mn, t);
          sum += t;
          ++n;
        }
      switch (desc.id[0]) {
        case 'H': return mx;
        case 'L': return mn;
        case 'M': return sum / static_cast<double>(n);
      }
      raise(errc::internal, "bad temperature id " + desc.id);
    }

    case HiCategory::integral: {
      if (runs.empty()) return std::nullopt;
      const bool energy = desc.id[0] == 'E';
      const SignalKind sig_kind = desc.signal;
      double acc = 0.0;
      for (const auto& r : runs) {
        if (r.count() < 2) continue;
        auto time = slice(s.time_s, r);
        auto sig = slice(channel(s, sig_kind), r);
        if (sig_kind == SignalKind::current) {
          std::vector<double> rectified(sig.begin(), sig.end());
          for (double& v : rectified) v = std::abs(v);
          acc += energy ? kernels::integrate_energy(time, rectified)
                        : kernels::integrate_area(time, rectified);
        } else {
          acc += energy ? kernels::integrate_energy(time, sig)
                        : kernels::integrate_area(time, sig);
        }
      }
      return acc;
    }

    case HiCategory::differential: {
      if (!prin) return std::nullopt;
      const char family = desc.id[0] == 'I' ? 'I' : (desc.id[1] == 'V' ? 'V' : 'T');
      std::optional<kernels::DifferentialCurve> curve;
      if (family == 'I') {
        curve = ic_curve(ctx, *prin);
      } else if (family == 'V') {
        auto soc = soc_over(*prin);
        curve = build_curve(soc, slice(s.voltage_v, *prin), kernels::CurveKind::dv,
                            kDvBinWidthPct);
        if (curve)  // V per SOC-percent -> V/Ah
          for (double& o : curve->ordinate) o *= 100.0 / nominal;
      } else {
        curve = build_curve(slice(s.voltage_v, *prin), slice(s.temperature_c, *prin),
                            kernels::CurveKind::dt, kIcBinWidthV);
      }
      if (!curve || curve->abscissa.size() < 2) return std::nullopt;
      const bool valley = family == 'V';
      const double lo = desc.partial ? eff->lower : curve->abscissa.front();
      const double hi = desc.partial ? eff->upper : curve->abscissa.back();
      auto pf = kernels::peak_features(*curve, lo, hi,
                                       valley ? kernels::PeakMode::valley
                                              : kernels::PeakMode::peak);
      if (desc.id == "ICA" || desc.id == "DVA" || desc.id == "DTA") return pf.area;
      if (desc.id == "ICP" || desc.id == "DVV" || desc.id == "DTP") return pf.extreme_value;
      if (desc.id == "ICPL" || desc.id == "DVVL" || desc.id == "DTPL")
        return pf.extreme_location;
      if (desc.id == "ICS" || desc.id == "DVS" || desc.id == "DTS") return pf.slope;
      raise(errc::internal, "bad differential id " + desc.id);
    }

    case HiCategory::statistics: {
      std::vector<double> v;
      for (const auto& r : runs)
        for (std::size_t i = r.first; i <= r.last; ++i) v.push_back(s.voltage_v[i]);
      if (v.size() < 2) return std::nullopt;
      if (desc.id == "SD") {
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        double m2 = 0.0;
        for (double x : v) m2 += (x - mean) * (x - mean);
        return std::sqrt(m2 / static_cast<double>(v.size()));
      }
      if (desc.id == "SK") return kernels::moments(v).skewness;
      if (desc.id == "KT") return kernels::moments(v).kurtosis;
      if (desc.id == "SE") return kernels::sample_entropy(v, 1, 0.15);
      raise(errc::internal, "bad statistics id " + desc.id);
    }

    case HiCategory::soc_based: {
      if (!prin) return std::nullopt;
      auto soc = soc_over(*prin);
      if (desc.id == "ICP_SOC") {
        auto curve = ic_curve(ctx, *prin);
        if (!curve) return std::nullopt;
        // Remap the voltage abscissa to SOC through the run's V -> SOC map.
        std::vector<std::pair<double, double>> v_soc;
        v_soc.reserve(soc.size());
        for (std::size_t i = 0; i < soc.size(); ++i)
          v_soc.emplace_back(s.voltage_v[prin->first + i], soc[i]);
        std::sort(v_soc.begin(), v_soc.end());
        std::vector<double> vx, vy;
        for (std::size_t i = 0; i < v_soc.size(); ++i) {
          if (!vx.empty() && v_soc[i].first == vx.back()) {
            vy.back() = 0.5 * (vy.back() + v_soc[i].second);
            continue;
          }
          vx.push_back(v_soc[i].first);
          vy.push_back(v_soc[i].second);
        }
        if (vx.size() < 2) return std::nullopt;
        for (double& a : curve->abscissa) a = interp_at(vx, vy, a);
        const double clo = curve->abscissa.front(), chi = curve->abscissa.back();
        if (desc.acquisition.kind == AcquisitionRule::Kind::full_interval &&
            !covers(clo, chi, *eff))
          return std::nullopt;
        if (desc.acquisition.kind == AcquisitionRule::Kind::any_subwindow &&
            std::min(chi, eff->upper) - std::max(clo, eff->lower) <
                desc.acquisition.width_pct - 1e-9)
          return std::nullopt;
        return kernels::peak_features(*curve, eff->lower, eff->upper,
                                      kernels::PeakMode::peak)
            .extreme_value;
      }
      auto sig = slice(channel(s, desc.signal), *prin);
      auto clipped = kernels::clip_to_interval(soc, {sig}, eff->lower, eff->upper);
      if (!rule_satisfied(clipped, *eff, desc.acquisition)) return std::nullopt;
      if (clipped.size() < 2) return std::nullopt;
      if (desc.id == "CDE_SOC")  // signed: traversal direction is information here
        return clipped.companions[0].back() - clipped.companions[0].front();
      return magnitude_delta(clipped, 0);
    }

    default:
      raise(errc::internal, "extract dispatch fell through for " + desc.id);
  }
}

std::string Registry::catalog_json() const {
  ordered_json arr = ordered_json::array();
  for (const auto& d : ordered_) {
    ordered_json j{{"id", d.id},
                   {"category", hi_category_name(d.category)},
                   {"scenario", scenario_name(d.scenario)},
                   {"signal", signal_kind_name(d.signal)},
                   {"partial", d.partial}};
    j["reference"] = d.reference ? ordered_json(interval_ref_name(*d.reference))
                                 : ordered_json(nullptr);
    if (d.default_interval)
      j["default_interval"] = ordered_json{
          {"reference", interval_ref_name(d.default_interval->reference)},
          {"lower", d.default_interval->lower},
          {"upper", d.default_interval->upper}};
    else
      j["default_interval"] = nullptr;
    ordered_json rule{{"kind", d.acquisition.kind == AcquisitionRule::Kind::full_interval
                                   ? "full_interval"
                                   : "any_subwindow"}};
    if (d.acquisition.kind == AcquisitionRule::Kind::any_subwindow)
      rule["width_pct"] = d.acquisition.width_pct;
    j["acquisition"] = std::move(rule);
    j["degradation_tags"] = d.degradation_tags;
    j["constituents"] = d.constituents;
    arr.push_back(std::move(j));
  }
  return textio::dump_json(ordered_json{{"schema_version", 1}, {"descriptors", arr}});
}

} // namespace bhm
