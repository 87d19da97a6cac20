// SPDX-License-Identifier: Apache-2.0
#include "bhm/fleet.hpp"

#include <algorithm>
#include <cmath>

#include "bhm/error.hpp"
#include "textio.hpp"

namespace bhm {

SessionIngest ingest_sessions(const std::filesystem::path& path) {
  const textio::CsvTable table = textio::read_csv(path);
  const std::vector<std::string> expect = {"start_soc", "end_soc", "category"};
  if (table.header != expect)
    raise(errc::format, "session CSV header must be start_soc,end_soc,category");

  SessionIngest out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    auto bad = [&](std::string reason) {
      out.quarantined.push_back(
          {table.line_numbers[r], row[0] + "," + row[1] + "," + row[2], std::move(reason)});
    };
    const auto p0 = textio::parse_double(row[0]);
    const auto p1 = textio::parse_double(row[1]);
    if (!p0 || !p1) {
      bad("SOC does not parse as a number");
      continue;
    }
    const double s0 = *p0, s1 = *p1;
    if (!(s0 >= 0.0 && s0 <= 100.0 && s1 >= 0.0 && s1 <= 100.0)) {
      bad("SOC outside [0, 100]");
      continue;
    }
    SessionCategory cat;
    const std::string& c = row[2];
    if (c == "10" || c == "driving") {
      cat = SessionCategory::driving;
    } else if (c == "30" || c == "50" || c == "charging") {
      cat = SessionCategory::charging;
    } else {
      bad("unknown category code " + c);
      continue;
    }
    if (cat == SessionCategory::charging && s1 < s0) {
      bad("charging session loses SOC");
      continue;
    }
    if (cat == SessionCategory::driving && s1 > s0) {
      bad("driving session gains SOC");
      continue;
    }
    out.sessions.push_back({s0, s1, cat});
  }
  return out;
}

UsageHistogram soc_usage_histogram(std::span<const DrivingSession> sessions) {
  UsageHistogram h;
  for (const auto& s : sessions) {
    const double lo = std::min(s.start_soc, s.end_soc);
    const double hi = std::max(s.start_soc, s.end_soc);
    auto& bins = s.category == SessionCategory::driving ? h.driving : h.charging;
    auto& total = s.category == SessionCategory::driving ? h.driving_total : h.charging_total;
    // Every whole-percent bin [k, k+1) the span [lo, hi) touches.
    const auto first = static_cast<std::size_t>(std::floor(lo));
    for (std::size_t k = first; k < 100 && static_cast<double>(k) < hi; ++k) {
      bins[k] += 1;
      total += 1;
    }
  }
  return h;
}

SocRequirement requirement_for(const HIDescriptor& descriptor) {
  if (!descriptor.default_interval ||
      descriptor.default_interval->reference != IntervalRef::soc_pct)
    raise(errc::argument, descriptor.id + " has no SOC window");
  SocRequirement r;
  r.lo = descriptor.default_interval->lower;
  r.hi = descriptor.default_interval->upper;
  r.rule = descriptor.acquisition;
  switch (descriptor.scenario) {
    case Scenario::cc_charge:
    case Scenario::cv_charge:
    case Scenario::cccv_charge:
      r.scenario = SocScenario::charge;
      break;
    case Scenario::cc_discharge:
      r.scenario = SocScenario::discharge;
      break;
    default:
      raise(errc::argument, descriptor.id + " spans both charge and discharge");
  }
  return r;
}

namespace {

bool session_satisfies(const DrivingSession& s, const SocRequirement& req) {
  const double lo = std::min(s.start_soc, s.end_soc);
  const double hi = std::max(s.start_soc, s.end_soc);
  if (req.rule.kind == AcquisitionRule::Kind::full_interval)
    return lo <= req.lo && hi >= req.hi;
  const double overlap = std::min(hi, req.hi) - std::max(lo, req.lo);
  return overlap >= req.rule.width_pct;
}

SessionCategory category_of(SocScenario sc) {
  return sc == SocScenario::charge ? SessionCategory::charging : SessionCategory::driving;
}

} // namespace

ProbabilityResult acquisition_probability(std::span<const DrivingSession> sessions,
                                          const SocRequirement& requirement) {
  if (!(requirement.lo < requirement.hi))
    raise(errc::argument, "requirement window lower must be < upper");
  ProbabilityResult r;
  const SessionCategory want = category_of(requirement.scenario);
  for (const auto& s : sessions) {
    if (s.category != want) continue;
    ++r.denominator;
    if (session_satisfies(s, requirement)) ++r.numerator;
  }
  if (r.denominator == 0)
    raise(errc::insufficient, "no sessions of the required category");
  r.probability = static_cast<double>(r.numerator) / static_cast<double>(r.denominator);
  return r;
}

FusionProbability fusion_probability(std::span<const DrivingSession> sessions,
                                     std::span<const SocRequirement> requirements) {
  if (requirements.empty()) raise(errc::argument, "no requirements to combine");
  std::map<SocScenario, std::vector<const SocRequirement*>> by_scenario;
  for (const auto& r : requirements) by_scenario[r.scenario].push_back(&r);

  FusionProbability out;
  out.probability = 1.0;
  for (const auto& [scenario, reqs] : by_scenario) {
    const SessionCategory want = category_of(scenario);
    ProbabilityResult pr;
    for (const auto& s : sessions) {
      if (s.category != want) continue;
      ++pr.denominator;
      bool all = true;
      for (const auto* r : reqs)
        if (!session_satisfies(s, *r)) {
          all = false;
          break;
        }
      if (all) ++pr.numerator;
    }
    if (pr.denominator == 0)
      raise(errc::insufficient, "no sessions of a required category");
    pr.probability = static_cast<double>(pr.numerator) / static_cast<double>(pr.denominator);
    out.probability *= pr.probability;
    out.per_scenario[scenario] = pr;
  }
  return out;
}

} // namespace bhm
