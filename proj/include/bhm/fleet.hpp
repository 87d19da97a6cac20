// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "bhm/registry.hpp"

namespace bhm {

enum class SessionCategory : std::uint8_t { driving, charging };

struct DrivingSession {
  double start_soc = 0.0;  // percent
  double end_soc = 0.0;
  SessionCategory category = SessionCategory::driving;
};

struct SessionIngest {
  std::vector<DrivingSession> sessions;
  struct Quarantined {
    std::size_t line_number = 0;  // 1-based, header = line 1
    std::string content;
    std::string reason;
  };
  std::vector<Quarantined> quarantined;
};

// CSV with header start_soc,end_soc,category. Category accepts the numeric
// codes 10 (driving), 30 and 50 (charging, full charging) or the names
// driving/charging. Rows violating the direction invariants (charging must
// not lose SOC, driving must not gain), out-of-range SOC, or unknown codes
// are quarantined with reasons, never silently fixed.
SessionIngest ingest_sessions(const std::filesystem::path& path);

// Per-category counts of 1%-bin coverage: each session increments every
// whole-percent bin in [min(start,end), max(start,end)).
struct UsageHistogram {
  std::array<std::uint64_t, 100> driving{};
  std::array<std::uint64_t, 100> charging{};
  std::uint64_t driving_total = 0;   // sum over driving bins
  std::uint64_t charging_total = 0;
};

UsageHistogram soc_usage_histogram(std::span<const DrivingSession> sessions);

enum class SocScenario : std::uint8_t { charge, discharge };

struct SocRequirement {
  SocScenario scenario = SocScenario::charge;
  double lo = 0.0;  // percent, lo < hi
  double hi = 0.0;
  AcquisitionRule rule;
};

// The SOC window + rule a descriptor needs, derived from its default
// interval, acquisition rule and scenario. Throws errc::argument for
// descriptors without a SOC reference.
SocRequirement requirement_for(const HIDescriptor& descriptor);

struct ProbabilityResult {
  std::uint64_t numerator = 0;
  std::uint64_t denominator = 0;
  double probability = 0.0;
};

// numerator = sessions of the matching category (charge -> charging,
// discharge -> driving) whose SOC span satisfies the rule: full_interval
// needs span superset of [lo, hi]; any_subwindow(w) needs overlap length
// >= w (inclusive). denominator = all sessions of that category.
ProbabilityResult acquisition_probability(std::span<const DrivingSession> sessions,
                                          const SocRequirement& requirement);

struct FusionProbability {
  double probability = 0.0;  // product over scenarios
  std::map<SocScenario, ProbabilityResult> per_scenario;
};

// Requirements grouped by scenario; one session must satisfy all
// requirements of its scenario simultaneously; scenarios combine by the
// independence product (a single session never spans both a charge and a
// drive).
FusionProbability fusion_probability(std::span<const DrivingSession> sessions,
                                     std::span<const SocRequirement> requirements);

} // namespace bhm
