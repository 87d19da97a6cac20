// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <numbers>

#include "bhm/error.hpp"
#include "bhm/rng.hpp"
#include "bhm/types.hpp"

namespace bhm {

const char* errc_name(errc c) noexcept {
  switch (c) {
    case errc::argument: return "argument";
    case errc::format: return "format";
    case errc::data: return "data";
    case errc::coverage: return "coverage";
    case errc::degenerate: return "degenerate";
    case errc::insufficient: return "insufficient";
    case errc::undefined_entropy: return "undefined_entropy";
    case errc::numerical: return "numerical";
    case errc::conversion: return "conversion";
    case errc::evaluation: return "evaluation";
    case errc::search: return "search";
    case errc::config: return "config";
    case errc::io: return "io";
    case errc::internal: return "internal";
  }
  return "unknown";
}

const char* phase_kind_name(PhaseKind k) noexcept {
  switch (k) {
    case PhaseKind::cc_charge: return "cc_charge";
    case PhaseKind::cv_charge: return "cv_charge";
    case PhaseKind::cc_discharge: return "cc_discharge";
    case PhaseKind::rest: return "rest";
    case PhaseKind::other: return "other";
  }
  return "other";
}

std::optional<PhaseKind> phase_kind_from_name(const std::string& name) noexcept {
  if (name == "cc_charge") return PhaseKind::cc_charge;
  if (name == "cv_charge") return PhaseKind::cv_charge;
  if (name == "cc_discharge") return PhaseKind::cc_discharge;
  if (name == "rest") return PhaseKind::rest;
  if (name == "other") return PhaseKind::other;
  return std::nullopt;
}

const char* interval_ref_name(IntervalRef r) noexcept {
  switch (r) {
    case IntervalRef::time_s: return "time_s";
    case IntervalRef::voltage_v: return "voltage_v";
    case IntervalRef::current_a: return "current_a";
    case IntervalRef::temperature_c: return "temperature_c";
    case IntervalRef::soc_pct: return "soc_pct";
  }
  return "time_s";
}

std::optional<IntervalRef> interval_ref_from_name(const std::string& name) noexcept {
  if (name == "time_s") return IntervalRef::time_s;
  if (name == "voltage_v") return IntervalRef::voltage_v;
  if (name == "current_a") return IntervalRef::current_a;
  if (name == "temperature_c") return IntervalRef::temperature_c;
  if (name == "soc_pct") return IntervalRef::soc_pct;
  return std::nullopt;
}

double normal(rng64& g, double mean, double sd) {
  // Box-Muller; u1 nudged away from 0 so log stays finite.
  double u1 = uniform01(g);
  double u2 = uniform01(g);
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  return mean + sd * z;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag_a, std::uint64_t tag_b) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(seed) ^ tag_a) ^ tag_b);
}

} // namespace bhm
