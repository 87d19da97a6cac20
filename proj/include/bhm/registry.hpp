// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bhm/types.hpp"

namespace bhm {

enum class HiCategory : std::uint8_t {
  time, temperature, integral, differential, statistics, soc_based, fusion,
};

enum class Scenario : std::uint8_t {
  cc_charge, cv_charge, cccv_charge, cc_discharge, full_cycle, charge_and_discharge,
};

enum class SignalKind : std::uint8_t {
  current, voltage, temperature, charge, derived_curve,
};

const char* hi_category_name(HiCategory c) noexcept;
const char* scenario_name(Scenario s) noexcept;
const char* signal_kind_name(SignalKind s) noexcept;

struct AcquisitionRule {
  enum class Kind : std::uint8_t { full_interval, any_subwindow } kind = Kind::full_interval;
  double width_pct = 0.0;  // meaningful for any_subwindow only
};

// Declarative description of one health indicator. Extraction dispatches on
// (category, id); everything else is metadata the pipeline and screening
// steps consume.
struct HIDescriptor {
  std::string id;
  HiCategory category = HiCategory::time;
  Scenario scenario = Scenario::full_cycle;
  SignalKind signal = SignalKind::voltage;
  std::optional<IntervalRef> reference;       // empty for full-curve HIs
  bool partial = false;                       // needs only part of the curve
  std::optional<IntervalSpec> default_interval;
  AcquisitionRule acquisition;
  std::vector<std::string> degradation_tags;  // informational only
  std::vector<std::string> constituents;      // non-empty only for fusion
};

// Per-cycle extraction result: missing (coverage / absent phase / degenerate
// input on that cycle) or a feature vector. Width is 1 for every non-fusion
// HI and |constituents| for fusions.
using FeatureValue = std::optional<std::vector<double>>;

struct FeatureSeries {
  std::size_t width = 1;
  std::vector<FeatureValue> per_cycle;  // aligned with history.cycles
  std::vector<double> soh_pct;          // convenience copy, same alignment

  std::size_t missing_count() const noexcept;
};

class Registry {
public:
  // The built-in catalog: the 77 full/partial indicators plus the 5
  // SOC-referenced ones with their default windows and acquisition rules.
  static Registry builtin();

  const HIDescriptor* find(const std::string& id) const noexcept;
  // find() or throw errc::argument naming the id.
  const HIDescriptor& get(const std::string& id) const;
  const std::vector<HIDescriptor>& all() const noexcept { return ordered_; }

  std::map<HiCategory, std::size_t> category_counts() const;

  // Map a partial indicator to its SOC-referenced sibling (VRET -> VRE_SOC
  // etc.). Throws errc::conversion for anything without a defined mapping.
  const HIDescriptor& to_soc_based(const HIDescriptor& descriptor) const;

  // Build, register, and return a fusion of >= 2 distinct SOC-based ids.
  // The fused scenario is the union of the constituents' scenarios.
  const HIDescriptor& fuse(const std::vector<std::string>& ids,
                           const std::string& fusion_id);

  // Per-cycle extraction. `interval` overrides the descriptor's default
  // window (partial HIs only; full-curve HIs reject one). Cycles that do not
  // cover the window, lack the scoped phase, or feed a kernel degenerate
  // input yield missing values, never exceptions.
  FeatureSeries extract(const CellHistory& history,
                        const HIDescriptor& descriptor,
                        const std::optional<IntervalSpec>& interval = std::nullopt) const;

  FeatureSeries extract(const CellHistory& history, const std::string& id,
                        const std::optional<IntervalSpec>& interval = std::nullopt) const;

  // JSON catalog of every descriptor (documentation / tooling surface).
  std::string catalog_json() const;

private:
  void add(HIDescriptor d);

  static std::optional<double> extract_cycle_value(const void* cycle_context,
                                                   const HIDescriptor& descriptor,
                                                   const std::optional<IntervalSpec>& interval);

  std::vector<HIDescriptor> ordered_;
  std::map<std::string, std::size_t> by_id_;
};

} // namespace bhm
