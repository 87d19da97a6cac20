// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bhm/registry.hpp"
#include "bhm/types.hpp"

namespace bhm {

// Knobs of the learning stage, shared by every evaluation entry point.
struct EngineConfig {
  Eigen::Index hidden_dim = 20;
  double ridge = 1e-8;
  std::size_t n_seeds = 10;        // models per (HI, cell); median test RMSE reported
  std::uint64_t base_seed = 42;
  double train_fraction = 0.6;
  std::size_t woa_population = 20;
  std::size_t woa_iterations = 30;
  std::size_t jobs = 1;
};

// Pearson correlation. Requires >= 3 pairs and nonzero variance on both
// sides (errc::insufficient / errc::degenerate otherwise).
double pcc(std::span<const double> x, std::span<const double> y);

struct EvaluationRecord {
  std::string hi_id;
  std::map<std::string, double> per_cell_pcc;     // non-degenerate cells only
  std::optional<double> mean_abs_pcc;             // absent for width > 1 HIs
  double rmse_elm = 0.0;                          // mean over cells of median over seeds
  double rmse_woa_elm = 0.0;
  std::optional<IntervalSpec> interval;
  std::map<std::string, std::size_t> n_cycles_used;
  std::size_t degenerate_cells = 0;
  bool partial = false;
};

// Full Table-1-style scoring of one HI over a set of cells: extract,
// pairwise-drop missing cycles, PCC per cell, chronological train/test
// split, ELM + WOA-ELM over n_seeds seeds with median test RMSE per cell,
// then mean across cells. Cells where the feature (or SOH) is constant are
// excluded from the PCC mean and counted; if every cell is degenerate or
// lacks enough usable cycles the whole evaluation raises errc::evaluation.
EvaluationRecord evaluate_hi(std::span<const CellHistory> histories,
                             const Registry& registry,
                             const HIDescriptor& descriptor,
                             const std::optional<IntervalSpec>& interval,
                             const EngineConfig& engine);

struct GridCandidate {
  IntervalSpec interval;
  std::optional<double> mean_abs_pcc;  // empty: all cells missing/degenerate
};

struct GridSearchResult {
  IntervalSpec best;
  double best_mean_abs_pcc = 0.0;
  std::vector<GridCandidate> candidates;  // main pass, then refinement pass
  bool refined = false;
};

// PCC-only interval optimization: n_points equally spaced breakpoints over
// search_bounds, every ordered pair (i < j) scored by mean |PCC| across
// cells, first-occurrence argmax returned. When `refine` and the best score
// is below 0.95, one extra pass re-grids between the breakpoints adjacent
// to the winning pair and the overall argmax wins. Raises errc::search when
// no candidate produces a defined PCC.
GridSearchResult grid_search_interval(std::span<const CellHistory> histories,
                                      const Registry& registry,
                                      const HIDescriptor& descriptor,
                                      const IntervalSpec& search_bounds,
                                      std::size_t n_points = 10,
                                      bool refine = true);

enum class HeatCell : std::uint8_t { ok, missing, degenerate };

struct HeatmapTable {
  std::vector<double> breakpoints;  // uniform grid, ascending
  struct Entry {
    HeatCell status = HeatCell::missing;
    double abs_pcc = 0.0;  // meaningful when status == ok
  };
  // Upper triangle, row-major: entry index for pair (i, j), i < j.
  std::vector<Entry> entries;

  std::size_t pair_index(std::size_t i, std::size_t j) const;
  const Entry& at(std::size_t i, std::size_t j) const;
};

// |PCC| of a SOC-based HI for every (start, end) SOC pair on a uniform
// grid; entries where every cell fails coverage are missing, zero-variance
// entries are flagged degenerate.
HeatmapTable soc_heatmap(std::span<const CellHistory> histories,
                         const Registry& registry,
                         const HIDescriptor& soc_descriptor,
                         double step_pct = 5.0,
                         double range_lo = 0.0, double range_hi = 100.0);

struct ScreeningConfig {
  double pcc_threshold = 0.9;
  struct Group {
    std::vector<std::string> members;
    std::string keeper;  // must be a member
  };
  std::vector<Group> redundancy_groups;
  double probability_floor = 0.05;
  double rmse_ceiling_pp = 3.0;  // applied to WOA-ELM RMSE

  // The canonical grouping: voltage-drop, voltage-rise, current-drop and
  // temperature-rise trios collapse to their fixed-time representative;
  // peak value beats peak location.
  static ScreeningConfig defaults();
};

struct ScreeningReport {
  std::vector<std::vector<std::string>> step_survivors;  // after steps 1..4
  struct Drop {
    std::string id;
    int step = 0;
    std::string reason;
  };
  std::vector<Drop> drops;
  std::map<std::string, std::string> soc_mapping;  // keeper id -> SOC-based id
  std::vector<std::string> final_ids;              // SOC-based ids

  std::string to_json() const;
};

// The four-step funnel: correlation floor, partial-curve capability,
// redundancy collapse, SOC conversion + acquisition probability +
// regression-quality gates.
ScreeningReport screen(std::span<const EvaluationRecord> records,
                       const Registry& registry,
                       const std::map<std::string, double>& probabilities,
                       const ScreeningConfig& config);

// Box-plot style five-number summary plus mean; quantiles use linear
// interpolation between order statistics, whiskers the 1.5 IQR rule.
struct BoxStats {
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0, mean = 0;
  double whisker_lo = 0, whisker_hi = 0;  // data extremes within 1.5 IQR fences
  std::vector<double> outliers;
};

BoxStats box_stats(std::vector<double> values);

} // namespace bhm
