// SPDX-License-Identifier: Apache-2.0
#include "bhm/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <json.hpp>

#include "bhm/error.hpp"
#include "bhm/regression.hpp"
#include "bhm/rng.hpp"
#include "textio.hpp"

namespace bhm {

using nlohmann::ordered_json;

double pcc(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) raise(errc::argument, "pcc: length mismatch");
  const std::size_t n = x.size();
  if (n < 3) raise(errc::insufficient, "pcc needs at least 3 pairs");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0)
    raise(errc::degenerate, "pcc undefined for a constant sequence");
  return sxy / std::sqrt(sxx * syy);
}

namespace {

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct UsableCycles {
  std::vector<std::vector<double>> features;  // one vector per usable cycle
  std::vector<double> soh;
};

UsableCycles usable_cycles(const FeatureSeries& fs) {
  UsableCycles out;
  for (std::size_t i = 0; i < fs.per_cycle.size(); ++i) {
    if (!fs.per_cycle[i]) continue;
    if (!std::isfinite(fs.soh_pct[i])) continue;
    out.features.push_back(*fs.per_cycle[i]);
    out.soh.push_back(fs.soh_pct[i]);
  }
  return out;
}

// |PCC| of one width-1 feature series against SOH; nullopt when the cell has
// too few usable cycles or a constant side.
std::optional<double> cell_abs_pcc(const FeatureSeries& fs) {
  if (fs.width != 1) return std::nullopt;
  UsableCycles u = usable_cycles(fs);
  std::vector<double> vals(u.features.size());
  for (std::size_t i = 0; i < u.features.size(); ++i) vals[i] = u.features[i][0];
  try {
    return std::abs(pcc(vals, u.soh));
  } catch (const Error& e) {
    if (e.code() == errc::insufficient || e.code() == errc::degenerate) return std::nullopt;
    throw;
  }
}

} // namespace

EvaluationRecord evaluate_hi(std::span<const CellHistory> histories,
                             const Registry& registry,
                             const HIDescriptor& descriptor,
                             const std::optional<IntervalSpec>& interval,
                             const EngineConfig& engine) {
  if (histories.empty()) raise(errc::argument, "no cells to evaluate");
  EvaluationRecord rec;
  rec.hi_id = descriptor.id;
  rec.interval = interval ? interval : descriptor.default_interval;
  rec.partial = descriptor.partial;

  std::vector<double> pccs;
  double sum_elm = 0.0, sum_woa = 0.0;
  std::size_t rmse_cells = 0;

  for (const auto& cell : histories) {
    const FeatureSeries fs = registry.extract(cell, descriptor, interval);
    UsableCycles u = usable_cycles(fs);
    rec.n_cycles_used[cell.cell_id] = u.soh.size();

    if (fs.width == 1) {
      std::vector<double> vals(u.features.size());
      for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = u.features[i][0];
      try {
        const double r = pcc(vals, u.soh);
        rec.per_cell_pcc[cell.cell_id] = r;
        pccs.push_back(std::abs(r));
      } catch (const Error& e) {
        if (e.code() != errc::insufficient && e.code() != errc::degenerate) throw;
        ++rec.degenerate_cells;
      }
    }

    // Regression stage: chronological split, n_seeds models each way,
    // median test RMSE per cell.
    const std::size_t m = u.soh.size();
    if (m < 5) continue;
    auto [train_idx, test_idx] = split_train_test(m, engine.train_fraction);
    const auto w = static_cast<Eigen::Index>(fs.width);
    Eigen::MatrixXd xtr(w, static_cast<Eigen::Index>(train_idx.size()));
    Eigen::MatrixXd xte(w, static_cast<Eigen::Index>(test_idx.size()));
    Eigen::RowVectorXd ytr(static_cast<Eigen::Index>(train_idx.size()));
    Eigen::RowVectorXd yte(static_cast<Eigen::Index>(test_idx.size()));
    for (std::size_t k = 0; k < train_idx.size(); ++k) {
      for (Eigen::Index d = 0; d < w; ++d)
        xtr(d, static_cast<Eigen::Index>(k)) = u.features[train_idx[k]][static_cast<std::size_t>(d)];
      ytr(static_cast<Eigen::Index>(k)) = u.soh[train_idx[k]];
    }
    for (std::size_t k = 0; k < test_idx.size(); ++k) {
      for (Eigen::Index d = 0; d < w; ++d)
        xte(d, static_cast<Eigen::Index>(k)) = u.features[test_idx[k]][static_cast<std::size_t>(d)];
      yte(static_cast<Eigen::Index>(k)) = u.soh[test_idx[k]];
    }

    const std::uint64_t tag = textio::fnv1a64(descriptor.id + "\x1f" + cell.cell_id);
    std::vector<double> r_elm, r_woa;
    r_elm.reserve(engine.n_seeds);
    r_woa.reserve(engine.n_seeds);
    for (std::size_t k = 0; k < engine.n_seeds; ++k) {
      const std::uint64_t elm_seed = mix_seed(engine.base_seed, tag, 2 * k);
      const ElmModel elm =
          train_elm(xtr, ytr, engine.hidden_dim, engine.ridge, elm_seed);
      r_elm.push_back(rmse(yte, predict(elm, xte)));
      WoaConfig woa;
      woa.population = engine.woa_population;
      woa.max_iterations = engine.woa_iterations;
      woa.seed = mix_seed(engine.base_seed, tag, 2 * k + 1);
      const ElmModel opt =
          train_woa_elm(xtr, ytr, engine.hidden_dim, woa, engine.ridge, elm_seed);
      r_woa.push_back(rmse(yte, predict(opt, xte)));
    }
    sum_elm += median_of(r_elm);
    sum_woa += median_of(r_woa);
    ++rmse_cells;
  }

  if (rmse_cells == 0)
    raise(errc::evaluation,
          descriptor.id + ": no cell has enough usable cycles to fit a model");
  rec.rmse_elm = sum_elm / static_cast<double>(rmse_cells);
  rec.rmse_woa_elm = sum_woa / static_cast<double>(rmse_cells);
  if (!pccs.empty()) {
    double s = 0.0;
    for (double v : pccs) s += v;
    rec.mean_abs_pcc = s / static_cast<double>(pccs.size());
  }
  return rec;
}

namespace {

std::optional<double> mean_abs_pcc_at(std::span<const CellHistory> histories,
                                      const Registry& registry,
                                      const HIDescriptor& descriptor,
                                      const IntervalSpec& interval) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& cell : histories) {
    const FeatureSeries fs = registry.extract(cell, descriptor, interval);
    if (auto v = cell_abs_pcc(fs)) {
      sum += *v;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k)
    out[k] = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(n - 1);
  out.back() = hi;
  return out;
}

void score_pairs(std::span<const CellHistory> histories, const Registry& registry,
                 const HIDescriptor& descriptor, const std::vector<double>& breakpoints,
                 IntervalRef ref, std::vector<GridCandidate>& out) {
  for (std::size_t i = 0; i + 1 < breakpoints.size(); ++i)
    for (std::size_t j = i + 1; j < breakpoints.size(); ++j) {
      IntervalSpec iv{ref, breakpoints[i], breakpoints[j]};
      out.push_back({iv, mean_abs_pcc_at(histories, registry, descriptor, iv)});
    }
}

} // namespace

GridSearchResult grid_search_interval(std::span<const CellHistory> histories,
                                      const Registry& registry,
                                      const HIDescriptor& descriptor,
                                      const IntervalSpec& search_bounds,
                                      std::size_t n_points, bool refine) {
  if (!descriptor.partial)
    raise(errc::argument, descriptor.id + ": interval search needs a partial HI");
  if (descriptor.reference && search_bounds.reference != *descriptor.reference)
    raise(errc::argument, "search bounds reference mismatch");
  if (!(search_bounds.lower < search_bounds.upper))
    raise(errc::argument, "search bounds lower must be < upper");
  if (n_points < 2) raise(errc::argument, "need at least 2 grid points");
  if (histories.empty()) raise(errc::argument, "no cells to search over");

  GridSearchResult res;
  const auto breakpoints = linspace(search_bounds.lower, search_bounds.upper, n_points);
  score_pairs(histories, registry, descriptor, breakpoints, search_bounds.reference,
              res.candidates);

  auto argmax = [&](std::size_t from, std::size_t to) {
    std::optional<std::size_t> best;
    for (std::size_t k = from; k < to; ++k) {
      if (!res.candidates[k].mean_abs_pcc) continue;
      if (!best || *res.candidates[k].mean_abs_pcc > *res.candidates[*best].mean_abs_pcc)
        best = k;
    }
    return best;
  };

  auto best = argmax(0, res.candidates.size());
  if (!best) raise(errc::search, descriptor.id + ": no candidate interval is scorable");

  if (refine && *res.candidates[*best].mean_abs_pcc < 0.95) {
    // Re-grid between the breakpoints flanking the winning pair.
    const IntervalSpec& win = res.candidates[*best].interval;
    std::size_t wi = 0, wj = 0;
    for (std::size_t k = 0; k < breakpoints.size(); ++k) {
      if (breakpoints[k] == win.lower) wi = k;
      if (breakpoints[k] == win.upper) wj = k;
    }
    const double lo = breakpoints[wi == 0 ? 0 : wi - 1];
    const double hi = breakpoints[std::min(breakpoints.size() - 1, wj + 1)];
    const std::size_t first_refined = res.candidates.size();
    score_pairs(histories, registry, descriptor, linspace(lo, hi, n_points),
                search_bounds.reference, res.candidates);
    res.refined = true;
    auto refined_best = argmax(first_refined, res.candidates.size());
    if (refined_best && *res.candidates[*refined_best].mean_abs_pcc >
                            *res.candidates[*best].mean_abs_pcc)
      best = refined_best;
  }

  res.best = res.candidates[*best].interval;
  res.best_mean_abs_pcc = *res.candidates[*best].mean_abs_pcc;
  return res;
}

std::size_t HeatmapTable::pair_index(std::size_t i, std::size_t j) const {
  const std::size_t n = breakpoints.size();
  if (i >= j || j >= n) raise(errc::argument, "heatmap pair index out of range");
  return i * n - i * (i + 1) / 2 + (j - i - 1);
}

const HeatmapTable::Entry& HeatmapTable::at(std::size_t i, std::size_t j) const {
  return entries[pair_index(i, j)];
}

HeatmapTable soc_heatmap(std::span<const CellHistory> histories,
                         const Registry& registry, const HIDescriptor& soc_descriptor,
                         double step_pct, double range_lo, double range_hi) {
  if (soc_descriptor.category != HiCategory::soc_based)
    raise(errc::argument, soc_descriptor.id + ": heatmap needs a SOC-referenced HI");
  if (!(step_pct > 0.0) || !(range_lo < range_hi))
    raise(errc::argument, "heatmap grid is empty");
  if (histories.empty()) raise(errc::argument, "no cells for heatmap");

  HeatmapTable table;
  for (double v = range_lo; v <= range_hi + 1e-9 * step_pct; v += step_pct)
    table.breakpoints.push_back(v);
  const std::size_t n = table.breakpoints.size();
  if (n < 2) raise(errc::argument, "heatmap grid needs at least 2 breakpoints");
  table.entries.resize(n * (n - 1) / 2);

  for (std::size_t i = 0; i + 1 < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      IntervalSpec iv{IntervalRef::soc_pct, table.breakpoints[i], table.breakpoints[j]};
      double sum = 0.0;
      std::size_t ok = 0;
      bool any_values = false;
      for (const auto& cell : histories) {
        const FeatureSeries fs = registry.extract(cell, soc_descriptor, iv);
        if (fs.missing_count() < fs.per_cycle.size()) any_values = true;
        if (auto v = cell_abs_pcc(fs)) {
          sum += *v;
          ++ok;
        }
      }
      auto& e = table.entries[table.pair_index(i, j)];
      if (ok > 0) {
        e.status = HeatCell::ok;
        e.abs_pcc = sum / static_cast<double>(ok);
      } else {
        e.status = any_values ? HeatCell::degenerate : HeatCell::missing;
      }
    }
  return table;
}

ScreeningConfig ScreeningConfig::defaults() {
  ScreeningConfig c;
  c.redundancy_groups = {
      {{"TEVD", "VDET", "SDV"}, "VDET"},
      {{"TEVR", "VRET", "SCV"}, "VRET"},
      {{"TECD", "CDET", "SCC"}, "CDET"},
      {{"TETR", "TRET", "SDT"}, "TRET"},
      {{"ICP", "ICPL"}, "ICP"},
  };
  return c;
}

ScreeningReport screen(std::span<const EvaluationRecord> records,
                       const Registry& registry,
                       const std::map<std::string, double>& probabilities,
                       const ScreeningConfig& config) {
  ScreeningReport report;
  auto drop = [&](const std::string& id, int step, std::string reason) {
    report.drops.push_back({id, step, std::move(reason)});
  };

  // Step 1: correlation floor.
  std::vector<const EvaluationRecord*> live;
  for (const auto& r : records) {
    if (r.mean_abs_pcc && *r.mean_abs_pcc >= config.pcc_threshold) {
      live.push_back(&r);
    } else if (!r.mean_abs_pcc) {
      drop(r.hi_id, 1, "mean |PCC| undefined");
    } else {
      drop(r.hi_id, 1, "mean |PCC| " + textio::format_double(*r.mean_abs_pcc) +
                           " below threshold " +
                           textio::format_double(config.pcc_threshold));
    }
  }
  auto snapshot = [&] {
    std::vector<std::string> ids;
    ids.reserve(live.size());
    for (const auto* r : live) ids.push_back(r->hi_id);
    report.step_survivors.push_back(std::move(ids));
  };
  snapshot();

  // Step 2: only indicators computable from part of a curve can serve
  // onboard, where full charge/discharge sweeps are rare.
  {
    std::vector<const EvaluationRecord*> next;
    for (const auto* r : live) {
      if (r->partial)
        next.push_back(r);
      else
        drop(r->hi_id, 2, "needs the full curve");
    }
    live = std::move(next);
    snapshot();
  }

  // Step 3: collapse redundancy groups to their keeper.
  {
    std::map<std::string, const ScreeningConfig::Group*> group_of;
    for (const auto& g : config.redundancy_groups) {
      bool keeper_listed = false;
      for (const auto& m : g.members) {
        group_of[m] = &g;
        keeper_listed |= m == g.keeper;
      }
      if (!keeper_listed)
        raise(errc::argument, "redundancy group keeper " + g.keeper + " is not a member");
    }
    // Effective keeper: the configured one if it survived to this step,
    // otherwise the surviving member with the highest mean |PCC|.
    std::map<const ScreeningConfig::Group*, std::string> effective;
    for (const auto& g : config.redundancy_groups) {
      const EvaluationRecord* best = nullptr;
      bool keeper_alive = false;
      for (const auto* r : live) {
        if (std::find(g.members.begin(), g.members.end(), r->hi_id) == g.members.end())
          continue;
        keeper_alive |= r->hi_id == g.keeper;
        if (!best || (r->mean_abs_pcc && best->mean_abs_pcc &&
                      *r->mean_abs_pcc > *best->mean_abs_pcc))
          best = r;
      }
      if (keeper_alive)
        effective[&g] = g.keeper;
      else if (best)
        effective[&g] = best->hi_id;
    }
    std::vector<const EvaluationRecord*> next;
    for (const auto* r : live) {
      auto it = group_of.find(r->hi_id);
      if (it == group_of.end() || effective[it->second] == r->hi_id)
        next.push_back(r);
      else
        drop(r->hi_id, 3, "redundant with " + effective[it->second]);
    }
    live = std::move(next);
    snapshot();
  }

  // Step 4: SOC-referenced form, fleet acquisition probability, model error.
  {
    std::vector<const EvaluationRecord*> next;
    for (const auto* r : live) {
      const HIDescriptor* soc = nullptr;
      try {
        soc = &registry.to_soc_based(registry.get(r->hi_id));
      } catch (const Error& e) {
        if (e.code() != errc::conversion) throw;
        drop(r->hi_id, 4, "no SOC-referenced form");
        continue;
      }
      auto it = probabilities.find(soc->id);
      if (it == probabilities.end()) {
        drop(r->hi_id, 4, "no acquisition probability for " + soc->id);
        continue;
      }
      if (it->second < config.probability_floor) {
        drop(r->hi_id, 4, "acquisition probability " + textio::format_double(it->second) +
                              " below floor " +
                              textio::format_double(config.probability_floor));
        continue;
      }
      if (r->rmse_woa_elm > config.rmse_ceiling_pp) {
        drop(r->hi_id, 4, "optimized model RMSE " + textio::format_double(r->rmse_woa_elm) +
                              " above ceiling " +
                              textio::format_double(config.rmse_ceiling_pp));
        continue;
      }
      report.soc_mapping[r->hi_id] = soc->id;
      report.final_ids.push_back(soc->id);
      next.push_back(r);
    }
    live = std::move(next);
    snapshot();
  }

  return report;
}

std::string ScreeningReport::to_json() const {
  ordered_json j;
  j["schema_version"] = 1;
  ordered_json steps = ordered_json::array();
  for (const auto& s : step_survivors) steps.push_back(s);
  j["step_survivors"] = std::move(steps);
  ordered_json ds = ordered_json::array();
  for (const auto& d : drops)
    ds.push_back(ordered_json{{"id", d.id}, {"step", d.step}, {"reason", d.reason}});
  j["drops"] = std::move(ds);
  j["soc_mapping"] = soc_mapping;
  j["final_ids"] = final_ids;
  return textio::dump_json(j);
}

BoxStats box_stats(std::vector<double> values) {
  if (values.empty()) raise(errc::insufficient, "box_stats needs at least 1 value");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(n - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(lo);
    return lo + 1 < n ? values[lo] + frac * (values[lo + 1] - values[lo]) : values[lo];
  };
  BoxStats b;
  b.min = values.front();
  b.max = values.back();
  b.q1 = quantile(0.25);
  b.median = quantile(0.5);
  b.q3 = quantile(0.75);
  double s = 0.0;
  for (double v : values) s += v;
  b.mean = s / static_cast<double>(n);
  const double iqr = b.q3 - b.q1;
  const double fence_lo = b.q1 - 1.5 * iqr;
  const double fence_hi = b.q3 + 1.5 * iqr;
  b.whisker_lo = b.max;
  b.whisker_hi = b.min;
  for (double v : values) {
    if (v >= fence_lo && v <= fence_hi) {
      b.whisker_lo = std::min(b.whisker_lo, v);
      b.whisker_hi = std::max(b.whisker_hi, v);
    } else {
      b.outliers.push_back(v);
    }
  }
  return b;
}

} // namespace bhm
