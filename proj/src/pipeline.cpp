// SPDX-License-Identifier: Apache-2.0
#include "bhm/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "bhm/error.hpp"
#include "bhm/fleet.hpp"
#include "bhm/registry.hpp"
#include "textio.hpp"

namespace bhm {

using nlohmann::ordered_json;

namespace {

// ---------------------------------------------------------------------------
// Config parsing
// ---------------------------------------------------------------------------

void check_keys(const ordered_json& obj, std::initializer_list<const char*> allowed,
                const std::string& context) {
  if (!obj.is_object()) raise(errc::config, context + " must be an object");
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    bool ok = false;
    for (const char* a : allowed)
      if (key == a) {
        ok = true;
        break;
      }
    if (!ok) raise(errc::config, "unknown config key " + context + "." + key);
  }
}

double get_num(const ordered_json& obj, const char* key, double fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_number()) raise(errc::config, std::string(key) + " must be a number");
  return obj[key].get<double>();
}

std::uint64_t get_u64(const ordered_json& obj, const char* key, std::uint64_t fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_number_unsigned())
    raise(errc::config, std::string(key) + " must be a non-negative integer");
  return obj[key].get<std::uint64_t>();
}

bool get_bool(const ordered_json& obj, const char* key, bool fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_boolean()) raise(errc::config, std::string(key) + " must be a boolean");
  return obj[key].get<bool>();
}

std::string get_str(const ordered_json& obj, const char* key, const std::string& fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_string()) raise(errc::config, std::string(key) + " must be a string");
  return obj[key].get<std::string>();
}

std::vector<std::string> get_str_list(const ordered_json& obj, const char* key) {
  std::vector<std::string> out;
  if (!obj.contains(key)) return out;
  if (!obj[key].is_array()) raise(errc::config, std::string(key) + " must be an array");
  for (const auto& v : obj[key]) {
    if (!v.is_string()) raise(errc::config, std::string(key) + " entries must be strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

IntervalSpec parse_interval(const ordered_json& obj, const std::string& context) {
  check_keys(obj, {"reference", "lower", "upper"}, context);
  if (!obj.contains("reference") || !obj.contains("lower") || !obj.contains("upper"))
    raise(errc::config, context + " needs reference, lower and upper");
  const auto ref = interval_ref_from_name(obj["reference"].get<std::string>());
  if (!ref) raise(errc::config, context + ": unknown interval reference");
  IntervalSpec s;
  s.reference = *ref;
  s.lower = obj["lower"].get<double>();
  s.upper = obj["upper"].get<double>();
  if (!(s.lower < s.upper)) raise(errc::config, context + ": lower must be < upper");
  return s;
}

ordered_json interval_to_json(const IntervalSpec& s) {
  return ordered_json{{"reference", interval_ref_name(s.reference)},
                      {"lower", s.lower},
                      {"upper", s.upper}};
}

Distribution parse_distribution(const ordered_json& obj, const std::string& context) {
  check_keys(obj, {"kind", "a", "b"}, context);
  Distribution d;
  const std::string kind = get_str(obj, "kind", "constant");
  if (kind == "constant")
    d.kind = Distribution::Kind::constant;
  else if (kind == "uniform")
    d.kind = Distribution::Kind::uniform;
  else if (kind == "normal")
    d.kind = Distribution::Kind::normal;
  else
    raise(errc::config, context + ": unknown distribution kind " + kind);
  d.a = get_num(obj, "a", 0.0);
  d.b = get_num(obj, "b", 0.0);
  return d;
}

ordered_json distribution_to_json(const Distribution& d) {
  const char* kind = d.kind == Distribution::Kind::constant  ? "constant"
                     : d.kind == Distribution::Kind::uniform ? "uniform"
                                                             : "normal";
  return ordered_json{{"kind", kind}, {"a", d.a}, {"b", d.b}};
}

SynthCellParams parse_synth_cell(const ordered_json& obj, const std::string& context) {
  check_keys(obj,
             {"cell_id", "nominal_capacity_ah", "cycles", "fade", "initial_resistance_ohm",
              "resistance_growth_ohm_per_cycle", "cc_charge_current_a",
              "cc_discharge_current_a", "upper_cutoff_v", "lower_cutoff_v",
              "cv_cutoff_current_a", "ambient_c", "heating_c_per_w", "thermal_tau_s",
              "rest_s", "sample_period_s", "noise_sd_current_a", "noise_sd_voltage_v",
              "noise_sd_temperature_c", "seed"},
             context);
  SynthCellParams p;
  p.cell_id = get_str(obj, "cell_id", p.cell_id);
  p.nominal_capacity_ah = get_num(obj, "nominal_capacity_ah", p.nominal_capacity_ah);
  p.cycles = static_cast<std::size_t>(get_u64(obj, "cycles", p.cycles));
  if (obj.contains("fade")) {
    const auto& f = obj["fade"];
    check_keys(f, {"kind", "rate_per_cycle", "alpha", "exponent"}, context + ".fade");
    const std::string kind = get_str(f, "kind", "linear");
    if (kind == "linear")
      p.fade.kind = FadeModel::Kind::linear;
    else if (kind == "power")
      p.fade.kind = FadeModel::Kind::power;
    else
      raise(errc::config, context + ".fade: unknown kind " + kind);
    p.fade.rate_per_cycle = get_num(f, "rate_per_cycle", p.fade.rate_per_cycle);
    p.fade.alpha = get_num(f, "alpha", p.fade.alpha);
    p.fade.exponent = get_num(f, "exponent", p.fade.exponent);
  }
  p.initial_resistance_ohm = get_num(obj, "initial_resistance_ohm", p.initial_resistance_ohm);
  p.resistance_growth_ohm_per_cycle =
      get_num(obj, "resistance_growth_ohm_per_cycle", p.resistance_growth_ohm_per_cycle);
  p.cc_charge_current_a = get_num(obj, "cc_charge_current_a", p.cc_charge_current_a);
  p.cc_discharge_current_a = get_num(obj, "cc_discharge_current_a", p.cc_discharge_current_a);
  p.upper_cutoff_v = get_num(obj, "upper_cutoff_v", p.upper_cutoff_v);
  p.lower_cutoff_v = get_num(obj, "lower_cutoff_v", p.lower_cutoff_v);
  p.cv_cutoff_current_a = get_num(obj, "cv_cutoff_current_a", p.cv_cutoff_current_a);
  p.ambient_c = get_num(obj, "ambient_c", p.ambient_c);
  p.heating_c_per_w = get_num(obj, "heating_c_per_w", p.heating_c_per_w);
  p.thermal_tau_s = get_num(obj, "thermal_tau_s", p.thermal_tau_s);
  p.rest_s = get_num(obj, "rest_s", p.rest_s);
  p.sample_period_s = get_num(obj, "sample_period_s", p.sample_period_s);
  p.noise_sd_current_a = get_num(obj, "noise_sd_current_a", p.noise_sd_current_a);
  p.noise_sd_voltage_v = get_num(obj, "noise_sd_voltage_v", p.noise_sd_voltage_v);
  p.noise_sd_temperature_c = get_num(obj, "noise_sd_temperature_c", p.noise_sd_temperature_c);
  p.seed = get_u64(obj, "seed", p.seed);
  return p;
}

ordered_json synth_cell_to_json(const SynthCellParams& p) {
  return ordered_json{
      {"cell_id", p.cell_id},
      {"nominal_capacity_ah", p.nominal_capacity_ah},
      {"cycles", p.cycles},
      {"fade",
       ordered_json{{"kind", p.fade.kind == FadeModel::Kind::linear ? "linear" : "power"},
                    {"rate_per_cycle", p.fade.rate_per_cycle},
                    {"alpha", p.fade.alpha},
                    {"exponent", p.fade.exponent}}},
      {"initial_resistance_ohm", p.initial_resistance_ohm},
      {"resistance_growth_ohm_per_cycle", p.resistance_growth_ohm_per_cycle},
      {"cc_charge_current_a", p.cc_charge_current_a},
      {"cc_discharge_current_a", p.cc_discharge_current_a},
      {"upper_cutoff_v", p.upper_cutoff_v},
      {"lower_cutoff_v", p.lower_cutoff_v},
      {"cv_cutoff_current_a", p.cv_cutoff_current_a},
      {"ambient_c", p.ambient_c},
      {"heating_c_per_w", p.heating_c_per_w},
      {"thermal_tau_s", p.thermal_tau_s},
      {"rest_s", p.rest_s},
      {"sample_period_s", p.sample_period_s},
      {"noise_sd_current_a", p.noise_sd_current_a},
      {"noise_sd_voltage_v", p.noise_sd_voltage_v},
      {"noise_sd_temperature_c", p.noise_sd_temperature_c},
      {"seed", p.seed}};
}

SynthFleetParams parse_synth_fleet(const ordered_json& obj, const std::string& context) {
  check_keys(obj,
             {"n_sessions", "charging_fraction", "charge_start", "charge_span",
              "drive_start", "drive_span", "seed"},
             context);
  SynthFleetParams p;
  p.n_sessions = static_cast<std::size_t>(get_u64(obj, "n_sessions", 0));
  p.charging_fraction = get_num(obj, "charging_fraction", p.charging_fraction);
  if (obj.contains("charge_start"))
    p.charge_start = parse_distribution(obj["charge_start"], context + ".charge_start");
  if (obj.contains("charge_span"))
    p.charge_span = parse_distribution(obj["charge_span"], context + ".charge_span");
  if (obj.contains("drive_start"))
    p.drive_start = parse_distribution(obj["drive_start"], context + ".drive_start");
  if (obj.contains("drive_span"))
    p.drive_span = parse_distribution(obj["drive_span"], context + ".drive_span");
  p.seed = get_u64(obj, "seed", p.seed);
  return p;
}

ordered_json synth_fleet_to_json(const SynthFleetParams& p) {
  return ordered_json{{"n_sessions", p.n_sessions},
                      {"charging_fraction", p.charging_fraction},
                      {"charge_start", distribution_to_json(p.charge_start)},
                      {"charge_span", distribution_to_json(p.charge_span)},
                      {"drive_start", distribution_to_json(p.drive_start)},
                      {"drive_span", distribution_to_json(p.drive_span)},
                      {"seed", p.seed}};
}

std::string canonicalize(const PipelineConfig& c) {
  ordered_json j;
  j["schema_version"] = c.schema_version;
  ordered_json datasets = ordered_json::array();
  for (const auto& d : c.datasets) {
    ordered_json e;
    e["cell_id"] = d.cell_id;
    e["cycles_csv"] = d.cycles_csv ? ordered_json(d.cycles_csv->generic_string())
                                   : ordered_json(nullptr);
    e["capacity_csv"] = d.capacity_csv ? ordered_json(d.capacity_csv->generic_string())
                                       : ordered_json(nullptr);
    e["history_json"] = d.history_json ? ordered_json(d.history_json->generic_string())
                                       : ordered_json(nullptr);
    ordered_json ing;
    auto opt = [](const std::optional<double>& v) {
      return v ? ordered_json(*v) : ordered_json(nullptr);
    };
    ing["nominal_capacity_ah"] = opt(d.ingest.nominal_capacity_ah);
    ing["cc_charge_current_a"] = opt(d.ingest.cc_charge_current_a);
    ing["upper_cutoff_v"] = opt(d.ingest.upper_cutoff_v);
    ing["lower_cutoff_v"] = opt(d.ingest.lower_cutoff_v);
    ing["current_tolerance_a"] = opt(d.ingest.current_tolerance_a);
    ing["voltage_tolerance_v"] = d.ingest.voltage_tolerance_v;
    ing["flip_current_sign"] = d.ingest.flip_current_sign;
    e["ingest"] = std::move(ing);
    datasets.push_back(std::move(e));
  }
  j["datasets"] = std::move(datasets);
  ordered_json synth = ordered_json::array();
  for (const auto& p : c.synthetic_cells) synth.push_back(synth_cell_to_json(p));
  j["synthetic_cells"] = std::move(synth);
  j["synthetic_sessions"] = c.synthetic_sessions
                                ? synth_fleet_to_json(*c.synthetic_sessions)
                                : ordered_json(nullptr);
  j["sessions_csv"] = c.sessions_csv ? ordered_json(c.sessions_csv->generic_string())
                                     : ordered_json(nullptr);
  j["engine"] = ordered_json{{"hidden_dim", c.engine.hidden_dim},
                             {"ridge", c.engine.ridge},
                             {"n_seeds", c.engine.n_seeds},
                             {"base_seed", c.engine.base_seed},
                             {"train_fraction", c.engine.train_fraction},
                             {"woa_population", c.engine.woa_population},
                             {"woa_iterations", c.engine.woa_iterations}};
  j["hi_ids"] = c.hi_ids;
  ordered_json ivs;
  for (const auto& [id, spec] : c.intervals) ivs[id] = interval_to_json(spec);
  j["intervals"] = std::move(ivs);
  ordered_json gs;
  gs["hi_ids"] = c.grid_search.hi_ids;
  ordered_json gsb;
  for (const auto& [id, spec] : c.grid_search.bounds) gsb[id] = interval_to_json(spec);
  gs["bounds"] = std::move(gsb);
  gs["n_points"] = c.grid_search.n_points;
  gs["refine"] = c.grid_search.refine;
  j["grid_search"] = std::move(gs);
  j["heatmap"] = ordered_json{{"hi_ids", c.heatmap.hi_ids},
                              {"step_pct", c.heatmap.step_pct},
                              {"range_lo", c.heatmap.range_lo},
                              {"range_hi", c.heatmap.range_hi}};
  ordered_json groups = ordered_json::array();
  for (const auto& g : c.screening.redundancy_groups)
    groups.push_back(ordered_json{{"members", g.members}, {"keeper", g.keeper}});
  j["screening"] = ordered_json{{"pcc_threshold", c.screening.pcc_threshold},
                                {"redundancy_groups", std::move(groups)},
                                {"probability_floor", c.screening.probability_floor},
                                {"rmse_ceiling_pp", c.screening.rmse_ceiling_pp}};
  ordered_json fus = ordered_json::array();
  for (const auto& f : c.fusions)
    fus.push_back(ordered_json{{"id", f.id}, {"constituents", f.constituents}});
  j["fusions"] = std::move(fus);
  return textio::dump_json(j);
}

} // namespace

PipelineConfig parse_config(const std::string& json_text, const ConfigOverrides& overrides) {
  ordered_json j = ordered_json::parse(json_text, nullptr, false);
  if (j.is_discarded()) raise(errc::format, "config is not valid JSON");
  check_keys(j,
             {"schema_version", "out_dir", "jobs", "datasets", "synthetic_cells",
              "synthetic_sessions", "engine", "hi_ids", "intervals", "grid_search",
              "heatmap", "screening", "sessions_csv", "fusions"},
             "config");

  PipelineConfig c;
  c.screening = ScreeningConfig::defaults();
  if (j.contains("schema_version")) {
    if (!j["schema_version"].is_number_integer() || j["schema_version"].get<int>() != 1)
      raise(errc::config, "unsupported config schema_version");
  }
  c.out_dir = get_str(j, "out_dir", c.out_dir.string());
  c.jobs = static_cast<std::size_t>(get_u64(j, "jobs", c.jobs));

  if (j.contains("datasets")) {
    if (!j["datasets"].is_array()) raise(errc::config, "datasets must be an array");
    std::size_t idx = 0;
    for (const auto& e : j["datasets"]) {
      const std::string ctx = "datasets[" + std::to_string(idx++) + "]";
      check_keys(e, {"cell_id", "cycles_csv", "capacity_csv", "history_json", "ingest"}, ctx);
      DatasetSpec d;
      d.cell_id = get_str(e, "cell_id", "");
      if (d.cell_id.empty()) raise(errc::config, ctx + " needs a cell_id");
      if (e.contains("cycles_csv")) d.cycles_csv = get_str(e, "cycles_csv", "");
      if (e.contains("capacity_csv")) d.capacity_csv = get_str(e, "capacity_csv", "");
      if (e.contains("history_json")) d.history_json = get_str(e, "history_json", "");
      if (d.cycles_csv.has_value() == d.history_json.has_value())
        raise(errc::config, ctx + " needs exactly one of cycles_csv / history_json");
      if (d.capacity_csv && !d.cycles_csv)
        raise(errc::config, ctx + ": capacity_csv needs cycles_csv");
      d.ingest.cell_id = d.cell_id;
      if (e.contains("ingest")) {
        const auto& ing = e["ingest"];
        check_keys(ing,
                   {"nominal_capacity_ah", "cc_charge_current_a", "upper_cutoff_v",
                    "lower_cutoff_v", "current_tolerance_a", "voltage_tolerance_v",
                    "flip_current_sign"},
                   ctx + ".ingest");
        auto opt = [&](const char* key) -> std::optional<double> {
          if (!ing.contains(key)) return std::nullopt;
          return get_num(ing, key, 0.0);
        };
        d.ingest.nominal_capacity_ah = opt("nominal_capacity_ah");
        d.ingest.cc_charge_current_a = opt("cc_charge_current_a");
        d.ingest.upper_cutoff_v = opt("upper_cutoff_v");
        d.ingest.lower_cutoff_v = opt("lower_cutoff_v");
        d.ingest.current_tolerance_a = opt("current_tolerance_a");
        d.ingest.voltage_tolerance_v =
            get_num(ing, "voltage_tolerance_v", d.ingest.voltage_tolerance_v);
        d.ingest.flip_current_sign = get_bool(ing, "flip_current_sign", false);
      }
      c.datasets.push_back(std::move(d));
    }
  }

  if (j.contains("synthetic_cells")) {
    if (!j["synthetic_cells"].is_array())
      raise(errc::config, "synthetic_cells must be an array");
    std::size_t idx = 0;
    for (const auto& e : j["synthetic_cells"])
      c.synthetic_cells.push_back(
          parse_synth_cell(e, "synthetic_cells[" + std::to_string(idx++) + "]"));
  }
  if (j.contains("synthetic_sessions") && !j["synthetic_sessions"].is_null())
    c.synthetic_sessions = parse_synth_fleet(j["synthetic_sessions"], "synthetic_sessions");
  if (j.contains("sessions_csv")) c.sessions_csv = get_str(j, "sessions_csv", "");

  if (j.contains("engine")) {
    const auto& e = j["engine"];
    check_keys(e,
               {"hidden_dim", "ridge", "n_seeds", "base_seed", "train_fraction",
                "woa_population", "woa_iterations"},
               "engine");
    c.engine.hidden_dim = static_cast<Eigen::Index>(get_u64(e, "hidden_dim", 20));
    c.engine.ridge = get_num(e, "ridge", c.engine.ridge);
    c.engine.n_seeds = static_cast<std::size_t>(get_u64(e, "n_seeds", c.engine.n_seeds));
    c.engine.base_seed = get_u64(e, "base_seed", c.engine.base_seed);
    c.engine.train_fraction = get_num(e, "train_fraction", c.engine.train_fraction);
    c.engine.woa_population =
        static_cast<std::size_t>(get_u64(e, "woa_population", c.engine.woa_population));
    c.engine.woa_iterations =
        static_cast<std::size_t>(get_u64(e, "woa_iterations", c.engine.woa_iterations));
  }

  c.hi_ids = get_str_list(j, "hi_ids");
  if (j.contains("intervals")) {
    for (const auto& [id, spec] : j["intervals"].items())
      c.intervals[id] = parse_interval(spec, "intervals." + id);
  }
  if (j.contains("grid_search")) {
    const auto& g = j["grid_search"];
    check_keys(g, {"hi_ids", "bounds", "n_points", "refine"}, "grid_search");
    c.grid_search.hi_ids = get_str_list(g, "hi_ids");
    if (g.contains("bounds"))
      for (const auto& [id, spec] : g["bounds"].items())
        c.grid_search.bounds[id] = parse_interval(spec, "grid_search.bounds." + id);
    c.grid_search.n_points =
        static_cast<std::size_t>(get_u64(g, "n_points", c.grid_search.n_points));
    c.grid_search.refine = get_bool(g, "refine", c.grid_search.refine);
  }
  if (j.contains("heatmap")) {
    const auto& h = j["heatmap"];
    check_keys(h, {"hi_ids", "step_pct", "range_lo", "range_hi"}, "heatmap");
    c.heatmap.hi_ids = get_str_list(h, "hi_ids");
    c.heatmap.step_pct = get_num(h, "step_pct", c.heatmap.step_pct);
    c.heatmap.range_lo = get_num(h, "range_lo", c.heatmap.range_lo);
    c.heatmap.range_hi = get_num(h, "range_hi", c.heatmap.range_hi);
  }
  if (j.contains("screening")) {
    const auto& s = j["screening"];
    check_keys(s,
               {"pcc_threshold", "redundancy_groups", "probability_floor", "rmse_ceiling_pp"},
               "screening");
    c.screening.pcc_threshold = get_num(s, "pcc_threshold", c.screening.pcc_threshold);
    c.screening.probability_floor =
        get_num(s, "probability_floor", c.screening.probability_floor);
    c.screening.rmse_ceiling_pp = get_num(s, "rmse_ceiling_pp", c.screening.rmse_ceiling_pp);
    if (s.contains("redundancy_groups")) {
      if (!s["redundancy_groups"].is_array())
        raise(errc::config, "screening.redundancy_groups must be an array");
      c.screening.redundancy_groups.clear();
      std::size_t idx = 0;
      for (const auto& e : s["redundancy_groups"]) {
        const std::string ctx = "screening.redundancy_groups[" + std::to_string(idx++) + "]";
        check_keys(e, {"members", "keeper"}, ctx);
        ScreeningConfig::Group g;
        g.members = get_str_list(e, "members");
        g.keeper = get_str(e, "keeper", "");
        if (g.members.empty() || g.keeper.empty())
          raise(errc::config, ctx + " needs members and keeper");
        c.screening.redundancy_groups.push_back(std::move(g));
      }
    }
  }
  if (j.contains("fusions")) {
    if (!j["fusions"].is_array()) raise(errc::config, "fusions must be an array");
    std::size_t idx = 0;
    for (const auto& e : j["fusions"]) {
      const std::string ctx = "fusions[" + std::to_string(idx++) + "]";
      check_keys(e, {"id", "constituents"}, ctx);
      FusionSpec f;
      f.id = get_str(e, "id", "");
      f.constituents = get_str_list(e, "constituents");
      if (f.id.empty() || f.constituents.size() < 2)
        raise(errc::config, ctx + " needs an id and >= 2 constituents");
      c.fusions.push_back(std::move(f));
    }
  }

  // Overrides: CLI beats environment beats file.
  if (overrides.read_env) {
    if (const char* v = std::getenv("BHM_OUT_DIR"); v && *v) c.out_dir = v;
    if (const char* v = std::getenv("BHM_JOBS"); v && *v) {
      const auto n = textio::parse_int(v);
      if (!n || *n < 1) raise(errc::config, "BHM_JOBS must be a positive integer");
      c.jobs = static_cast<std::size_t>(*n);
    }
  }
  if (overrides.out_dir) c.out_dir = *overrides.out_dir;
  if (overrides.jobs) c.jobs = *overrides.jobs;
  if (overrides.seed) c.engine.base_seed = *overrides.seed;
  if (c.jobs < 1) c.jobs = 1;

  // out_dir and jobs steer where and how fast, not what: they stay out of
  // the canonical form so results hash identically wherever they land.
  c.canonical_json = canonicalize(c);
  c.config_hash = textio::hash_hex(c.canonical_json);
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path,
                           const ConfigOverrides& overrides) {
  return parse_config(textio::read_text_file(path), overrides);
}

SynthCellParams synth_cell_params_from_json(const std::string& json_text) {
  ordered_json j = ordered_json::parse(json_text, nullptr, false);
  if (j.is_discarded()) raise(errc::format, "synthetic cell parameters are not valid JSON");
  return parse_synth_cell(j, "params");
}

SynthFleetParams synth_fleet_params_from_json(const std::string& json_text) {
  ordered_json j = ordered_json::parse(json_text, nullptr, false);
  if (j.is_discarded()) raise(errc::format, "session parameters are not valid JSON");
  return parse_synth_fleet(j, "params");
}

// ---------------------------------------------------------------------------
// Verbs
// ---------------------------------------------------------------------------

namespace {

struct RunContext {
  const PipelineConfig* cfg = nullptr;
  CommandResult* result = nullptr;
  std::vector<CellHistory> cells;
  std::vector<std::string> ingest_warnings;
  Registry registry = Registry::builtin();

  void fail(std::string msg) { result->failures.push_back(std::move(msg)); }

  void write(const std::string& rel, const std::string& content) {
    textio::write_text_file(cfg->out_dir / rel, content);
    result->outputs.push_back(rel);
  }
};

// Deterministic order-preserving parallel map: slot i gets fn(i)'s outcome
// regardless of scheduling; exceptions land in the slot's error string.
void parallel_for(std::size_t n, std::size_t jobs,
                  const std::function<void(std::size_t)>& fn,
                  std::vector<std::string>& errors) {
  errors.assign(n, std::string());
  auto work = [&](std::size_t i) {
    try {
      fn(i);
    } catch (const Error& e) {
      errors[i] = std::string(errc_name(e.code())) + ": " + e.what();
    } catch (const std::exception& e) {
      errors[i] = std::string("internal: ") + e.what();
    }
  };
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) work(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  const std::size_t n_threads = std::min(jobs, n);
  pool.reserve(n_threads);
  for (std::size_t t = 0; t < n_threads; ++t)
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) work(i);
    });
  for (auto& th : pool) th.join();
}

void load_cells(RunContext& ctx) {
  std::set<std::string> ids;
  for (const auto& d : ctx.cfg->datasets) {
    try {
      CellHistory h;
      if (d.history_json) {
        h = load_history(*d.history_json);
        h.cell_id = d.cell_id;
      } else {
        h = ingest_cycles_csv(*d.cycles_csv, d.capacity_csv, d.ingest,
                              &ctx.ingest_warnings);
      }
      if (!ids.insert(h.cell_id).second)
        raise(errc::config, "duplicate cell id " + h.cell_id);
      ctx.cells.push_back(std::move(h));
    } catch (const Error& e) {
      ctx.fail("dataset " + d.cell_id + ": " + errc_name(e.code()) + ": " + e.what());
    }
  }
  for (const auto& p : ctx.cfg->synthetic_cells) {
    try {
      CellHistory h = gen_cell(p);
      if (!ids.insert(h.cell_id).second)
        raise(errc::config, "duplicate cell id " + h.cell_id);
      ctx.cells.push_back(std::move(h));
    } catch (const Error& e) {
      ctx.fail("synthetic cell " + p.cell_id + ": " + errc_name(e.code()) + ": " +
               e.what());
    }
  }
}

void register_fusions(RunContext& ctx) {
  for (const auto& f : ctx.cfg->fusions) {
    try {
      ctx.registry.fuse(f.constituents, f.id);
    } catch (const Error& e) {
      ctx.fail("fusion " + f.id + ": " + errc_name(e.code()) + ": " + e.what());
    }
  }
}

std::vector<std::string> resolve_hi_ids(const RunContext& ctx, bool include_fusions) {
  if (!ctx.cfg->hi_ids.empty()) return ctx.cfg->hi_ids;
  std::vector<std::string> out;
  for (const auto& d : ctx.registry.all())
    if (include_fusions || d.category != HiCategory::fusion) out.push_back(d.id);
  return out;
}

std::optional<IntervalSpec> interval_override(const PipelineConfig& cfg,
                                              const std::string& id) {
  auto it = cfg.intervals.find(id);
  if (it == cfg.intervals.end()) return std::nullopt;
  return it->second;
}

std::string hash_comment(const RunContext& ctx) {
  return "# config_hash=" + ctx.cfg->config_hash + "\n# schema_version=1\n";
}

std::vector<DrivingSession> load_sessions(RunContext& ctx, std::size_t* quarantined) {
  if (ctx.cfg->sessions_csv) {
    SessionIngest ing = ingest_sessions(*ctx.cfg->sessions_csv);
    if (quarantined) *quarantined = ing.quarantined.size();
    return std::move(ing.sessions);
  }
  if (ctx.cfg->synthetic_sessions) {
    if (quarantined) *quarantined = 0;
    return gen_sessions(*ctx.cfg->synthetic_sessions);
  }
  raise(errc::config, "no session source: set sessions_csv or synthetic_sessions");
}

// ---- generate --------------------------------------------------------------

void verb_generate(RunContext& ctx) {
  for (const auto& p : ctx.cfg->synthetic_cells) {
    try {
      const CellHistory h = gen_cell(p);
      const std::string cyc = p.cell_id + "_cycles.csv";
      const std::string cap = p.cell_id + "_capacity.csv";
      write_cycles_csv(h, ctx.cfg->out_dir / cyc, ctx.cfg->out_dir / cap);
      // Stamp the config fingerprint; '#' lines are comments to the reader.
      for (const std::string& rel : {cyc, cap}) {
        const std::string raw = textio::read_text_file(ctx.cfg->out_dir / rel);
        textio::write_text_file(ctx.cfg->out_dir / rel, hash_comment(ctx) + raw);
        ctx.result->outputs.push_back(rel);
      }
      const std::string hist = p.cell_id + "_history.json";
      save_history(h, ctx.cfg->out_dir / hist);
      ctx.result->outputs.push_back(hist);
    } catch (const Error& e) {
      ctx.fail("generate " + p.cell_id + ": " + errc_name(e.code()) + ": " + e.what());
    }
  }
  if (ctx.cfg->synthetic_sessions) {
    try {
      const auto sessions = gen_sessions(*ctx.cfg->synthetic_sessions);
      std::string csv = hash_comment(ctx) + "start_soc,end_soc,category\n";
      for (const auto& s : sessions) {
        csv += textio::format_double(s.start_soc) + "," +
               textio::format_double(s.end_soc) + "," +
               (s.category == SessionCategory::charging ? "30" : "10") + "\n";
      }
      ctx.write("sessions.csv", csv);
    } catch (const Error& e) {
      ctx.fail(std::string("generate sessions: ") + errc_name(e.code()) + ": " + e.what());
    }
  }
  if (ctx.cfg->synthetic_cells.empty() && !ctx.cfg->synthetic_sessions)
    ctx.fail("generate: nothing configured (synthetic_cells / synthetic_sessions)");
}

// ---- extract ---------------------------------------------------------------

struct ResolvedHi {
  const HIDescriptor* desc = nullptr;
  std::optional<IntervalSpec> interval;
};

std::vector<ResolvedHi> resolve_for_extraction(RunContext& ctx,
                                               const std::vector<std::string>& ids,
                                               const char* stage) {
  std::vector<ResolvedHi> out;
  for (const auto& id : ids) {
    try {
      ResolvedHi r;
      r.desc = &ctx.registry.get(id);
      r.interval = interval_override(*ctx.cfg, id);
      if (r.interval && !r.desc->partial)
        raise(errc::argument, "full-curve HI takes no interval override");
      out.push_back(r);
    } catch (const Error& e) {
      ctx.fail(std::string(stage) + " " + id + ": " + errc_name(e.code()) + ": " + e.what());
    }
  }
  return out;
}

void verb_extract(RunContext& ctx) {
  const auto ids = resolve_hi_ids(ctx, true);
  const auto his = resolve_for_extraction(ctx, ids, "extract");
  if (ctx.cells.empty()) {
    ctx.fail("extract: no usable cells");
    return;
  }
  ordered_json summary;
  summary["schema_version"] = 1;
  summary["config_hash"] = ctx.cfg->config_hash;
  ordered_json per_cell;

  for (const auto& cell : ctx.cells) {
    // One feature series per HI; a failed HI yields an all-missing column.
    std::vector<FeatureSeries> series(his.size());
    std::vector<std::string> errors;
    parallel_for(
        his.size(), ctx.cfg->jobs,
        [&](std::size_t k) {
          series[k] = ctx.registry.extract(cell, *his[k].desc, his[k].interval);
        },
        errors);
    ordered_json cell_summary;
    std::string csv = hash_comment(ctx);
    csv += "cycle_index";
    for (std::size_t k = 0; k < his.size(); ++k) {
      const auto& d = *his[k].desc;
      if (errors[k].empty() && series[k].width > 1)
        for (std::size_t w = 0; w < series[k].width; ++w)
          csv += "," + d.id + "_" + std::to_string(w);
      else
        csv += "," + d.id;
    }
    csv += ",soh_pct\n";
    for (std::size_t i = 0; i < cell.cycles.size(); ++i) {
      csv += std::to_string(cell.cycles[i].index);
      for (std::size_t k = 0; k < his.size(); ++k) {
        const std::size_t w = errors[k].empty() ? series[k].width : 1;
        if (!errors[k].empty() || !series[k].per_cycle[i]) {
          for (std::size_t c = 0; c < w; ++c) csv += ",";
        } else {
          for (std::size_t c = 0; c < w; ++c)
            csv += "," + textio::format_double((*series[k].per_cycle[i])[c]);
        }
      }
      csv += "," + textio::format_double(cell.cycles[i].soh_pct) + "\n";
    }
    const std::string rel = "features_" + cell.cell_id + ".csv";
    ctx.write(rel, csv);
    for (std::size_t k = 0; k < his.size(); ++k) {
      if (!errors[k].empty()) {
        ctx.fail("extract " + cell.cell_id + "/" + his[k].desc->id + ": " + errors[k]);
        cell_summary[his[k].desc->id] =
            ordered_json{{"missing", cell.cycles.size()}, {"of", cell.cycles.size()}};
      } else {
        cell_summary[his[k].desc->id] =
            ordered_json{{"missing", series[k].missing_count()}, {"of", cell.cycles.size()}};
      }
    }
    per_cell[cell.cell_id] = std::move(cell_summary);
  }
  if (!ctx.ingest_warnings.empty()) summary["ingest_warnings"] = ctx.ingest_warnings;
  summary["cells"] = std::move(per_cell);
  ctx.write("extract_summary.json", textio::dump_json(summary));
}

// ---- evaluate --------------------------------------------------------------

std::vector<EvaluationRecord> evaluate_all(RunContext& ctx,
                                           const std::vector<std::string>& ids) {
  const auto his = resolve_for_extraction(ctx, ids, "evaluate");
  std::vector<std::optional<EvaluationRecord>> records(his.size());
  std::vector<std::string> errors;
  parallel_for(
      his.size(), ctx.cfg->jobs,
      [&](std::size_t k) {
        records[k] = evaluate_hi(ctx.cells, ctx.registry, *his[k].desc, his[k].interval,
                                 ctx.cfg->engine);
      },
      errors);
  std::vector<EvaluationRecord> out;
  for (std::size_t k = 0; k < his.size(); ++k) {
    if (!errors[k].empty())
      ctx.fail("evaluate " + his[k].desc->id + ": " + errors[k]);
    else if (records[k])
      out.push_back(std::move(*records[k]));
  }
  return out;
}

ordered_json record_to_json(const EvaluationRecord& r) {
  ordered_json j;
  j["hi_id"] = r.hi_id;
  j["mean_abs_pcc"] = r.mean_abs_pcc ? ordered_json(*r.mean_abs_pcc) : ordered_json(nullptr);
  j["rmse_elm"] = r.rmse_elm;
  j["rmse_woa_elm"] = r.rmse_woa_elm;
  j["interval"] = r.interval ? interval_to_json(*r.interval) : ordered_json(nullptr);
  j["per_cell_pcc"] = r.per_cell_pcc;
  j["n_cycles_used"] = r.n_cycles_used;
  j["degenerate_cells"] = r.degenerate_cells;
  j["partial"] = r.partial;
  return j;
}

void sort_records(std::vector<EvaluationRecord>& records, const Registry& registry) {
  auto rank = [&](const EvaluationRecord& r) {
    return static_cast<int>(registry.get(r.hi_id).category);
  };
  std::stable_sort(records.begin(), records.end(),
                   [&](const EvaluationRecord& a, const EvaluationRecord& b) {
                     const int ra = rank(a), rb = rank(b);
                     if (ra != rb) return ra < rb;
                     const double pa = a.mean_abs_pcc.value_or(-1.0);
                     const double pb = b.mean_abs_pcc.value_or(-1.0);
                     if (pa != pb) return pa > pb;
                     return a.hi_id < b.hi_id;
                   });
}

void write_evaluation_outputs(RunContext& ctx, std::vector<EvaluationRecord> records) {
  sort_records(records, ctx.registry);
  std::string csv = hash_comment(ctx);
  csv += "hi_id,category,scenario,partial,mean_abs_pcc,rmse_elm,rmse_woa_elm,"
         "interval_reference,interval_lower,interval_upper,degenerate_cells\n";
  for (const auto& r : records) {
    const HIDescriptor& d = ctx.registry.get(r.hi_id);
    csv += r.hi_id;
    csv += std::string(",") + hi_category_name(d.category);
    csv += std::string(",") + scenario_name(d.scenario);
    csv += r.partial ? ",true" : ",false";
    csv += "," + (r.mean_abs_pcc ? textio::format_double(*r.mean_abs_pcc) : std::string());
    csv += "," + textio::format_double(r.rmse_elm);
    csv += "," + textio::format_double(r.rmse_woa_elm);
    if (r.interval) {
      csv += std::string(",") + interval_ref_name(r.interval->reference);
      csv += "," + textio::format_double(r.interval->lower);
      csv += "," + textio::format_double(r.interval->upper);
    } else {
      csv += ",,,";
    }
    csv += "," + std::to_string(r.degenerate_cells) + "\n";
  }
  ctx.write("evaluation.csv", csv);

  ordered_json j;
  j["schema_version"] = 1;
  j["config_hash"] = ctx.cfg->config_hash;
  ordered_json recs = ordered_json::array();
  for (const auto& r : records) recs.push_back(record_to_json(r));
  j["records"] = std::move(recs);
  // Per-category spread of the correlation scores.
  ordered_json boxes;
  for (int cat = 0; cat <= static_cast<int>(HiCategory::fusion); ++cat) {
    std::vector<double> vals;
    for (const auto& r : records)
      if (static_cast<int>(ctx.registry.get(r.hi_id).category) == cat && r.mean_abs_pcc)
        vals.push_back(*r.mean_abs_pcc);
    if (vals.empty()) continue;
    const BoxStats b = box_stats(vals);
    boxes[hi_category_name(static_cast<HiCategory>(cat))] =
        ordered_json{{"min", b.min},       {"q1", b.q1},
                     {"median", b.median}, {"q3", b.q3},
                     {"max", b.max},       {"mean", b.mean},
                     {"whisker_lo", b.whisker_lo}, {"whisker_hi", b.whisker_hi},
                     {"outliers", b.outliers}};
  }
  j["category_box"] = std::move(boxes);
  if (!ctx.ingest_warnings.empty()) j["ingest_warnings"] = ctx.ingest_warnings;
  ctx.write("evaluation.json", textio::dump_json(j));
}

void verb_evaluate(RunContext& ctx) {
  if (ctx.cells.empty()) {
    ctx.fail("evaluate: no usable cells");
    return;
  }
  write_evaluation_outputs(ctx, evaluate_all(ctx, resolve_hi_ids(ctx, false)));
}

// ---- optimize-intervals -----------------------------------------------------

IntervalSpec default_search_bounds(const RunContext& ctx, const HIDescriptor& d) {
  if (!d.reference) raise(errc::argument, d.id + " has no interval reference");
  IntervalSpec s;
  s.reference = *d.reference;
  switch (*d.reference) {
    case IntervalRef::soc_pct:
      s.lower = 0.0;
      s.upper = 100.0;
      return s;
    case IntervalRef::voltage_v: {
      double lo = 1e300, hi = -1e300;
      for (const auto& c : ctx.cells) {
        lo = std::min(lo, c.lower_cutoff_v);
        hi = std::max(hi, c.upper_cutoff_v);
      }
      s.lower = lo;
      s.upper = hi;
      return s;
    }
    case IntervalRef::time_s:
    case IntervalRef::current_a:
    case IntervalRef::temperature_c: {
      // Span of the reference channel over the HI's scoped samples.
      double lo = 1e300, hi = -1e300;
      for (const auto& c : ctx.cells)
        for (const auto& cyc : c.cycles)
          for (const auto& seg : cyc.phases) {
            // Time is phase-relative, matching extraction semantics.
            for (std::size_t i = seg.first; i <= seg.last; ++i) {
              double v = 0.0;
              switch (*d.reference) {
                case IntervalRef::time_s:
                  v = cyc.series.time_s[i] - cyc.series.time_s[seg.first];
                  break;
                case IntervalRef::current_a: v = std::abs(cyc.series.current_a[i]); break;
                default: v = cyc.series.temperature_c[i]; break;
              }
              lo = std::min(lo, v);
              hi = std::max(hi, v);
            }
          }
      if (!(lo < hi)) raise(errc::search, d.id + ": no data span for search bounds");
      s.lower = lo;
      s.upper = hi;
      return s;
    }
  }
  raise(errc::internal, "unreachable");
}

void verb_optimize_intervals(RunContext& ctx) {
  if (ctx.cells.empty()) {
    ctx.fail("optimize-intervals: no usable cells");
    return;
  }
  const auto& ids = ctx.cfg->grid_search.hi_ids;
  if (ids.empty()) {
    ctx.fail("optimize-intervals: grid_search.hi_ids is empty");
    return;
  }
  struct Entry {
    std::string id;
    GridSearchResult res;
  };
  std::vector<std::optional<Entry>> entries(ids.size());
  std::vector<std::string> errors;
  parallel_for(
      ids.size(), ctx.cfg->jobs,
      [&](std::size_t k) {
        const HIDescriptor& d = ctx.registry.get(ids[k]);
        IntervalSpec bounds;
        auto it = ctx.cfg->grid_search.bounds.find(ids[k]);
        bounds = it != ctx.cfg->grid_search.bounds.end() ? it->second
                                                         : default_search_bounds(ctx, d);
        entries[k] = Entry{ids[k], grid_search_interval(ctx.cells, ctx.registry, d, bounds,
                                                        ctx.cfg->grid_search.n_points,
                                                        ctx.cfg->grid_search.refine)};
      },
      errors);

  std::string csv = hash_comment(ctx);
  csv += "hi_id,reference,lower,upper,mean_abs_pcc,refined,candidates\n";
  ordered_json j;
  j["schema_version"] = 1;
  j["config_hash"] = ctx.cfg->config_hash;
  ordered_json results;
  for (std::size_t k = 0; k < ids.size(); ++k) {
    if (!errors[k].empty()) {
      ctx.fail("optimize-intervals " + ids[k] + ": " + errors[k]);
      continue;
    }
    const auto& e = *entries[k];
    csv += e.id;
    csv += std::string(",") + interval_ref_name(e.res.best.reference);
    csv += "," + textio::format_double(e.res.best.lower);
    csv += "," + textio::format_double(e.res.best.upper);
    csv += "," + textio::format_double(e.res.best_mean_abs_pcc);
    csv += e.res.refined ? ",true" : ",false";
    csv += "," + std::to_string(e.res.candidates.size()) + "\n";
    ordered_json cands = ordered_json::array();
    for (const auto& cand : e.res.candidates) {
      ordered_json cj = interval_to_json(cand.interval);
      cj["mean_abs_pcc"] =
          cand.mean_abs_pcc ? ordered_json(*cand.mean_abs_pcc) : ordered_json(nullptr);
      cands.push_back(std::move(cj));
    }
    results[e.id] = ordered_json{{"best", interval_to_json(e.res.best)},
                                 {"mean_abs_pcc", e.res.best_mean_abs_pcc},
                                 {"refined", e.res.refined},
                                 {"candidates", std::move(cands)}};
  }
  ctx.write("intervals.csv", csv);
  j["results"] = std::move(results);
  ctx.write("intervals.json", textio::dump_json(j));
}

// ---- heatmap ---------------------------------------------------------------

void verb_heatmap(RunContext& ctx) {
  if (ctx.cells.empty()) {
    ctx.fail("heatmap: no usable cells");
    return;
  }
  const auto& ids = ctx.cfg->heatmap.hi_ids;
  if (ids.empty()) {
    ctx.fail("heatmap: heatmap.hi_ids is empty");
    return;
  }
  for (const auto& id : ids) {
    try {
      const HIDescriptor& d = ctx.registry.get(id);
      const HeatmapTable t = soc_heatmap(ctx.cells, ctx.registry, d, ctx.cfg->heatmap.step_pct,
                                         ctx.cfg->heatmap.range_lo, ctx.cfg->heatmap.range_hi);
      std::string csv = hash_comment(ctx);
      csv += "start_soc";
      for (double bp : t.breakpoints) csv += "," + textio::format_double(bp);
      csv += "\n";
      for (std::size_t i = 0; i < t.breakpoints.size(); ++i) {
        csv += textio::format_double(t.breakpoints[i]);
        for (std::size_t j2 = 0; j2 < t.breakpoints.size(); ++j2) {
          csv += ",";
          if (j2 <= i) continue;
          const auto& e = t.at(i, j2);
          if (e.status == HeatCell::ok)
            csv += textio::format_double(e.abs_pcc);
          else if (e.status == HeatCell::degenerate)
            csv += "degenerate";
        }
        csv += "\n";
      }
      ctx.write("heatmap_" + id + ".csv", csv);
    } catch (const Error& e) {
      ctx.fail("heatmap " + id + ": " + errc_name(e.code()) + ": " + e.what());
    }
  }
}

// ---- probability -----------------------------------------------------------

ordered_json probability_payload(RunContext& ctx, std::map<std::string, double>* out_probs) {
  std::size_t quarantined = 0;
  const auto sessions = load_sessions(ctx, &quarantined);
  std::size_t n_drive = 0, n_charge = 0;
  for (const auto& s : sessions)
    (s.category == SessionCategory::driving ? n_drive : n_charge) += 1;

  ordered_json j;
  j["sessions"] = ordered_json{{"total", sessions.size()},
                               {"driving", n_drive},
                               {"charging", n_charge},
                               {"quarantined", quarantined}};
  const UsageHistogram hist = soc_usage_histogram(sessions);
  j["histogram"] = ordered_json{{"driving", hist.driving},
                                {"charging", hist.charging},
                                {"driving_total", hist.driving_total},
                                {"charging_total", hist.charging_total}};

  ordered_json per_hi;
  for (const auto& d : ctx.registry.all()) {
    if (d.category != HiCategory::soc_based) continue;
    try {
      const SocRequirement req = requirement_for(d);
      const ProbabilityResult pr = acquisition_probability(sessions, req);
      per_hi[d.id] = ordered_json{
          {"numerator", pr.numerator},
          {"denominator", pr.denominator},
          {"probability", pr.probability},
          {"window", interval_to_json(*d.default_interval)},
          {"rule", d.acquisition.kind == AcquisitionRule::Kind::full_interval
                       ? ordered_json{{"kind", "full_interval"}}
                       : ordered_json{{"kind", "any_subwindow"},
                                      {"width_pct", d.acquisition.width_pct}}},
          {"scenario", req.scenario == SocScenario::charge ? "charge" : "discharge"}};
      if (out_probs) (*out_probs)[d.id] = pr.probability;
    } catch (const Error& e) {
      ctx.fail("probability " + d.id + ": " + errc_name(e.code()) + ": " + e.what());
    }
  }
  j["per_hi"] = std::move(per_hi);

  ordered_json fus;
  for (const auto& f : ctx.cfg->fusions) {
    try {
      const HIDescriptor& d = ctx.registry.get(f.id);
      std::vector<SocRequirement> reqs;
      for (const auto& cid : d.constituents)
        reqs.push_back(requirement_for(ctx.registry.get(cid)));
      const FusionProbability fp = fusion_probability(sessions, reqs);
      ordered_json per_scenario;
      for (const auto& [sc, pr] : fp.per_scenario)
        per_scenario[sc == SocScenario::charge ? "charge" : "discharge"] =
            ordered_json{{"numerator", pr.numerator},
                         {"denominator", pr.denominator},
                         {"probability", pr.probability}};
      fus[f.id] = ordered_json{{"probability", fp.probability},
                               {"per_scenario", std::move(per_scenario)}};
    } catch (const Error& e) {
      ctx.fail("probability fusion " + f.id + ": " + errc_name(e.code()) + ": " + e.what());
    }
  }
  j["fusions"] = std::move(fus);
  j["assumptions"] =
      "denominators are per-category session counts; scenarios combine by "
      "independence; windows are the catalog defaults";
  return j;
}

void verb_probability(RunContext& ctx) {
  try {
    ordered_json payload = probability_payload(ctx, nullptr);
    ordered_json j;
    j["schema_version"] = 1;
    j["config_hash"] = ctx.cfg->config_hash;
    for (auto& [k, v] : payload.items()) j[k] = std::move(v);
    ctx.write("probability.json", textio::dump_json(j));
  } catch (const Error& e) {
    ctx.fail(std::string("probability: ") + errc_name(e.code()) + ": " + e.what());
  }
}

// ---- screen ----------------------------------------------------------------

void verb_screen(RunContext& ctx, std::vector<EvaluationRecord>* records_out,
                 ScreeningReport* report_out) {
  if (ctx.cells.empty()) {
    ctx.fail("screen: no usable cells");
    return;
  }
  std::map<std::string, double> probs;
  try {
    const auto sessions = load_sessions(ctx, nullptr);
    for (const auto& d : ctx.registry.all()) {
      if (d.category != HiCategory::soc_based) continue;
      try {
        probs[d.id] = acquisition_probability(sessions, requirement_for(d)).probability;
      } catch (const Error&) {
        // leave the id out; screening treats it as unknown probability
      }
    }
  } catch (const Error& e) {
    ctx.fail(std::string("screen: ") + errc_name(e.code()) + ": " + e.what());
    return;
  }

  auto records = evaluate_all(ctx, resolve_hi_ids(ctx, false));
  if (records.empty()) {
    ctx.fail("screen: no HI could be evaluated");
    return;
  }
  const ScreeningReport report = screen(records, ctx.registry, probs, ctx.cfg->screening);

  ordered_json j = ordered_json::parse(report.to_json());
  ordered_json out;
  out["schema_version"] = 1;
  out["config_hash"] = ctx.cfg->config_hash;
  for (auto& [k, v] : j.items())
    if (k != "schema_version") out[k] = std::move(v);
  ordered_json pj;
  for (const auto& [id, p] : probs) pj[id] = p;
  out["probabilities"] = std::move(pj);
  ctx.write("screening.json", textio::dump_json(out));
  if (records_out) *records_out = std::move(records);
  if (report_out) *report_out = report;
}

// ---- fuse ------------------------------------------------------------------

void verb_fuse(RunContext& ctx) {
  if (ctx.cfg->fusions.empty()) {
    ctx.fail("fuse: no fusions configured");
    return;
  }
  if (ctx.cells.empty()) {
    ctx.fail("fuse: no usable cells");
    return;
  }
  std::vector<DrivingSession> sessions;
  bool have_sessions = false;
  try {
    sessions = load_sessions(ctx, nullptr);
    have_sessions = true;
  } catch (const Error&) {
    // probability column stays empty
  }

  std::string csv = hash_comment(ctx);
  csv += "hi_id,scenario,constituents,rmse_elm,rmse_woa_elm,probability\n";
  ordered_json j;
  j["schema_version"] = 1;
  j["config_hash"] = ctx.cfg->config_hash;
  ordered_json entries;
  for (const auto& f : ctx.cfg->fusions) {
    try {
      const HIDescriptor& d = ctx.registry.get(f.id);
      const EvaluationRecord rec =
          evaluate_hi(ctx.cells, ctx.registry, d, std::nullopt, ctx.cfg->engine);
      std::optional<FusionProbability> fp;
      if (have_sessions) {
        std::vector<SocRequirement> reqs;
        for (const auto& cid : d.constituents)
          reqs.push_back(requirement_for(ctx.registry.get(cid)));
        fp = fusion_probability(sessions, reqs);
      }
      csv += f.id;
      csv += std::string(",") + scenario_name(d.scenario);
      std::string parts;
      for (const auto& cid : d.constituents) parts += (parts.empty() ? "" : "+") + cid;
      csv += "," + parts;
      csv += "," + textio::format_double(rec.rmse_elm);
      csv += "," + textio::format_double(rec.rmse_woa_elm);
      csv += "," + (fp ? textio::format_double(fp->probability) : std::string()) + "\n";
      ordered_json e = record_to_json(rec);
      e["scenario"] = scenario_name(d.scenario);
      e["constituents"] = d.constituents;
      e["probability"] = fp ? ordered_json(fp->probability) : ordered_json(nullptr);
      entries[f.id] = std::move(e);
    } catch (const Error& e) {
      ctx.fail("fuse " + f.id + ": " + errc_name(e.code()) + ": " + e.what());
    }
  }
  ctx.write("fusion.csv", csv);
  j["fusions"] = std::move(entries);
  ctx.write("fusion.json", textio::dump_json(j));
}

// ---- report ----------------------------------------------------------------

void verb_report(RunContext& ctx) {
  std::vector<EvaluationRecord> records;
  ScreeningReport report;
  verb_screen(ctx, &records, &report);
  if (!records.empty()) write_evaluation_outputs(ctx, std::move(records));
  verb_probability(ctx);
  if (!ctx.cfg->fusions.empty()) verb_fuse(ctx);

  ordered_json j;
  j["schema_version"] = 1;
  j["config_hash"] = ctx.cfg->config_hash;
  j["artifacts"] = ctx.result->outputs;
  j["final_ids"] = report.final_ids;
  ordered_json fus = ordered_json::array();
  for (const auto& f : ctx.cfg->fusions) fus.push_back(f.id);
  j["fusion_ids"] = std::move(fus);
  j["failures"] = ctx.result->failures;
  ctx.write("summary.json", textio::dump_json(j));
}

} // namespace

CommandResult run_command(const std::string& verb, const PipelineConfig& config) {
  CommandResult result;
  RunContext ctx;
  ctx.cfg = &config;
  ctx.result = &result;

  const std::set<std::string> known = {"generate",  "extract", "evaluate",
                                       "optimize-intervals", "heatmap", "screen",
                                       "probability", "fuse", "report"};
  if (!known.count(verb)) raise(errc::argument, "unknown verb " + verb);

  register_fusions(ctx);
  if (verb != "generate" && verb != "probability") load_cells(ctx);

  if (verb == "generate")
    verb_generate(ctx);
  else if (verb == "extract")
    verb_extract(ctx);
  else if (verb == "evaluate")
    verb_evaluate(ctx);
  else if (verb == "optimize-intervals")
    verb_optimize_intervals(ctx);
  else if (verb == "heatmap")
    verb_heatmap(ctx);
  else if (verb == "screen")
    verb_screen(ctx, nullptr, nullptr);
  else if (verb == "probability")
    verb_probability(ctx);
  else if (verb == "fuse")
    verb_fuse(ctx);
  else
    verb_report(ctx);

  result.exit_code = result.failures.empty() ? 0 : 1;
  return result;
}

} // namespace bhm
