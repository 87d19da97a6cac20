// SPDX-License-Identifier: Apache-2.0
// C binding. Every entry point traps exceptions at the boundary and maps
// bhm::errc onto the mirrored bhm_status values.
#include "bhm/bhm.h"

#include <cstdlib>
#include <cstring>
#include <string>

#include <json.hpp>

#include "bhm/battery_data.hpp"
#include "bhm/error.hpp"
#include "bhm/fleet.hpp"
#include "bhm/pipeline.hpp"
#include "bhm/registry.hpp"
#include "bhm/regression.hpp"
#include "bhm/synth.hpp"
#include "textio.hpp"

using nlohmann::ordered_json;

struct bhm_history {
  bhm::CellHistory h;
};
struct bhm_registry {
  bhm::Registry r = bhm::Registry::builtin();
};
struct bhm_sessions {
  bhm::SessionIngest s;
};
struct bhm_model {
  bhm::ElmModel m;
};

namespace {

thread_local std::string t_last_error;

bhm_status from_errc(bhm::errc c) {
  return static_cast<bhm_status>(static_cast<int>(c) + 1);
}

template <typename F>
bhm_status guard(F&& fn) {
  try {
    fn();
    return BHM_OK;
  } catch (const bhm::Error& e) {
    t_last_error = e.what();
    return from_errc(e.code());
  } catch (const std::exception& e) {
    t_last_error = e.what();
    return BHM_E_INTERNAL;
  } catch (...) {
    t_last_error = "unknown failure";
    return BHM_E_INTERNAL;
  }
}

bhm_status fail_argument(const char* msg) {
  t_last_error = msg;
  return BHM_E_ARGUMENT;
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

ordered_json parse_json_arg(const char* text, const char* what) {
  ordered_json j = ordered_json::parse(text, nullptr, false);
  if (j.is_discarded()) bhm::raise(bhm::errc::format, std::string(what) + " is not valid JSON");
  return j;
}

bhm::IngestOptions parse_ingest_options(const char* options_json) {
  bhm::IngestOptions opt;
  if (!options_json || !*options_json) return opt;
  const ordered_json j = parse_json_arg(options_json, "options_json");
  if (!j.is_object()) bhm::raise(bhm::errc::format, "options_json must be an object");
  for (const auto& [key, value] : j.items()) {
    if (key == "cell_id") {
      opt.cell_id = value.get<std::string>();
    } else if (key == "nominal_capacity_ah") {
      opt.nominal_capacity_ah = value.get<double>();
    } else if (key == "cc_charge_current_a") {
      opt.cc_charge_current_a = value.get<double>();
    } else if (key == "upper_cutoff_v") {
      opt.upper_cutoff_v = value.get<double>();
    } else if (key == "lower_cutoff_v") {
      opt.lower_cutoff_v = value.get<double>();
    } else if (key == "current_tolerance_a") {
      opt.current_tolerance_a = value.get<double>();
    } else if (key == "voltage_tolerance_v") {
      opt.voltage_tolerance_v = value.get<double>();
    } else if (key == "flip_current_sign") {
      opt.flip_current_sign = value.get<bool>();
    } else {
      bhm::raise(bhm::errc::argument, "unknown ingest option " + key);
    }
  }
  return opt;
}

std::optional<bhm::IntervalSpec> parse_interval_arg(const char* interval_json) {
  if (!interval_json || !*interval_json) return std::nullopt;
  const ordered_json j = parse_json_arg(interval_json, "interval_json");
  if (j.is_null()) return std::nullopt;
  if (!j.is_object() || !j.contains("reference") || !j.contains("lower") ||
      !j.contains("upper"))
    bhm::raise(bhm::errc::format, "interval_json needs reference, lower and upper");
  const auto ref = bhm::interval_ref_from_name(j["reference"].get<std::string>());
  if (!ref) bhm::raise(bhm::errc::argument, "unknown interval reference");
  bhm::IntervalSpec s;
  s.reference = *ref;
  s.lower = j["lower"].get<double>();
  s.upper = j["upper"].get<double>();
  return s;
}

bhm::SocRequirement parse_requirement(const ordered_json& j) {
  if (!j.is_object() || !j.contains("scenario") || !j.contains("lo") || !j.contains("hi") ||
      !j.contains("rule"))
    bhm::raise(bhm::errc::format, "requirement needs scenario, lo, hi and rule");
  bhm::SocRequirement req;
  const std::string scenario = j["scenario"].get<std::string>();
  if (scenario == "charge")
    req.scenario = bhm::SocScenario::charge;
  else if (scenario == "discharge")
    req.scenario = bhm::SocScenario::discharge;
  else
    bhm::raise(bhm::errc::argument, "scenario must be charge or discharge");
  req.lo = j["lo"].get<double>();
  req.hi = j["hi"].get<double>();
  const auto& rule = j["rule"];
  if (rule.is_string() && rule.get<std::string>() == "full_interval") {
    req.rule.kind = bhm::AcquisitionRule::Kind::full_interval;
  } else if (rule.is_object() && rule.contains("any_subwindow")) {
    req.rule.kind = bhm::AcquisitionRule::Kind::any_subwindow;
    req.rule.width_pct = rule["any_subwindow"].get<double>();
  } else {
    bhm::raise(bhm::errc::format,
               "rule must be \"full_interval\" or {\"any_subwindow\": width}");
  }
  return req;
}

ordered_json probability_to_json(const bhm::ProbabilityResult& pr) {
  return ordered_json{{"numerator", pr.numerator},
                      {"denominator", pr.denominator},
                      {"probability", pr.probability}};
}

} // namespace

extern "C" {

const char* bhm_version(void) { return "1.0.0"; }

const char* bhm_last_error(void) { return t_last_error.c_str(); }

void bhm_string_free(char* s) { std::free(s); }

/* ---- cell histories ---------------------------------------------------- */

bhm_status bhm_history_load_csv(const char* cycles_csv_path, const char* capacity_csv_path,
                                const char* options_json, bhm_history** out) {
  if (!cycles_csv_path || !out) return fail_argument("cycles_csv_path and out are required");
  return guard([&] {
    const bhm::IngestOptions opt = parse_ingest_options(options_json);
    std::optional<std::filesystem::path> capacity;
    if (capacity_csv_path && *capacity_csv_path) capacity = capacity_csv_path;
    auto* h = new bhm_history{bhm::ingest_cycles_csv(cycles_csv_path, capacity, opt, nullptr)};
    *out = h;
  });
}

bhm_status bhm_history_load_json(const char* path, bhm_history** out) {
  if (!path || !out) return fail_argument("path and out are required");
  return guard([&] { *out = new bhm_history{bhm::load_history(path)}; });
}

bhm_status bhm_history_from_json(const char* json_text, bhm_history** out) {
  if (!json_text || !out) return fail_argument("json_text and out are required");
  return guard([&] { *out = new bhm_history{bhm::history_from_json(json_text)}; });
}

bhm_status bhm_history_synthesize(const char* params_json, bhm_history** out) {
  if (!params_json || !out) return fail_argument("params_json and out are required");
  return guard([&] {
    *out = new bhm_history{bhm::gen_cell(bhm::synth_cell_params_from_json(params_json))};
  });
}

bhm_status bhm_history_to_json(const bhm_history* h, char** out_json) {
  if (!h || !out_json) return fail_argument("h and out_json are required");
  return guard([&] { *out_json = dup_string(bhm::to_json(h->h)); });
}

bhm_status bhm_history_save(const bhm_history* h, const char* path) {
  if (!h || !path) return fail_argument("h and path are required");
  return guard([&] { bhm::save_history(h->h, path); });
}

bhm_status bhm_history_save_csv(const bhm_history* h, const char* cycles_csv_path,
                                const char* capacity_csv_path) {
  if (!h || !cycles_csv_path) return fail_argument("h and cycles_csv_path are required");
  return guard([&] {
    std::optional<std::filesystem::path> capacity;
    if (capacity_csv_path && *capacity_csv_path) capacity = capacity_csv_path;
    bhm::write_cycles_csv(h->h, cycles_csv_path, capacity);
  });
}

bhm_status bhm_history_cycle_count(const bhm_history* h, size_t* out) {
  if (!h || !out) return fail_argument("h and out are required");
  *out = h->h.cycles.size();
  return BHM_OK;
}

void bhm_history_free(bhm_history* h) { delete h; }

/* ---- health-indicator registry ------------------------------------------ */

bhm_status bhm_registry_create(bhm_registry** out) {
  if (!out) return fail_argument("out is required");
  return guard([&] { *out = new bhm_registry(); });
}

bhm_status bhm_registry_catalog(const bhm_registry* r, char** out_json) {
  if (!r || !out_json) return fail_argument("r and out_json are required");
  return guard([&] { *out_json = dup_string(r->r.catalog_json()); });
}

bhm_status bhm_registry_fuse(bhm_registry* r, const char* fusion_id, const char* ids_json) {
  if (!r || !fusion_id || !ids_json)
    return fail_argument("r, fusion_id and ids_json are required");
  return guard([&] {
    const ordered_json j = parse_json_arg(ids_json, "ids_json");
    if (!j.is_array()) bhm::raise(bhm::errc::format, "ids_json must be an array");
    std::vector<std::string> ids;
    for (const auto& v : j) ids.push_back(v.get<std::string>());
    r->r.fuse(ids, fusion_id);
  });
}

bhm_status bhm_registry_extract(const bhm_registry* r, const bhm_history* h,
                                const char* hi_id, const char* interval_json,
                                char** out_json) {
  if (!r || !h || !hi_id || !out_json)
    return fail_argument("r, h, hi_id and out_json are required");
  return guard([&] {
    const auto interval = parse_interval_arg(interval_json);
    const bhm::FeatureSeries fs = r->r.extract(h->h, hi_id, interval);
    ordered_json j;
    j["hi_id"] = hi_id;
    j["width"] = fs.width;
    ordered_json per_cycle = ordered_json::array();
    for (const auto& v : fs.per_cycle)
      per_cycle.push_back(v ? ordered_json(*v) : ordered_json(nullptr));
    j["per_cycle"] = std::move(per_cycle);
    j["soh_pct"] = fs.soh_pct;
    *out_json = dup_string(j.dump());
  });
}

void bhm_registry_free(bhm_registry* r) { delete r; }

/* ---- fleet sessions ------------------------------------------------------ */

bhm_status bhm_sessions_load_csv(const char* path, bhm_sessions** out) {
  if (!path || !out) return fail_argument("path and out are required");
  return guard([&] { *out = new bhm_sessions{bhm::ingest_sessions(path)}; });
}

bhm_status bhm_sessions_generate(const char* params_json, bhm_sessions** out) {
  if (!params_json || !out) return fail_argument("params_json and out are required");
  return guard([&] {
    bhm::SessionIngest ingest;
    ingest.sessions = bhm::gen_sessions(bhm::synth_fleet_params_from_json(params_json));
    *out = new bhm_sessions{std::move(ingest)};
  });
}

bhm_status bhm_sessions_count(const bhm_sessions* s, size_t* out) {
  if (!s || !out) return fail_argument("s and out are required");
  *out = s->s.sessions.size();
  return BHM_OK;
}

bhm_status bhm_sessions_quarantine(const bhm_sessions* s, char** out_json) {
  if (!s || !out_json) return fail_argument("s and out_json are required");
  return guard([&] {
    ordered_json rows = ordered_json::array();
    for (const auto& q : s->s.quarantined)
      rows.push_back(ordered_json{{"line", q.line_number}, {"reason", q.reason}});
    *out_json = dup_string(ordered_json{{"quarantined", std::move(rows)}}.dump());
  });
}

bhm_status bhm_sessions_histogram(const bhm_sessions* s, char** out_json) {
  if (!s || !out_json) return fail_argument("s and out_json are required");
  return guard([&] {
    const bhm::UsageHistogram h = bhm::soc_usage_histogram(s->s.sessions);
    ordered_json j{{"driving", h.driving},
                   {"charging", h.charging},
                   {"driving_total", h.driving_total},
                   {"charging_total", h.charging_total}};
    *out_json = dup_string(j.dump());
  });
}

bhm_status bhm_sessions_probability(const bhm_sessions* s, const char* requirement_json,
                                    char** out_json) {
  if (!s || !requirement_json || !out_json)
    return fail_argument("s, requirement_json and out_json are required");
  return guard([&] {
    const auto req = parse_requirement(parse_json_arg(requirement_json, "requirement_json"));
    *out_json =
        dup_string(probability_to_json(bhm::acquisition_probability(s->s.sessions, req)).dump());
  });
}

bhm_status bhm_sessions_fusion_probability(const bhm_sessions* s,
                                           const char* requirements_json, char** out_json) {
  if (!s || !requirements_json || !out_json)
    return fail_argument("s, requirements_json and out_json are required");
  return guard([&] {
    const ordered_json j = parse_json_arg(requirements_json, "requirements_json");
    if (!j.is_array()) bhm::raise(bhm::errc::format, "requirements_json must be an array");
    std::vector<bhm::SocRequirement> reqs;
    for (const auto& e : j) reqs.push_back(parse_requirement(e));
    const bhm::FusionProbability fp = bhm::fusion_probability(s->s.sessions, reqs);
    ordered_json out;
    out["probability"] = fp.probability;
    ordered_json per_scenario;
    for (const auto& [sc, pr] : fp.per_scenario)
      per_scenario[sc == bhm::SocScenario::charge ? "charge" : "discharge"] =
          probability_to_json(pr);
    out["per_scenario"] = std::move(per_scenario);
    *out_json = dup_string(out.dump());
  });
}

void bhm_sessions_free(bhm_sessions* s) { delete s; }

/* ---- regression models --------------------------------------------------- */

bhm_status bhm_train_elm(const double* x, size_t input_dim, size_t m, const double* y,
                         size_t hidden_dim, double ridge, uint64_t seed, bhm_model** out) {
  if (!x || !y || !out) return fail_argument("x, y and out are required");
  if (input_dim == 0 || m == 0) return fail_argument("input_dim and m must be positive");
  return guard([&] {
    const Eigen::Map<const Eigen::MatrixXd> xm(x, static_cast<Eigen::Index>(input_dim),
                                               static_cast<Eigen::Index>(m));
    const Eigen::Map<const Eigen::RowVectorXd> ym(y, static_cast<Eigen::Index>(m));
    *out = new bhm_model{
        bhm::train_elm(xm, ym, static_cast<Eigen::Index>(hidden_dim), ridge, seed)};
  });
}

bhm_status bhm_train_woa_elm(const double* x, size_t input_dim, size_t m, const double* y,
                             size_t hidden_dim, double ridge, uint64_t seed,
                             const char* woa_json, bhm_model** out) {
  if (!x || !y || !out) return fail_argument("x, y and out are required");
  if (input_dim == 0 || m == 0) return fail_argument("input_dim and m must be positive");
  return guard([&] {
    bhm::WoaConfig woa;
    woa.seed = seed;
    if (woa_json && *woa_json) {
      const ordered_json j = parse_json_arg(woa_json, "woa_json");
      if (!j.is_object()) bhm::raise(bhm::errc::format, "woa_json must be an object");
      for (const auto& [key, value] : j.items()) {
        if (key == "population")
          woa.population = value.get<std::size_t>();
        else if (key == "max_iterations")
          woa.max_iterations = value.get<std::size_t>();
        else if (key == "seed")
          woa.seed = value.get<std::uint64_t>();
        else
          bhm::raise(bhm::errc::argument, "unknown WOA option " + key);
      }
    }
    const Eigen::Map<const Eigen::MatrixXd> xm(x, static_cast<Eigen::Index>(input_dim),
                                               static_cast<Eigen::Index>(m));
    const Eigen::Map<const Eigen::RowVectorXd> ym(y, static_cast<Eigen::Index>(m));
    *out = new bhm_model{
        bhm::train_woa_elm(xm, ym, static_cast<Eigen::Index>(hidden_dim), woa, ridge, seed)};
  });
}

bhm_status bhm_model_predict(const bhm_model* model, const double* x, size_t input_dim,
                             size_t k, double* out_y) {
  if (!model || !x || !out_y) return fail_argument("model, x and out_y are required");
  return guard([&] {
    if (static_cast<Eigen::Index>(input_dim) != model->m.input_dim)
      bhm::raise(bhm::errc::argument, "input_dim does not match the model");
    const Eigen::Map<const Eigen::MatrixXd> xm(x, static_cast<Eigen::Index>(input_dim),
                                               static_cast<Eigen::Index>(k));
    const Eigen::RowVectorXd y = bhm::predict(model->m, xm);
    for (Eigen::Index i = 0; i < y.size(); ++i) out_y[i] = y[i];
  });
}

bhm_status bhm_model_to_json(const bhm_model* model, char** out_json) {
  if (!model || !out_json) return fail_argument("model and out_json are required");
  return guard([&] { *out_json = dup_string(model->m.to_json()); });
}

bhm_status bhm_model_from_json(const char* json_text, bhm_model** out) {
  if (!json_text || !out) return fail_argument("json_text and out are required");
  return guard([&] { *out = new bhm_model{bhm::ElmModel::from_json(json_text)}; });
}

void bhm_model_free(bhm_model* model) { delete model; }

bhm_status bhm_woa_minimize(bhm_fitness_fn fitness, void* user_data, size_t dim,
                            const double* bounds_lo, const double* bounds_hi,
                            size_t population, size_t max_iterations, uint64_t seed,
                            double* out_best, double* out_best_fitness, double* out_trace) {
  if (!fitness || !bounds_lo || !bounds_hi || !out_best || !out_best_fitness)
    return fail_argument("fitness, bounds and out pointers are required");
  if (dim == 0) return fail_argument("dim must be positive");
  return guard([&] {
    bhm::WoaConfig cfg;
    cfg.population = population;
    cfg.max_iterations = max_iterations;
    cfg.seed = seed;
    cfg.bounds.reserve(dim);
    for (size_t i = 0; i < dim; ++i) cfg.bounds.emplace_back(bounds_lo[i], bounds_hi[i]);
    const bhm::WoaResult res = bhm::woa_optimize(
        [&](std::span<const double> pos) { return fitness(pos.data(), pos.size(), user_data); },
        dim, cfg);
    for (size_t i = 0; i < dim; ++i) out_best[i] = res.best_position[i];
    *out_best_fitness = res.best_fitness;
    if (out_trace)
      for (size_t i = 0; i < res.trace.size() && i < max_iterations; ++i)
        out_trace[i] = res.trace[i];
  });
}

/* ---- pipeline ------------------------------------------------------------ */

bhm_status bhm_run(const char* verb, const char* config_path, const char* out_dir, int jobs,
                   int has_seed, uint64_t seed, int* out_exit_code) {
  if (!verb || !config_path || !out_exit_code)
    return fail_argument("verb, config_path and out_exit_code are required");
  return guard([&] {
    bhm::ConfigOverrides ov;
    if (out_dir && *out_dir) ov.out_dir = out_dir;
    if (jobs > 0) ov.jobs = static_cast<std::size_t>(jobs);
    if (has_seed) ov.seed = seed;
    const bhm::PipelineConfig cfg = bhm::load_config(config_path, ov);
    const bhm::CommandResult res = bhm::run_command(verb, cfg);
    *out_exit_code = res.exit_code;
  });
}

} /* extern "C" */
