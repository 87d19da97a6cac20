// SPDX-License-Identifier: Apache-2.0
// Command-line front end. Deliberately speaks only the C interface so it
// doubles as a smoke test for the shared library boundary.
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bhm/bhm.h"

int main(int argc, char** argv) {
  CLI::App app{"battery health monitoring toolkit"};
  app.set_version_flag("--version", std::string(bhm_version()));
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool has_seed = false;
  int jobs = 0;

  const std::vector<std::pair<const char*, const char*>> verbs = {
      {"generate", "synthesize cycling data and fleet sessions"},
      {"extract", "write per-cycle feature tables"},
      {"evaluate", "correlation and model-accuracy report per indicator"},
      {"optimize-intervals", "grid-search partial-curve windows"},
      {"heatmap", "mean |PCC| over all SOC window pairs"},
      {"screen", "run the four-step indicator screening"},
      {"probability", "acquisition probability from fleet sessions"},
      {"fuse", "evaluate configured fused indicators"},
      {"report", "full pipeline: evaluate, screen, probability, fuse"},
  };
  for (const auto& [name, help] : verbs) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("-c,--config", config_path, "pipeline config JSON")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("-o,--out", out_dir, "output directory (overrides config and BHM_OUT_DIR)");
    sub->add_option("-j,--jobs", jobs, "worker threads (overrides config and BHM_JOBS)")
        ->check(CLI::PositiveNumber);
    sub->add_option("-s,--seed", seed, "replace the engine base seed")
        ->each([&](const std::string&) { has_seed = true; });
  }

  CLI11_PARSE(app, argc, argv);

  const std::string verb = app.get_subcommands().front()->get_name();
  int exit_code = 0;
  const bhm_status st =
      bhm_run(verb.c_str(), config_path.c_str(), out_dir.empty() ? nullptr : out_dir.c_str(),
              jobs, has_seed ? 1 : 0, seed, &exit_code);
  if (st != BHM_OK) {
    std::fprintf(stderr, "bhm %s: %s\n", verb.c_str(), bhm_last_error());
    return 2;
  }
  if (exit_code != 0)
    std::fprintf(stderr, "bhm %s: finished with failures (see summary outputs)\n",
                 verb.c_str());
  return exit_code;
}
