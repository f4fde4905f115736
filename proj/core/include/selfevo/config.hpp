#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "selfevo/sim_env.hpp"

namespace selfevo {

// Everything a run needs. A run is reproducible from this plus nothing else.
struct RunConfig {
  Scenario scenario;
  std::filesystem::path output_dir = "runs/default";
  int metric_flush_interval = 1;  // flush the metrics stream every N records
  int checkpoint_interval = 0;    // write a policy checkpoint every N steps; 0 disables

  void validate() const;  // throws ConfigError
};

// Parses a JSON run configuration. "scenario" is either a preset name or an
// inline scenario object; every other top-level section overrides the
// scenario's defaults. Unknown keys are rejected. Throws ConfigError naming
// the offending field.
RunConfig parse_run_config(std::string_view json_text);
RunConfig load_run_config(const std::filesystem::path& path);

// Fully resolved configuration (inline scenario, every parameter explicit).
// parse_run_config(run_config_to_json(c)) reproduces c.
std::string run_config_to_json(const RunConfig& config);

}  // namespace selfevo
