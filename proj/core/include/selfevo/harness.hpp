#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "selfevo/config.hpp"
#include "selfevo/sim_env.hpp"

namespace selfevo {

// Output file names inside a run directory.
inline constexpr std::string_view kConfigFile = "config.json";
inline constexpr std::string_view kMetricsFile = "metrics.jsonl";
inline constexpr std::string_view kTimingFile = "timing.jsonl";
inline constexpr std::string_view kSummaryFile = "summary.tsv";
inline constexpr std::string_view kCheckpointDir = "checkpoints";
inline constexpr std::string_view kAblationFile = "ablation.tsv";

// One metrics line. Field order: step, variant, accuracy, entropy,
// mean_response_length, mean_reward, clip_fraction, kl_value.
std::string metrics_to_json_line(const MetricsRecord& record);
// Throws ConfigError for a line that is not a complete record.
MetricsRecord metrics_from_json_line(std::string_view line);

// Command-line overrides applied on top of a loaded config.
struct RunOverrides {
  std::optional<std::filesystem::path> output_dir;
  std::optional<std::uint64_t> seed;
  std::optional<RewardVariant> variant;
  std::optional<int> steps;
};

void apply_overrides(RunConfig& config, const RunOverrides& overrides);

// Runs the loop and writes config copy, metrics stream, timing stream,
// checkpoints and summary into config.output_dir. Partial metrics are flushed
// before an exception propagates.
RunResult execute_run(const RunConfig& config, std::ostream& log);

// Subcommand entry points; return the process exit status.
int cli_run(const std::filesystem::path& config_path, const RunOverrides& overrides, std::ostream& out,
            std::ostream& err);
int cli_ablate(const std::filesystem::path& config_path, const std::vector<std::uint64_t>& seeds,
               const RunOverrides& overrides, std::ostream& out, std::ostream& err);

struct AblationRow {
  RewardVariant variant;
  std::vector<double> final_accuracy;  // one per seed
  std::vector<double> final_entropy;
};

// Mean and sample standard deviation; stddev is nullopt for fewer than two
// values.
struct MeanStd {
  double mean = 0.0;
  std::optional<double> stddev;
};
MeanStd mean_std(const std::vector<double>& values);

std::vector<AblationRow> run_ablation(const RunConfig& base, const std::vector<std::uint64_t>& seeds,
                                      std::ostream& log);

}  // namespace selfevo
