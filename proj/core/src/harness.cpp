#include "selfevo/harness.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "selfevo/error.hpp"

namespace selfevo {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

std::string checkpoint_name(int step) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "policy_step_%06d.txt", step);
  return buf;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  return out;
}

std::string fmt(double v, int precision = 6) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

void write_summary(const fs::path& dir, const RunConfig& config, const RunResult& result) {
  const auto& first = result.metrics.front();
  const auto& last = result.metrics.back();
  std::ofstream out = open_out(dir / kSummaryFile);
  out << "variant\tseed\tsteps\tinitial_accuracy\tfinal_accuracy\tinitial_entropy\tfinal_entropy\t"
         "final_mean_response_length\tfinal_mean_reward\tfinal_kl\tagree_at_1\tsc_winner_acc\tj_winner_acc\n";
  out << last.variant << '\t' << config.scenario.seed << '\t' << last.step << '\t' << fmt(first.accuracy) << '\t'
      << fmt(last.accuracy) << '\t' << fmt(first.entropy) << '\t' << fmt(last.entropy) << '\t'
      << fmt(last.mean_response_length) << '\t' << fmt(last.mean_reward) << '\t' << fmt(last.kl_value);
  const std::size_t n = std::max<std::size_t>(config.scenario.group_size, 2);
  const auto agree =
      agreement_stats(result.final_policy, config.scenario.tasks, config.scenario.judge, n, config.scenario.seed);
  out << '\t' << fmt(agree.agree_at_1) << '\t' << fmt(agree.sc_winner_acc) << '\t' << fmt(agree.j_winner_acc) << '\n';
}

}  // namespace

std::string metrics_to_json_line(const MetricsRecord& r) {
  ordered_json j;
  j["step"] = r.step;
  j["variant"] = r.variant;
  j["accuracy"] = r.accuracy;
  j["entropy"] = r.entropy;
  j["mean_response_length"] = r.mean_response_length;
  j["mean_reward"] = r.mean_reward;
  j["clip_fraction"] = r.clip_fraction;
  j["kl_value"] = r.kl_value;
  return j.dump();
}

MetricsRecord metrics_from_json_line(std::string_view line) {
  try {
    const json j = json::parse(line);
    MetricsRecord r;
    r.step = j.at("step").get<int>();
    r.variant = j.at("variant").get<std::string>();
    r.accuracy = j.at("accuracy").get<double>();
    r.entropy = j.at("entropy").get<double>();
    r.mean_response_length = j.at("mean_response_length").get<double>();
    r.mean_reward = j.at("mean_reward").get<double>();
    r.clip_fraction = j.at("clip_fraction").get<double>();
    r.kl_value = j.at("kl_value").get<double>();
    return r;
  } catch (const json::exception& e) {
    throw ConfigError("metrics", std::string("unparseable record: ") + e.what());
  }
}

void apply_overrides(RunConfig& config, const RunOverrides& o) {
  if (o.output_dir) config.output_dir = *o.output_dir;
  if (o.seed) config.scenario.seed = *o.seed;
  if (o.variant) config.scenario.reward_variant = *o.variant;
  if (o.steps) config.scenario.steps = *o.steps;
  config.validate();
}

RunResult execute_run(const RunConfig& config, std::ostream& log) {
  config.validate();
  const fs::path dir = config.output_dir;
  fs::create_directories(dir);
  {
    std::ofstream cfg = open_out(dir / kConfigFile);
    cfg << run_config_to_json(config);
  }
  std::ofstream metrics = open_out(dir / kMetricsFile);
  std::ofstream timing = open_out(dir / kTimingFile);
  if (config.checkpoint_interval > 0) fs::create_directories(dir / kCheckpointDir);

  int pending = 0;
  RunHooks hooks;
  hooks.on_record = [&](const MetricsRecord& r) {
    for (double v : {r.accuracy, r.entropy, r.mean_response_length, r.mean_reward, r.clip_fraction, r.kl_value})
      if (!std::isfinite(v)) throw NumericError("non-finite metric at step " + std::to_string(r.step));
    metrics << metrics_to_json_line(r) << '\n';
    timing << "{\"step\":" << r.step << ",\"wall_time\":" << r.wall_time << "}\n";
    if (++pending >= config.metric_flush_interval) {
      metrics.flush();
      timing.flush();
      pending = 0;
    }
  };
  hooks.on_step_end = [&](int step, const PolicyTable& policy) {
    if (config.checkpoint_interval > 0 && step % config.checkpoint_interval == 0)
      save_policy(policy, dir / kCheckpointDir / checkpoint_name(step));
  };

  RunResult result = [&] {
    try {
      return run_loop(config.scenario, hooks);
    } catch (...) {
      metrics.flush();
      timing.flush();
      throw;
    }
  }();
  metrics.flush();
  timing.flush();
  save_policy(result.final_policy, dir / "policy_final.txt");
  write_summary(dir, config, result);

  const auto& last = result.metrics.back();
  log << "run " << config.scenario.name << " variant=" << last.variant << " seed=" << config.scenario.seed
      << " steps=" << last.step << " accuracy=" << fmt(last.accuracy) << " entropy=" << fmt(last.entropy) << '\n';
  return result;
}

int cli_run(const fs::path& config_path, const RunOverrides& overrides, std::ostream& out, std::ostream& err) {
  RunConfig config;
  try {
    config = load_run_config(config_path);
    apply_overrides(config, overrides);
  } catch (const ConfigError& e) {
    err << "error: invalid config '" << config_path.string() << "': " << e.what() << '\n';
    return 2;
  }
  try {
    execute_run(config, out);
  } catch (const Error& e) {
    err << "error: run failed: " << e.what() << '\n';
    return 1;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

MeanStd mean_std(const std::vector<double>& values) {
  MeanStd m;
  if (values.empty()) return m;
  for (double v : values) m.mean += v;
  m.mean /= static_cast<double>(values.size());
  if (values.size() >= 2) {
    double ss = 0.0;
    for (double v : values) ss += (v - m.mean) * (v - m.mean);
    m.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return m;
}

namespace {

void check_seeds(const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw ConfigError("seeds", "at least one seed is required");
  std::set<std::uint64_t> seen;
  for (auto s : seeds)
    if (!seen.insert(s).second) throw ConfigError("seeds", "duplicate seed " + std::to_string(s));
}

}  // namespace

std::vector<AblationRow> run_ablation(const RunConfig& base, const std::vector<std::uint64_t>& seeds,
                                      std::ostream& log) {
  check_seeds(seeds);

  std::vector<AblationRow> rows;
  for (auto variant : kAllVariants) {
    AblationRow row{variant, {}, {}};
    for (auto seed : seeds) {
      RunConfig cfg = base;
      cfg.scenario.reward_variant = variant;
      cfg.scenario.seed = seed;
      cfg.output_dir = base.output_dir / std::string(to_string(variant)) / ("seed_" + std::to_string(seed));
      const auto result = execute_run(cfg, log);
      row.final_accuracy.push_back(result.metrics.back().accuracy);
      row.final_entropy.push_back(result.metrics.back().entropy);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

int cli_ablate(const fs::path& config_path, const std::vector<std::uint64_t>& seeds, const RunOverrides& overrides,
               std::ostream& out, std::ostream& err) {
  RunConfig config;
  try {
    config = load_run_config(config_path);
    apply_overrides(config, overrides);
    check_seeds(seeds);
  } catch (const ConfigError& e) {
    err << "error: invalid ablation setup: " << e.what() << '\n';
    return 2;
  }

  std::vector<AblationRow> rows;
  try {
    rows = run_ablation(config, seeds, out);
  } catch (const Error& e) {
    err << "error: ablation failed: " << e.what() << '\n';
    return 1;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }

  auto show = [](const MeanStd& m) {
    return fmt(m.mean, 4) + " +/- " + (m.stddev ? fmt(*m.stddev, 4) : std::string("n/a"));
  };
  out << "\nablation over " << seeds.size() << " seed(s), scenario " << config.scenario.name << "\n";
  out << std::left << std::setw(12) << "variant" << std::setw(26) << "final_accuracy" << "final_entropy\n";
  std::ofstream tsv = open_out(config.output_dir / kAblationFile);
  tsv << "variant\truns\taccuracy_mean\taccuracy_std\tentropy_mean\tentropy_std\n";
  for (const auto& row : rows) {
    const auto acc = mean_std(row.final_accuracy);
    const auto ent = mean_std(row.final_entropy);
    out << std::left << std::setw(12) << to_string(row.variant) << std::setw(26) << show(acc) << show(ent) << '\n';
    tsv << to_string(row.variant) << '\t' << row.final_accuracy.size() << '\t' << fmt(acc.mean) << '\t'
        << (acc.stddev ? fmt(*acc.stddev) : "") << '\t' << fmt(ent.mean) << '\t'
        << (ent.stddev ? fmt(*ent.stddev) : "") << '\n';
  }
  return 0;
}

}  // namespace selfevo
