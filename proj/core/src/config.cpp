#include "selfevo/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "selfevo/error.hpp"

namespace selfevo {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

// Rejects keys that are not in `allowed`.
void check_keys(const json& obj, std::string_view where, std::initializer_list<std::string_view> allowed) {
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || a == key;
    if (!ok) throw ConfigError(std::string(where).empty() ? key : std::string(where) + "." + key, "unknown key");
  }
}

std::string path_of(std::string_view where, std::string_view key) {
  return where.empty() ? std::string(key) : std::string(where) + "." + std::string(key);
}

template <typename T>
void read(const json& obj, std::string_view where, std::string_view key, T& out) {
  auto it = obj.find(std::string(key));
  if (it == obj.end()) return;
  try {
    if constexpr (std::is_same_v<T, double>) {
      if (!it->is_number()) throw ConfigError(path_of(where, key), "expected a number");
    } else if constexpr (std::is_integral_v<T>) {
      if (!it->is_number_integer()) throw ConfigError(path_of(where, key), "expected an integer");
      if constexpr (std::is_unsigned_v<T>)
        if (it->is_number_integer() && !it->is_number_unsigned())
          throw ConfigError(path_of(where, key), "expected a non-negative integer");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!it->is_string()) throw ConfigError(path_of(where, key), "expected a string");
    }
    out = it->get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(path_of(where, key), e.what());
  }
}

const json& object_at(const json& obj, std::string_view where, std::string_view key) {
  const auto& v = obj.at(std::string(key));
  if (!v.is_object()) throw ConfigError(path_of(where, key), "expected an object");
  return v;
}

template <typename F>
void validated(std::string_view field, F&& f) {
  try {
    f();
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string(field), e.what());
  }
}

PolicyMode parse_mode(const std::string& s, std::string_view field) {
  if (s == "categorical") return PolicyMode::categorical;
  if (s == "sequence") return PolicyMode::sequence;
  throw ConfigError(std::string(field), "expected 'categorical' or 'sequence', got '" + s + "'");
}

Scenario scenario_from_object(const json& obj) {
  check_keys(obj, "scenario", {"name", "tasks"});
  Scenario s;
  read(obj, "scenario", "name", s.name);
  if (!obj.contains("tasks") || !obj["tasks"].is_array() || obj["tasks"].empty())
    throw ConfigError("scenario.tasks", "expected a non-empty array");
  std::size_t i = 0;
  for (const auto& t : obj["tasks"]) {
    const std::string where = "scenario.tasks[" + std::to_string(i++) + "]";
    if (!t.is_object()) throw ConfigError(where, "expected an object");
    check_keys(t, where, {"id", "answers", "truth", "init_bias", "malform_prob"});
    SyntheticTask task;
    read(t, where, "id", task.task_id);
    if (task.task_id.empty()) throw ConfigError(where + ".id", "required");
    try {
      if (!t.contains("answers") || !t["answers"].is_array()) throw ConfigError(where + ".answers", "expected an array");
      task.answer_vocab = t["answers"].get<std::vector<std::string>>();
      if (t.contains("init_bias")) task.init_bias = t["init_bias"].get<std::vector<double>>();
    } catch (const json::exception& e) {
      throw ConfigError(where, e.what());
    }
    read(t, where, "truth", task.true_answer_index);
    read(t, where, "malform_prob", task.malform_prob);
    validated(where, [&] { task.validate(); });
    s.tasks.push_back(std::move(task));
  }
  return s;
}

void apply_overrides(const json& root, Scenario& s) {
  read(root, "", "seed", s.seed);
  read(root, "", "steps", s.steps);
  if (s.steps < 0) throw ConfigError("steps", "must be >= 0");
  read(root, "", "group_size", s.group_size);
  if (root.contains("variant")) {
    std::string name;
    read(root, "", "variant", name);
    auto v = parse_variant(name);
    if (!v) throw ConfigError("variant", "unknown reward variant '" + name + "'");
    s.reward_variant = *v;
  }
  if (root.contains("policy")) {
    const auto& p = object_at(root, "", "policy");
    check_keys(p, "policy", {"mode", "max_length", "temperature", "end_logit"});
    if (p.contains("mode")) {
      std::string mode;
      read(p, "policy", "mode", mode);
      s.policy_mode = parse_mode(mode, "policy.mode");
    }
    read(p, "policy", "max_length", s.max_length);
    read(p, "policy", "temperature", s.temperature);
    read(p, "policy", "end_logit", s.end_logit);
  }
  if (root.contains("calibration")) {
    const auto& c = object_at(root, "", "calibration");
    check_keys(c, "calibration", {"lambda_plus", "lambda_minus", "t_high", "t_low", "tau_high", "tau_low"});
    read(c, "calibration", "lambda_plus", s.calibration.lambda_plus);
    read(c, "calibration", "lambda_minus", s.calibration.lambda_minus);
    read(c, "calibration", "t_high", s.calibration.t_high);
    read(c, "calibration", "t_low", s.calibration.t_low);
    read(c, "calibration", "tau_high", s.calibration.tau_high);
    read(c, "calibration", "tau_low", s.calibration.tau_low);
  }
  if (root.contains("shaping")) {
    const auto& c = object_at(root, "", "shaping");
    check_keys(c, "shaping", {"alpha", "lambda_fmt"});
    read(c, "shaping", "alpha", s.shaping.alpha);
    read(c, "shaping", "lambda_fmt", s.shaping.lambda_fmt);
  }
  if (root.contains("grpo")) {
    const auto& c = object_at(root, "", "grpo");
    check_keys(c, "grpo",
               {"clip_epsilon", "kl_beta", "learning_rate", "ratio_level", "max_grad_norm", "kl_estimator"});
    read(c, "grpo", "clip_epsilon", s.grpo.clip_epsilon);
    read(c, "grpo", "kl_beta", s.grpo.kl_beta);
    read(c, "grpo", "learning_rate", s.grpo.learning_rate);
    read(c, "grpo", "max_grad_norm", s.grpo.max_grad_norm);
    if (c.contains("ratio_level")) {
      std::string v;
      read(c, "grpo", "ratio_level", v);
      if (v == "token") {
        s.grpo.ratio_level = RatioLevel::token;
      } else if (v == "trajectory") {
        s.grpo.ratio_level = RatioLevel::trajectory;
      } else {
        throw ConfigError("grpo.ratio_level", "expected 'token' or 'trajectory'");
      }
    }
    if (c.contains("kl_estimator")) {
      std::string v;
      read(c, "grpo", "kl_estimator", v);
      if (v == "low_var") {
        s.grpo.kl_estimator = KlEstimator::low_var;
      } else if (v == "exact_on_candidates") {
        s.grpo.kl_estimator = KlEstimator::exact_on_candidates;
      } else {
        throw ConfigError("grpo.kl_estimator", "expected 'low_var' or 'exact_on_candidates'");
      }
    }
  }
  if (root.contains("judge")) {
    const auto& c = object_at(root, "", "judge");
    check_keys(c, "judge", {"reliability", "noise_scale", "seed", "bias"});
    read(c, "judge", "reliability", s.judge.reliability);
    read(c, "judge", "noise_scale", s.judge.noise_scale);
    read(c, "judge", "seed", s.judge.seed);
    if (c.contains("bias")) {
      const auto& b = object_at(c, "judge", "bias");
      s.judge.bias_map.clear();
      for (const auto& [task, entry] : b.items()) {
        const std::string where = "judge.bias." + task;
        if (!entry.is_object()) throw ConfigError(where, "expected an object");
        check_keys(entry, where, {"answer", "inflation"});
        JudgeBias bias;
        read(entry, where, "answer", bias.answer);
        read(entry, where, "inflation", bias.inflation);
        s.judge.bias_map[task] = bias;
      }
    }
  }
}

}  // namespace

void RunConfig::validate() const {
  if (metric_flush_interval < 1) throw ConfigError("metric_flush_interval", "must be >= 1");
  if (checkpoint_interval < 0) throw ConfigError("checkpoint_interval", "must be >= 0");
  if (output_dir.empty()) throw ConfigError("output_dir", "must not be empty");
  validated("grpo", [&] { scenario.grpo.validate(); });
  validated("calibration", [&] { scenario.calibration.validate(/*allow_zero_caps=*/true); });
  validated("shaping", [&] { scenario.shaping.validate(); });
  validated("judge", [&] { scenario.judge.validate(); });
  validated("scenario", [&] { scenario.validate(); });
}

RunConfig parse_run_config(std::string_view json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError("", std::string("invalid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("", "top-level value must be an object");
  check_keys(root, "",
             {"scenario", "seed", "steps", "variant", "group_size", "output_dir", "metric_flush_interval",
              "checkpoint_interval", "policy", "calibration", "shaping", "grpo", "judge"});

  RunConfig cfg;
  if (!root.contains("scenario")) throw ConfigError("scenario", "required (preset name or inline object)");
  const auto& sc = root["scenario"];
  if (sc.is_string()) {
    try {
      cfg.scenario = make_preset(sc.get<std::string>());
    } catch (const InvalidArgument& e) {
      throw ConfigError("scenario", e.what());
    }
  } else if (sc.is_object()) {
    cfg.scenario = scenario_from_object(sc);
  } else {
    throw ConfigError("scenario", "expected a preset name or an object");
  }
  apply_overrides(root, cfg.scenario);

  std::string out_dir = cfg.output_dir.string();
  read(root, "", "output_dir", out_dir);
  cfg.output_dir = out_dir;
  read(root, "", "metric_flush_interval", cfg.metric_flush_interval);
  read(root, "", "checkpoint_interval", cfg.checkpoint_interval);
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("", "cannot read config file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string run_config_to_json(const RunConfig& config) {
  const Scenario& s = config.scenario;
  ordered_json tasks = ordered_json::array();
  for (const auto& t : s.tasks) {
    ordered_json jt;
    jt["id"] = t.task_id;
    jt["answers"] = t.answer_vocab;
    jt["truth"] = t.true_answer_index;
    jt["init_bias"] = t.init_bias;
    jt["malform_prob"] = t.malform_prob;
    tasks.push_back(std::move(jt));
  }
  ordered_json bias = ordered_json::object();
  for (const auto& [task, b] : s.judge.bias_map) bias[task] = {{"answer", b.answer}, {"inflation", b.inflation}};

  ordered_json root;
  root["scenario"] = {{"name", s.name}, {"tasks", tasks}};
  root["seed"] = s.seed;
  root["steps"] = s.steps;
  root["variant"] = std::string(to_string(s.reward_variant));
  root["group_size"] = s.group_size;
  root["output_dir"] = config.output_dir.string();
  root["metric_flush_interval"] = config.metric_flush_interval;
  root["checkpoint_interval"] = config.checkpoint_interval;
  root["policy"] = {{"mode", std::string(to_string(s.policy_mode))},
                    {"max_length", s.max_length},
                    {"temperature", s.temperature},
                    {"end_logit", s.end_logit}};
  root["calibration"] = {{"lambda_plus", s.calibration.lambda_plus}, {"lambda_minus", s.calibration.lambda_minus},
                         {"t_high", s.calibration.t_high},           {"t_low", s.calibration.t_low},
                         {"tau_high", s.calibration.tau_high},       {"tau_low", s.calibration.tau_low}};
  root["shaping"] = {{"alpha", s.shaping.alpha}, {"lambda_fmt", s.shaping.lambda_fmt}};
  root["grpo"] = {{"clip_epsilon", s.grpo.clip_epsilon},
                  {"kl_beta", s.grpo.kl_beta},
                  {"learning_rate", s.grpo.learning_rate},
                  {"ratio_level", std::string(to_string(s.grpo.ratio_level))},
                  {"max_grad_norm", s.grpo.max_grad_norm},
                  {"kl_estimator", std::string(to_string(s.grpo.kl_estimator))}};
  root["judge"] = {{"reliability", s.judge.reliability},
                   {"noise_scale", s.judge.noise_scale},
                   {"seed", s.judge.seed},
                   {"bias", bias}};
  return root.dump(2) + "\n";
}

}  // namespace selfevo
