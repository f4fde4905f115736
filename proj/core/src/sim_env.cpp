#include "selfevo/sim_env.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>

#include "selfevo/answer_format.hpp"
#include "selfevo/error.hpp"

namespace selfevo {
namespace {

// Stream identifiers for derive_seed.
constexpr std::uint64_t kStreamSample = 1;
constexpr std::uint64_t kStreamJudge = 2;
constexpr std::uint64_t kStreamAgreement = 3;

std::vector<std::string> numeric_vocab(std::size_t k, int base) {
  std::vector<std::string> v;
  for (std::size_t i = 0; i < k; ++i) v.push_back(std::to_string(base + static_cast<int>(i) * 3));
  return v;
}

// Logits whose softmax puts `mode_mass` on `mode`, `truth_mass` on `truth` and
// spreads the rest evenly.
std::vector<double> planted_logits(std::size_t k, std::size_t mode, double mode_mass, std::size_t truth,
                                   double truth_mass) {
  const double rest = (1.0 - mode_mass - (mode == truth ? 0.0 : truth_mass)) /
                      static_cast<double>(k - (mode == truth ? 1 : 2));
  std::vector<double> z(k, std::log(rest));
  z[truth] = std::log(truth_mass);
  z[mode] = std::log(mode_mass);
  return z;
}

// Rethrows library exceptions with step/task context, preserving the type.
template <typename F>
auto with_context(int step, const std::string& task, F&& f) {
  try {
    return f();
  } catch (const NumericError& e) {
    throw NumericError("step " + std::to_string(step) + ", task '" + task + "': " + e.what());
  } catch (const InvalidArgument& e) {
    throw InvalidArgument("step " + std::to_string(step) + ", task '" + task + "': " + e.what());
  }
}

struct SnapshotMetrics {
  double accuracy = 0.0;
  double entropy = 0.0;
  double length = 0.0;
};

SnapshotMetrics policy_metrics(const PolicyTable& policy, std::span<const SyntheticTask> tasks) {
  SnapshotMetrics m;
  m.accuracy = evaluate_accuracy(policy, tasks);
  for (const auto& t : tasks) {
    m.entropy += entropy(policy, t.task_id).value;
    m.length += expected_response_length(policy, t.task_id);
  }
  const double n = static_cast<double>(tasks.size());
  m.entropy /= n;
  m.length /= n;
  return m;
}

}  // namespace

std::string_view to_string(RewardVariant variant) noexcept {
  switch (variant) {
    case RewardVariant::MV: return "MV";
    case RewardVariant::SC: return "SC";
    case RewardVariant::JS: return "JS";
    case RewardVariant::MV_JS: return "MV_JS";
    case RewardVariant::SC_JS: return "SC_JS";
    case RewardVariant::SC_JS_DIST: return "SC_JS_DIST";
  }
  return "unknown";
}

std::optional<RewardVariant> parse_variant(std::string_view name) noexcept {
  for (auto v : kAllVariants)
    if (to_string(v) == name) return v;
  return std::nullopt;
}

void SyntheticTask::validate() const {
  if (answer_vocab.empty()) throw InvalidArgument("task '" + task_id + "': empty answer vocabulary");
  if (true_answer_index >= answer_vocab.size())
    throw InvalidArgument("task '" + task_id + "': true_answer_index out of range");
  if (!init_bias.empty() && init_bias.size() != answer_vocab.size())
    throw InvalidArgument("task '" + task_id + "': init_bias length must equal the vocabulary size");
  for (double b : init_bias)
    if (!std::isfinite(b)) throw InvalidArgument("task '" + task_id + "': init_bias must be finite");
  if (!(malform_prob >= 0.0 && malform_prob < 1.0))
    throw InvalidArgument("task '" + task_id + "': malform_prob must lie in [0, 1)");
}

void Scenario::validate() const {
  if (tasks.empty()) throw InvalidArgument("scenario has no tasks");
  for (const auto& t : tasks) t.validate();
  if (group_size < 1) throw InvalidArgument("group_size must be >= 1");
  if (steps < 0) throw InvalidArgument("steps must be >= 0");
  if (max_length < 1) throw InvalidArgument("max_length must be >= 1");
  if (policy_mode == PolicyMode::categorical && max_length != 1)
    throw InvalidArgument("categorical policies have max_length 1");
  if (!std::isfinite(end_logit)) throw InvalidArgument("end_logit must be finite");
  judge.validate();
  calibration.validate(/*allow_zero_caps=*/true);
  shaping.validate();
  grpo.validate();
}

std::vector<std::string> preset_names() { return {"benign", "misleading_mode", "incorrect_consensus"}; }

Scenario make_preset(std::string_view name) {
  Scenario s;
  s.name = std::string(name);
  s.group_size = 8;
  s.grpo.kl_beta = 0.01;
  s.grpo.max_grad_norm = 1.0;

  if (name == "benign") {
    // The truth is the initial mode everywhere. Every third task has a judge
    // that inflates the runner-up.
    constexpr std::size_t kTasks = 12, kAnswers = 6;
    for (std::size_t i = 0; i < kTasks; ++i) {
      SyntheticTask t;
      t.task_id = "benign_" + std::to_string(i);
      t.answer_vocab = numeric_vocab(kAnswers, static_cast<int>(i) + 2);
      t.true_answer_index = i % kAnswers;
      const std::size_t runner_up = (t.true_answer_index + 1) % kAnswers;
      t.init_bias = planted_logits(kAnswers, t.true_answer_index, 0.35, runner_up, 0.25);
      if (i % 3 == 1) {
        s.judge.bias_map[t.task_id] = JudgeBias{t.answer_vocab[runner_up], 0.9};
      }
      s.tasks.push_back(std::move(t));
    }
    s.judge.reliability = 0.75;
    s.judge.noise_scale = 0.2;
    s.judge.seed = 11;
    s.grpo.learning_rate = 2.0;
    s.steps = 300;
  } else if (name == "misleading_mode") {
    constexpr std::size_t kTasks = 4, kAnswers = 10;
    for (std::size_t i = 0; i < kTasks; ++i) {
      SyntheticTask t;
      t.task_id = "mislead_" + std::to_string(i);
      t.answer_vocab = numeric_vocab(kAnswers, static_cast<int>(10 * i) + 1);
      t.true_answer_index = (2 * i + 1) % kAnswers;
      const std::size_t wrong = (2 * i + 4) % kAnswers;
      t.init_bias = planted_logits(kAnswers, wrong, 0.40, t.true_answer_index, 0.25);
      s.tasks.push_back(std::move(t));
    }
    s.judge.reliability = 0.9;
    s.judge.noise_scale = 0.1;
    s.judge.seed = 23;
    s.grpo.learning_rate = 0.5;
    s.steps = 150;
  } else if (name == "incorrect_consensus") {
    constexpr std::size_t kTasks = 4, kAnswers = 10;
    for (std::size_t i = 0; i < kTasks; ++i) {
      SyntheticTask t;
      t.task_id = "consensus_" + std::to_string(i);
      t.answer_vocab = numeric_vocab(kAnswers, static_cast<int>(7 * i) + 5);
      t.true_answer_index = i % kAnswers;
      const std::size_t wrong = (i + 5) % kAnswers;
      t.init_bias = planted_logits(kAnswers, wrong, 0.55, t.true_answer_index, 0.15);
      s.judge.bias_map[t.task_id] = JudgeBias{t.answer_vocab[wrong], 0.9};
      s.tasks.push_back(std::move(t));
    }
    s.judge.reliability = 0.9;
    s.judge.noise_scale = 0.1;
    s.judge.seed = 37;
    s.grpo.learning_rate = 0.5;
    s.steps = 150;
  } else {
    throw InvalidArgument("unknown scenario preset '" + std::string(name) + "'");
  }
  return s;
}

PolicyTable initial_policy(const Scenario& scenario) {
  std::vector<TaskVocabulary> vocab;
  for (const auto& t : scenario.tasks) vocab.push_back({t.task_id, t.answer_vocab});
  PolicyTable policy = scenario.policy_mode == PolicyMode::categorical
                           ? PolicyTable::categorical(std::move(vocab), scenario.temperature)
                           : PolicyTable::sequence(std::move(vocab), scenario.max_length, scenario.temperature);
  for (std::size_t i = 0; i < scenario.tasks.size(); ++i) {
    const auto& t = scenario.tasks[i];
    for (int pos = 0; pos < policy.positions(); ++pos) {
      auto row = policy.logits(i, pos);
      for (std::size_t a = 0; a < t.init_bias.size(); ++a) row[a] = t.init_bias[a];
      if (scenario.policy_mode == PolicyMode::sequence) row[t.answer_vocab.size()] = scenario.end_logit;
    }
  }
  return policy;
}

VariantSignal variant_signal(RewardVariant variant, const RolloutGroup& group, std::span<const JudgeScore> scores,
                             const CalibrationParams& calibration, const ShapingParams& shaping) {
  const std::size_t n = group.trajectories.size();
  if (scores.size() != n) throw InvalidArgument("variant_signal: one judge score per trajectory required");

  std::vector<std::uint8_t> deltas(n);
  for (std::size_t k = 0; k < n; ++k) deltas[k] = group.trajectories[k].format_violation ? 1 : 0;

  std::vector<double> base;
  switch (variant) {
    case RewardVariant::MV:
    case RewardVariant::MV_JS: base = mv_rewards(group).rewards; break;
    case RewardVariant::SC:
    case RewardVariant::SC_JS:
    case RewardVariant::SC_JS_DIST: base = sc_rewards(group); break;
    case RewardVariant::JS:
      base.resize(n);
      for (std::size_t k = 0; k < n; ++k) base[k] = scores[k].overall;
      break;
  }

  std::vector<double> modulation(n, 1.0);
  if (variant == RewardVariant::MV_JS || variant == RewardVariant::SC_JS || variant == RewardVariant::SC_JS_DIST)
    for (std::size_t k = 0; k < n; ++k) modulation[k] = calibrate(scores[k].overall, calibration);

  VariantSignal sig;
  sig.rewards = final_rewards(base, modulation, deltas, shaping);
  if (variant == RewardVariant::SC_JS_DIST) {
    sig.advantages = shape_group(sig.rewards, shaping).advantages;
  } else {
    sig.advantages = mean_centered_advantages(sig.rewards);
  }
  return sig;
}

RunResult run_loop(const Scenario& scenario, const RunHooks& hooks) {
  scenario.validate();
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };

  PolicyTable policy = initial_policy(scenario);
  const PolicySnapshot ref(policy);
  PolicySnapshot old(policy);
  const std::string variant_name(to_string(scenario.reward_variant));

  RunResult result{{}, policy};
  auto emit = [&](MetricsRecord rec) {
    if (hooks.on_record) hooks.on_record(rec);
    result.metrics.push_back(std::move(rec));
  };

  {
    const auto m = policy_metrics(policy, scenario.tasks);
    emit(MetricsRecord{0, variant_name, m.accuracy, m.entropy, m.length, 0.0, 0.0, 0.0, elapsed()});
  }

  std::vector<ScoredGroup> batch;
  std::vector<JudgeScore> scores;
  for (int step = 1; step <= scenario.steps; ++step) {
    batch.clear();
    double reward_sum = 0.0;
    std::size_t reward_count = 0;
    for (std::size_t ti = 0; ti < scenario.tasks.size(); ++ti) {
      const auto& task = scenario.tasks[ti];
      with_context(step, task.task_id, [&] {
        Rng sample_rng(derive_seed(scenario.seed, {kStreamSample, static_cast<std::uint64_t>(step), ti}));
        auto trajectories =
            sample_group(policy, task.task_id, scenario.group_size, sample_rng, SampleOptions{task.malform_prob});
        RolloutGroup group = build_group(std::move(trajectories));

        Rng judge_rng(derive_seed(scenario.judge.seed,
                                  {kStreamJudge, scenario.seed, static_cast<std::uint64_t>(step), ti}));
        scores.clear();
        for (const auto& traj : group.trajectories)
          scores.push_back(judge_trajectory(traj, task.truth(), scenario.judge, judge_rng));

        VariantSignal sig =
            variant_signal(scenario.reward_variant, group, scores, scenario.calibration, scenario.shaping);
        for (double r : sig.rewards) reward_sum += r;
        reward_count += sig.rewards.size();
        if (hooks.on_group) hooks.on_group(step, group, sig);
        batch.push_back(ScoredGroup{std::move(group), std::move(sig.advantages)});
        return 0;
      });
    }

    const UpdateReport report =
        with_context(step, "*", [&] { return grpo_step(policy, old, ref, batch, scenario.grpo); });
    const auto m = policy_metrics(policy, scenario.tasks);
    emit(MetricsRecord{step, variant_name, m.accuracy, m.entropy, m.length,
                       reward_sum / static_cast<double>(reward_count), report.clip_fraction, report.kl_value,
                       elapsed()});
    if (hooks.on_step_end) hooks.on_step_end(step, policy);
  }
  result.final_policy = std::move(policy);
  return result;
}

double evaluate_accuracy(const PolicyTable& policy, std::span<const SyntheticTask> tasks) {
  if (tasks.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& t : tasks) {
    const std::size_t idx = policy.task_index(t.task_id);
    sum += policy.answer_distribution(idx).at(t.true_answer_index);
  }
  return sum / static_cast<double>(tasks.size());
}

AgreementStats agreement_stats(const PolicyTable& policy, std::span<const SyntheticTask> tasks,
                               const SimJudgeConfig& judge, std::size_t n, std::uint64_t seed) {
  if (n < 2) throw InvalidArgument("agreement_stats: n must be >= 2");
  AgreementStats stats;
  if (tasks.empty()) return stats;
  for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
    const auto& task = tasks[ti];
    Rng sample_rng(derive_seed(seed, {kStreamAgreement, kStreamSample, ti}));
    Rng judge_rng(derive_seed(judge.seed, {kStreamAgreement, kStreamJudge, seed, ti}));
    const RolloutGroup group = build_group(sample_group(policy, task.task_id, n, sample_rng));

    std::map<std::string, std::pair<double, int>> judged;  // answer -> (score sum, count)
    for (const auto& traj : group.trajectories) {
      const auto s = judge_trajectory(traj, task.truth(), judge, judge_rng);
      if (!traj.answer) continue;
      auto& [sum, count] = judged[*traj.answer];
      sum += s.overall;
      ++count;
    }
    const auto sc_winner = majority_answer(group);
    std::optional<std::string> j_winner;
    double best = -1.0;
    for (const auto& [answer, acc] : judged) {
      const double mean = acc.first / acc.second;
      if (mean > best) {
        best = mean;
        j_winner = answer;
      }
    }
    if (sc_winner && sc_winner == j_winner) stats.agree_at_1 += 1.0;
    if (sc_winner == task.truth()) stats.sc_winner_acc += 1.0;
    if (j_winner == task.truth()) stats.j_winner_acc += 1.0;
  }
  const double nt = static_cast<double>(tasks.size());
  stats.agree_at_1 /= nt;
  stats.sc_winner_acc /= nt;
  stats.j_winner_acc /= nt;
  return stats;
}

}  // namespace selfevo
