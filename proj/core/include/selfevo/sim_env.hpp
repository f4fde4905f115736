#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "selfevo/consistency.hpp"
#include "selfevo/grpo.hpp"
#include "selfevo/judge.hpp"
#include "selfevo/policy.hpp"
#include "selfevo/shaping.hpp"

namespace selfevo {

// Reward signals compared in the ablation table.
//   MV          binary majority-vote reward
//   SC          self-consistency frequency reward
//   JS          raw judge score as reward
//   MV_JS       majority vote modulated by g(s)
//   SC_JS       self-consistency modulated by g(s)
//   SC_JS_DIST  SC_JS with log-sum-exp (distributional) advantages
// All but SC_JS_DIST use group-mean-centred advantages.
enum class RewardVariant { MV, SC, JS, MV_JS, SC_JS, SC_JS_DIST };

inline constexpr std::array kAllVariants = {RewardVariant::MV,    RewardVariant::SC,    RewardVariant::JS,
                                            RewardVariant::MV_JS, RewardVariant::SC_JS, RewardVariant::SC_JS_DIST};

std::string_view to_string(RewardVariant variant) noexcept;
std::optional<RewardVariant> parse_variant(std::string_view name) noexcept;

struct SyntheticTask {
  std::string task_id;
  std::vector<std::string> answer_vocab;
  std::size_t true_answer_index = 0;
  std::vector<double> init_bias;  // initial answer logits; empty means all zero
  double malform_prob = 0.0;

  const std::string& truth() const { return answer_vocab.at(true_answer_index); }
  void validate() const;
};

struct Scenario {
  std::string name = "custom";
  std::vector<SyntheticTask> tasks;
  PolicyMode policy_mode = PolicyMode::categorical;
  int max_length = 1;
  double temperature = 1.0;
  double end_logit = 0.0;  // sequence mode: initial end-token logit at positions >= 1
  SimJudgeConfig judge;
  CalibrationParams calibration;
  ShapingParams shaping;
  GrpoConfig grpo;
  RewardVariant reward_variant = RewardVariant::SC_JS_DIST;
  std::size_t group_size = 8;
  int steps = 0;
  std::uint64_t seed = 0;

  void validate() const;
};

std::vector<std::string> preset_names();

// Named regimes:
//   benign              truth is the initial mode; judge mostly reliable but
//                       with systematic bias on some tasks
//   misleading_mode     K = 10, a wrong answer holds ~0.40 initial mass and
//                       the truth ~0.25; judge reliability 0.9
//   incorrect_consensus the wrong mode is dominant and the judge inflates it
// Throws InvalidArgument for an unknown name.
Scenario make_preset(std::string_view name);

// Policy initialized from the scenario's task biases.
PolicyTable initial_policy(const Scenario& scenario);

struct MetricsRecord {
  int step = 0;
  std::string variant;
  double accuracy = 0.0;
  double entropy = 0.0;
  double mean_response_length = 0.0;
  double mean_reward = 0.0;
  double clip_fraction = 0.0;
  double kl_value = 0.0;
  double wall_time = 0.0;  // seconds since loop start; not part of the metrics stream
};

// Rewards and advantages of one group under a reward variant.
struct VariantSignal {
  std::vector<double> rewards;
  std::vector<double> advantages;
};

VariantSignal variant_signal(RewardVariant variant, const RolloutGroup& group, std::span<const JudgeScore> scores,
                             const CalibrationParams& calibration, const ShapingParams& shaping);

struct RunHooks {
  std::function<void(const MetricsRecord&)> on_record;
  std::function<void(int step, const PolicyTable&)> on_step_end;
  std::function<void(int step, const RolloutGroup&, const VariantSignal&)> on_group;
};

struct RunResult {
  std::vector<MetricsRecord> metrics;  // steps + 1 records, step 0 is the initial policy
  PolicyTable final_policy;
};

// Closed self-evolution loop. Errors from components are rethrown as the same
// exception type with the step and task prepended to the message.
RunResult run_loop(const Scenario& scenario, const RunHooks& hooks = {});

// Mean over tasks of the policy's probability mass on the true answer.
double evaluate_accuracy(const PolicyTable& policy, std::span<const SyntheticTask> tasks);

struct AgreementStats {
  double agree_at_1 = 0.0;
  double sc_winner_acc = 0.0;
  double j_winner_acc = 0.0;
};

// Per task: roll out n trajectories; compare the self-consistency winner with
// the answer of highest mean judge score (ties -> lexicographically smallest).
AgreementStats agreement_stats(const PolicyTable& policy, std::span<const SyntheticTask> tasks,
                               const SimJudgeConfig& judge, std::size_t n, std::uint64_t seed);

}  // namespace selfevo
