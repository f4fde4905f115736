#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "selfevo/consistency.hpp"
#include "selfevo/policy.hpp"

namespace selfevo {

enum class RatioLevel { token, trajectory };
enum class KlEstimator { low_var, exact_on_candidates };

std::string_view to_string(RatioLevel level) noexcept;
std::string_view to_string(KlEstimator estimator) noexcept;

struct GrpoConfig {
  double clip_epsilon = 0.2;
  double kl_beta = 0.01;
  double learning_rate = 1.0;
  RatioLevel ratio_level = RatioLevel::token;
  double max_grad_norm = 1.0;
  KlEstimator kl_estimator = KlEstimator::low_var;

  void validate() const;
};

struct UpdateReport {
  double objective = 0.0;
  double surrogate_value = 0.0;
  double kl_value = 0.0;
  double clip_fraction = 0.0;
  double grad_norm_pre_clip = 0.0;
  std::uint64_t policy_version_after = 0;
};

// A rollout group with one advantage per trajectory.
struct ScoredGroup {
  RolloutGroup group;
  std::vector<double> advantages;
};

// min(ratio * A, clip(ratio, 1 - eps, 1 + eps) * A). Throws NumericError on
// non-finite input and InvalidArgument for ratio <= 0.
double clipped_term(double ratio, double advantage, double epsilon);

// Mean over tokens of exp(d) - d - 1 with d = logp_ref - logp_current.
// Throws InvalidArgument on length mismatch; 0 for empty input.
double kl_low_var(std::span<const double> logp_current, std::span<const double> logp_ref);

// Objective value and its exact gradient w.r.t. the current policy's
// parameters.
//
//   J = 1/N sum_k [ S_k - beta * K_k ]
//
// over all N trajectories of all groups. With token-level ratios
// S_k = 1/T_k sum_t clipped_term(r_kt, A_k), r_kt = pi(o_t) / pi_old(o_t);
// with trajectory-level ratios S_k = clipped_term(pi(tau)/pi_old(tau), A_k).
// K_k is kl_low_var over the trajectory's tokens, or (exact_on_candidates,
// categorical mode only) the exact KL(pi || pi_ref) over the task's answers.
struct ObjectiveEvaluation {
  double objective = 0.0;
  double surrogate = 0.0;
  double kl = 0.0;
  double clip_fraction = 0.0;
  std::vector<double> gradient;
};

ObjectiveEvaluation evaluate_objective(const PolicyTable& current, const PolicyTable& old, const PolicyTable& ref,
                                       std::span<const ScoredGroup> batch, const GrpoConfig& config);

// One ascent step on J with global-norm gradient clipping. Afterwards the
// policy version is incremented and `old` is replaced by the new policy.
// Throws NumericError when a probability ratio overflows, naming the task and
// trajectory.
UpdateReport grpo_step(PolicyTable& policy, PolicySnapshot& old, const PolicySnapshot& ref,
                       std::span<const ScoredGroup> batch, const GrpoConfig& config);

// Exact KL(pi || ref) over the answer vocabulary of a categorical task.
double exact_policy_kl(const PolicyTable& current, const PolicyTable& ref, std::size_t task);

enum class StepRule {
  fixed,     // plain gradient descent at the given rate
  adaptive,  // rate grows by 1.2x after an improving step, failed steps are undone and the rate halved
};

struct FitResult {
  double final_kl = 0.0;
  int steps_taken = 0;
  std::vector<std::string> candidates;  // distinct answers, first-appearance order
  std::vector<double> target;           // target mass per candidate
  std::vector<double> restricted;       // policy restricted and renormalized to candidates
};

// Gradient descent on KL(target || pi restricted to the group's candidate
// answers). `target` has one entry per trajectory; entries for trajectories
// with the same answer are merged. Only candidate logits change. Requires
// categorical mode; throws InvalidArgument when target mass falls on a
// format-violating trajectory or the target does not sum to 1.
FitResult fit_to_target(PolicyTable& policy, const RolloutGroup& group, std::span<const double> target, int steps,
                        double learning_rate, StepRule rule = StepRule::adaptive);

}  // namespace selfevo
