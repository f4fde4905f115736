#include "selfevo/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "selfevo/error.hpp"
#include "selfevo/shaping.hpp"

namespace selfevo {
namespace {

// exp() overflows just above 709.78.
constexpr double kMaxLogRatio = 700.0;

bool clip_binds(double ratio, double advantage, double eps) noexcept {
  return (advantage > 0.0 && ratio > 1.0 + eps) || (advantage < 0.0 && ratio < 1.0 - eps);
}

double checked_ratio(double log_ratio, const Trajectory& traj, std::size_t index) {
  if (!(log_ratio <= kMaxLogRatio))
    throw NumericError("probability ratio overflow for task '" + traj.task_id + "' trajectory " +
                       std::to_string(index) + " (log ratio " + std::to_string(log_ratio) + ")");
  return std::exp(log_ratio);
}

double l2_norm(std::span<const double> v) noexcept {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

std::string_view to_string(RatioLevel level) noexcept { return level == RatioLevel::token ? "token" : "trajectory"; }

std::string_view to_string(KlEstimator estimator) noexcept {
  return estimator == KlEstimator::low_var ? "low_var" : "exact_on_candidates";
}

void GrpoConfig::validate() const {
  if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) throw InvalidArgument("clip_epsilon must lie in (0, 1)");
  if (!(kl_beta >= 0.0) || !std::isfinite(kl_beta)) throw InvalidArgument("kl_beta must be finite and >= 0");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw InvalidArgument("learning_rate must be finite and > 0");
  if (!(max_grad_norm > 0.0)) throw InvalidArgument("max_grad_norm must be > 0");
}

double clipped_term(double ratio, double advantage, double epsilon) {
  if (!std::isfinite(ratio) || !std::isfinite(advantage) || !std::isfinite(epsilon))
    throw NumericError("clipped_term: non-finite input");
  if (!(ratio > 0.0)) throw InvalidArgument("clipped_term: ratio must be positive");
  const double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
  return std::min(ratio * advantage, clipped * advantage);
}

double kl_low_var(std::span<const double> logp_current, std::span<const double> logp_ref) {
  if (logp_current.size() != logp_ref.size()) throw InvalidArgument("kl_low_var: length mismatch");
  if (logp_current.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t t = 0; t < logp_current.size(); ++t) {
    const double d = logp_ref[t] - logp_current[t];
    // expm1 keeps the estimator non-negative for tiny |d|.
    sum += std::expm1(d) - d;
  }
  return sum / static_cast<double>(logp_current.size());
}

double exact_policy_kl(const PolicyTable& current, const PolicyTable& ref, std::size_t task) {
  const auto p = current.token_probabilities(task, 0);
  const auto r = ref.token_probabilities(task, 0);
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0.0) kl += p[i] * (std::log(p[i]) - std::log(r[i]));
  return std::max(kl, 0.0);
}

ObjectiveEvaluation evaluate_objective(const PolicyTable& current, const PolicyTable& old, const PolicyTable& ref,
                                       std::span<const ScoredGroup> batch, const GrpoConfig& config) {
  const bool exact_kl = config.kl_estimator == KlEstimator::exact_on_candidates;
  if (exact_kl && current.mode() != PolicyMode::categorical)
    throw InvalidArgument("exact_on_candidates KL requires a categorical policy");

  std::size_t n_total = 0;
  for (const auto& g : batch) {
    if (g.group.trajectories.empty()) throw InvalidArgument("grpo: empty group in batch");
    if (g.advantages.size() != g.group.trajectories.size())
      throw InvalidArgument("grpo: advantage count differs from trajectory count for task '" + g.group.task_id + "'");
    n_total += g.group.trajectories.size();
  }

  ObjectiveEvaluation ev;
  ev.gradient.assign(current.parameters().size(), 0.0);
  if (n_total == 0) return ev;
  const double inv_n = 1.0 / static_cast<double>(n_total);
  const double eps = config.clip_epsilon;
  const double beta = config.kl_beta;

  std::size_t ratios = 0, clipped = 0;
  std::vector<double> weights;

  for (const auto& g : batch) {
    for (std::size_t k = 0; k < g.group.trajectories.size(); ++k) {
      const Trajectory& traj = g.group.trajectories[k];
      const double adv = g.advantages[k];
      if (!std::isfinite(adv)) throw NumericError("grpo: non-finite advantage for task '" + traj.task_id + "'");
      const auto lp = log_prob(current, traj);
      const auto lp_old = log_prob(old, traj);
      const std::size_t len = traj.tokens.size();
      const double inv_len = 1.0 / static_cast<double>(len);
      weights.assign(len, 0.0);

      double surrogate = 0.0;
      if (config.ratio_level == RatioLevel::token) {
        for (std::size_t t = 0; t < len; ++t) {
          const double ratio = checked_ratio(lp.per_token[t] - lp_old.per_token[t], traj, k);
          surrogate += clipped_term(ratio, adv, eps) * inv_len;
          ++ratios;
          if (clip_binds(ratio, adv, eps)) {
            ++clipped;
          } else {
            weights[t] += inv_n * inv_len * adv * ratio;
          }
        }
      } else {
        const double ratio = checked_ratio(lp.total - lp_old.total, traj, k);
        surrogate = clipped_term(ratio, adv, eps);
        ++ratios;
        if (clip_binds(ratio, adv, eps)) {
          ++clipped;
        } else {
          for (auto& w : weights) w += inv_n * adv * ratio;
        }
      }
      ev.surrogate += inv_n * surrogate;

      if (!exact_kl) {
        const auto lp_ref = log_prob(ref, traj);
        ev.kl += inv_n * kl_low_var(lp.per_token, lp_ref.per_token);
        if (beta != 0.0) {
          for (std::size_t t = 0; t < len; ++t) {
            const double d = lp_ref.per_token[t] - lp.per_token[t];
            weights[t] -= beta * inv_n * inv_len * (-std::expm1(d));
          }
        }
      }
      accumulate_token_grads(current, traj, weights, ev.gradient);
    }

    if (exact_kl) {
      const std::size_t task = current.task_index(g.group.task_id);
      const double share = static_cast<double>(g.group.trajectories.size()) * inv_n;
      const double kl = exact_policy_kl(current, ref, task);
      ev.kl += share * kl;
      if (beta != 0.0) {
        const auto p = current.token_probabilities(task, 0);
        const auto r = ref.token_probabilities(task, 0);
        const std::size_t off = current.row_offset(task, 0);
        const double inv_t = 1.0 / current.temperature();
        for (std::size_t i = 0; i < p.size(); ++i) {
          if (p[i] <= 0.0) continue;
          const double dkl = inv_t * p[i] * (std::log(p[i]) - std::log(r[i]) - kl);
          ev.gradient[off + i] -= beta * share * dkl;
        }
      }
    }
  }

  ev.objective = ev.surrogate - beta * ev.kl;
  ev.clip_fraction = ratios ? static_cast<double>(clipped) / static_cast<double>(ratios) : 0.0;
  return ev;
}

UpdateReport grpo_step(PolicyTable& policy, PolicySnapshot& old, const PolicySnapshot& ref,
                       std::span<const ScoredGroup> batch, const GrpoConfig& config) {
  config.validate();
  if (batch.empty()) throw InvalidArgument("grpo_step: empty batch");
  auto ev = evaluate_objective(policy, old.table(), ref.table(), batch, config);

  const double norm = l2_norm(ev.gradient);
  if (!std::isfinite(norm)) throw NumericError("grpo_step: non-finite gradient");
  const double scale = norm > config.max_grad_norm ? config.max_grad_norm / norm : 1.0;
  auto params = policy.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) params[i] += config.learning_rate * scale * ev.gradient[i];
  policy.check_finite();
  policy.bump_version();
  old = PolicySnapshot(policy);

  UpdateReport report;
  report.objective = ev.objective;
  report.surrogate_value = ev.surrogate;
  report.kl_value = ev.kl;
  report.clip_fraction = ev.clip_fraction;
  report.grad_norm_pre_clip = norm;
  report.policy_version_after = policy.version();
  return report;
}

FitResult fit_to_target(PolicyTable& policy, const RolloutGroup& group, std::span<const double> target, int steps,
                        double learning_rate, StepRule rule) {
  if (policy.mode() != PolicyMode::categorical) throw InvalidArgument("fit_to_target requires a categorical policy");
  if (target.size() != group.trajectories.size()) throw InvalidArgument("fit_to_target: one target entry per trajectory");
  if (!(learning_rate > 0.0) || steps < 0) throw InvalidArgument("fit_to_target: bad step settings");

  const std::size_t task = policy.task_index(group.task_id);
  const auto& answers = policy.task(task).answers;

  FitResult fit;
  std::vector<std::size_t> token_of;  // candidate -> answer index
  double total = 0.0;
  for (std::size_t k = 0; k < group.trajectories.size(); ++k) {
    const auto& traj = group.trajectories[k];
    if (target[k] < 0.0) throw InvalidArgument("fit_to_target: negative target mass");
    total += target[k];
    if (!traj.answer) {
      if (target[k] > 0.0) throw InvalidArgument("fit_to_target: target support outside the candidate set");
      continue;
    }
    auto it = std::find(fit.candidates.begin(), fit.candidates.end(), *traj.answer);
    if (it == fit.candidates.end()) {
      auto a = std::find(answers.begin(), answers.end(), *traj.answer);
      if (a == answers.end()) throw InvalidArgument("fit_to_target: answer '" + *traj.answer + "' not in vocabulary");
      fit.candidates.push_back(*traj.answer);
      fit.target.push_back(target[k]);
      token_of.push_back(static_cast<std::size_t>(a - answers.begin()));
    } else {
      fit.target[static_cast<std::size_t>(it - fit.candidates.begin())] += target[k];
    }
  }
  if (fit.candidates.empty()) throw InvalidArgument("fit_to_target: group has no valid candidate");
  if (std::abs(total - 1.0) > 1e-9) throw InvalidArgument("fit_to_target: target must sum to 1");

  auto row = policy.logits(task, 0);
  const double inv_t = 1.0 / policy.temperature();
  const std::size_t m = fit.candidates.size();

  auto restricted = [&] {
    std::vector<double> z(m);
    for (std::size_t i = 0; i < m; ++i) z[i] = row[token_of[i]] * inv_t;
    const double lse = log_sum_exp(z);
    for (auto& v : z) v = std::exp(v - lse);
    return z;
  };
  auto kl_of = [&](const std::vector<double>& p) {
    double kl = 0.0;
    for (std::size_t i = 0; i < m; ++i)
      if (fit.target[i] > 0.0) kl += fit.target[i] * (std::log(fit.target[i]) - std::log(p[i]));
    return std::max(kl, 0.0);
  };

  double rate = learning_rate;
  const double max_rate = learning_rate * 1e6;
  auto p = restricted();
  double kl = kl_of(p);
  std::vector<double> saved(m);
  int step = 0;
  for (; step < steps && kl > 0.0; ++step) {
    for (std::size_t i = 0; i < m; ++i) saved[i] = row[token_of[i]];
    for (std::size_t i = 0; i < m; ++i) row[token_of[i]] -= rate * inv_t * (p[i] - fit.target[i]);
    auto p_next = restricted();
    const double kl_next = kl_of(p_next);
    if (rule == StepRule::adaptive) {
      if (kl_next <= kl) {
        rate = std::min(rate * 1.2, max_rate);
      } else {
        for (std::size_t i = 0; i < m; ++i) row[token_of[i]] = saved[i];
        rate *= 0.5;
        continue;
      }
    }
    p = std::move(p_next);
    kl = kl_next;
  }
  policy.bump_version();

  fit.final_kl = kl;
  fit.steps_taken = step;
  fit.restricted = std::move(p);
  return fit;
}

}  // namespace selfevo
