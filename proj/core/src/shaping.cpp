#include "selfevo/shaping.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "selfevo/error.hpp"

namespace selfevo {

void ShapingParams::validate() const {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw InvalidArgument("shaping alpha must be positive and finite");
  if (!(lambda_fmt >= 0.0) || !std::isfinite(lambda_fmt))
    throw InvalidArgument("shaping lambda_fmt must be non-negative and finite");
}

double log_sum_exp(std::span<const double> x) noexcept {
  if (x.empty()) return -std::numeric_limits<double>::infinity();
  const double m = *std::max_element(x.begin(), x.end());
  if (!std::isfinite(m)) return m;
  double sum = 0.0;
  for (double v : x) sum += std::exp(v - m);
  return m + std::log(sum);
}

double entropy_of(std::span<const double> probs) noexcept {
  double h = 0.0;
  for (double p : probs)
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

std::vector<double> final_rewards(std::span<const double> sc, std::span<const double> g_factors,
                                  std::span<const std::uint8_t> deltas, const ShapingParams& params) {
  if (sc.size() != g_factors.size() || sc.size() != deltas.size())
    throw InvalidArgument("final_rewards: sc, g and delta lengths differ");
  std::vector<double> out(sc.size());
  for (std::size_t k = 0; k < sc.size(); ++k)
    out[k] = sc[k] * g_factors[k] - (deltas[k] != 0 ? params.lambda_fmt : 0.0);
  return out;
}

ShapedGroup shape_group(std::span<const double> rewards, const ShapingParams& params) {
  if (rewards.empty()) throw InvalidArgument("shape_group: empty group");
  for (std::size_t k = 0; k < rewards.size(); ++k)
    if (!std::isfinite(rewards[k]))
      throw NumericError("shape_group: non-finite reward at index " + std::to_string(k) +
                         " (corrupted upstream computation)");

  ShapedGroup g;
  g.final_rewards.assign(rewards.begin(), rewards.end());
  g.scaled_rewards.resize(rewards.size());
  for (std::size_t k = 0; k < rewards.size(); ++k) g.scaled_rewards[k] = params.alpha * rewards[k];

  g.baseline = log_sum_exp(g.scaled_rewards);
  g.advantages.resize(rewards.size());
  g.target_dist.resize(rewards.size());
  for (std::size_t k = 0; k < rewards.size(); ++k) {
    g.advantages[k] = g.scaled_rewards[k] - g.baseline;
    g.target_dist[k] = std::exp(g.advantages[k]);
  }
  return g;
}

std::vector<double> one_hot_target(const RolloutGroup& group) {
  const auto idx = majority_index(group);
  if (!idx) throw InvalidArgument("one_hot_target: group has no valid answer");
  std::vector<double> q(group.trajectories.size(), 0.0);
  q[*idx] = 1.0;
  return q;
}

double kl_to_policy(std::span<const double> target, std::span<const double> policy_probs) {
  if (target.size() != policy_probs.size()) throw InvalidArgument("kl_to_policy: length mismatch");
  double sq = 0.0, sp = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i] < 0.0 || policy_probs[i] < 0.0) throw InvalidArgument("kl_to_policy: negative probability");
    sq += target[i];
    sp += policy_probs[i];
  }
  if (std::abs(sq - 1.0) > 1e-9 || std::abs(sp - 1.0) > 1e-9)
    throw InvalidArgument("kl_to_policy: distributions must sum to 1");
  double kl = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i] == 0.0) continue;
    if (policy_probs[i] == 0.0)
      throw InvalidArgument("kl_to_policy: policy has zero mass where target is positive (index " +
                            std::to_string(i) + ")");
    kl += target[i] * std::log(target[i] / policy_probs[i]);
  }
  return std::max(kl, 0.0);
}

std::vector<double> mean_centered_advantages(std::span<const double> rewards) {
  if (rewards.empty()) return {};
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(rewards.size());
  std::vector<double> out(rewards.size());
  for (std::size_t k = 0; k < rewards.size(); ++k) out[k] = rewards[k] - mean;
  return out;
}

}  // namespace selfevo
