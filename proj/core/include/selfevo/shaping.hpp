#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "selfevo/consistency.hpp"

namespace selfevo {

struct ShapingParams {
  double alpha = 1.0;       // energy temperature
  double lambda_fmt = 0.5;  // format penalty coefficient

  void validate() const;
};

// Group-wise distributional view of one group's final rewards.
//   scaled_k    = alpha * R_k
//   baseline    = log sum_j exp(scaled_j)
//   advantage_k = scaled_k - baseline = log q_k
//   q_k         = softmax(alpha * R)_k
struct ShapedGroup {
  std::vector<double> final_rewards;
  std::vector<double> scaled_rewards;
  double baseline = 0.0;
  std::vector<double> advantages;
  std::vector<double> target_dist;

  std::size_t size() const noexcept { return final_rewards.size(); }
};

// Numerically stable log(sum(exp(x))). Returns -inf for an empty span.
double log_sum_exp(std::span<const double> x) noexcept;

// Shannon entropy (nats) of a probability vector; 0 log 0 = 0.
double entropy_of(std::span<const double> probs) noexcept;

// R_k = sc_k * g_k - lambda_fmt * delta_k, delta_k in {0, 1}. Throws
// InvalidArgument on length mismatch.
std::vector<double> final_rewards(std::span<const double> sc, std::span<const double> g_factors,
                                  std::span<const std::uint8_t> deltas, const ShapingParams& params);

// Throws InvalidArgument on an empty span and NumericError on a non-finite
// reward.
ShapedGroup shape_group(std::span<const double> rewards, const ShapingParams& params);

// One-hot distribution on the first trajectory carrying the majority answer.
// Throws InvalidArgument when the group has no valid answer.
std::vector<double> one_hot_target(const RolloutGroup& group);

// KL(target || policy) = sum q log(q / p). Both inputs must sum to 1 within
// 1e-9 and policy must be positive wherever target is; otherwise throws
// InvalidArgument.
double kl_to_policy(std::span<const double> target, std::span<const double> policy_probs);

// A_k = R_k - mean(R): the plain group-mean baseline used by the
// non-distributional reward variants.
std::vector<double> mean_centered_advantages(std::span<const double> rewards);

}  // namespace selfevo
