#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace selfevo {

// One sampled candidate for a task.
struct Trajectory {
  std::string task_id;
  std::vector<int> tokens;
  std::vector<double> behavior_logprobs;  // nats, one per token
  std::string text;                       // rendered actor output
  std::optional<std::string> answer;      // canonical; present iff !format_violation
  bool format_violation = false;

  std::size_t length() const noexcept { return tokens.size(); }
};

// The n trajectories sampled for one task and the tally of their valid
// answers. Invalid (format-violating) trajectories count toward group_size
// but never appear in answer_counts.
struct RolloutGroup {
  std::string task_id;
  std::vector<Trajectory> trajectories;
  std::map<std::string, int> answer_counts;  // ordered: ties resolve lexicographically
  std::size_t group_size = 0;

  std::size_t valid_count() const noexcept;
};

// Throws InvalidArgument on an empty batch, mixed task ids, or a trajectory
// whose answer presence disagrees with its format flag.
RolloutGroup build_group(std::vector<Trajectory> trajectories);

// r_i = c(a_i) / n for valid trajectories, 0 for invalid ones.
std::vector<double> sc_rewards(const RolloutGroup& group);

struct MajorityVote {
  std::vector<double> rewards;          // 1 for trajectories carrying `answer`, else 0
  std::optional<std::string> answer;    // absent when the group has no valid answer
};

// Majority answer (ties -> lexicographically smallest) and binary rewards.
MajorityVote mv_rewards(const RolloutGroup& group);

// Mean of sc_rewards; equals sum_a p(a)^2 when every trajectory is valid.
double mean_sc_reward(const RolloutGroup& group);

// Majority answer under the same tie rule, or nullopt.
std::optional<std::string> majority_answer(const RolloutGroup& group);

// Index of the first trajectory carrying the majority answer, or nullopt.
std::optional<std::size_t> majority_index(const RolloutGroup& group);

}  // namespace selfevo
