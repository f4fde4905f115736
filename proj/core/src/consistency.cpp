#include "selfevo/consistency.hpp"

#include "selfevo/error.hpp"

namespace selfevo {

std::size_t RolloutGroup::valid_count() const noexcept {
  std::size_t n = 0;
  for (const auto& [answer, count] : answer_counts) n += static_cast<std::size_t>(count);
  return n;
}

RolloutGroup build_group(std::vector<Trajectory> trajectories) {
  if (trajectories.empty()) throw InvalidArgument("malformed rollout batch: no trajectories");

  RolloutGroup group;
  group.task_id = trajectories.front().task_id;
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const auto& t = trajectories[i];
    if (t.task_id != group.task_id)
      throw InvalidArgument("malformed rollout batch: trajectory " + std::to_string(i) + " has task '" + t.task_id +
                            "', expected '" + group.task_id + "'");
    if (t.answer.has_value() == t.format_violation)
      throw InvalidArgument("trajectory " + std::to_string(i) + ": answer must be present iff the format is valid");
    if (t.answer) ++group.answer_counts[*t.answer];
  }
  group.group_size = trajectories.size();
  group.trajectories = std::move(trajectories);
  return group;
}

std::vector<double> sc_rewards(const RolloutGroup& group) {
  const double n = static_cast<double>(group.group_size);
  std::vector<double> rewards;
  rewards.reserve(group.trajectories.size());
  for (const auto& t : group.trajectories)
    rewards.push_back(t.answer ? group.answer_counts.at(*t.answer) / n : 0.0);
  return rewards;
}

std::optional<std::string> majority_answer(const RolloutGroup& group) {
  const std::string* best = nullptr;
  int best_count = 0;
  // std::map iterates in lexicographic order, so strict '>' keeps the
  // smallest answer on ties.
  for (const auto& [answer, count] : group.answer_counts) {
    if (count > best_count) {
      best = &answer;
      best_count = count;
    }
  }
  if (!best) return std::nullopt;
  return *best;
}

std::optional<std::size_t> majority_index(const RolloutGroup& group) {
  const auto winner = majority_answer(group);
  if (!winner) return std::nullopt;
  for (std::size_t i = 0; i < group.trajectories.size(); ++i)
    if (group.trajectories[i].answer == winner) return i;
  return std::nullopt;
}

MajorityVote mv_rewards(const RolloutGroup& group) {
  MajorityVote vote;
  vote.answer = majority_answer(group);
  vote.rewards.reserve(group.trajectories.size());
  for (const auto& t : group.trajectories)
    vote.rewards.push_back(vote.answer && t.answer == vote.answer ? 1.0 : 0.0);
  return vote;
}

double mean_sc_reward(const RolloutGroup& group) {
  const auto r = sc_rewards(group);
  double sum = 0.0;
  for (double v : r) sum += v;
  return sum / static_cast<double>(r.size());
}

}  // namespace selfevo
