#include <gtest/gtest.h>

#include "oracles.hpp"
#include "selfevo/consistency.hpp"
#include "selfevo/error.hpp"
#include "selfevo/rng.hpp"

using namespace selfevo;

namespace {

Trajectory traj(const std::string& task, std::optional<std::string> answer) {
  Trajectory t;
  t.task_id = task;
  t.tokens = {0};
  t.behavior_logprobs = {0.0};
  t.format_violation = !answer.has_value();
  t.answer = std::move(answer);
  return t;
}

RolloutGroup group_of(const std::vector<std::optional<std::string>>& answers) {
  std::vector<Trajectory> ts;
  for (const auto& a : answers) ts.push_back(traj("q", a));
  return build_group(std::move(ts));
}

}  // namespace

TEST(SelfConsistency, SpecExampleGroup) {
  // 3 x A, 2 x B, 3 x C
  const auto g = group_of({"A", "A", "A", "B", "B", "C", "C", "C"});
  const auto r = sc_rewards(g);
  EXPECT_DOUBLE_EQ(r[0], 0.375);
  EXPECT_DOUBLE_EQ(r[3], 0.25);
  EXPECT_DOUBLE_EQ(mean_sc_reward(g), 0.34375);
  EXPECT_EQ(majority_answer(g), "A");  // A and C tie, lexicographic
  EXPECT_EQ(majority_index(g), 0u);
  const auto mv = mv_rewards(g);
  EXPECT_EQ(mv.answer, "A");
  EXPECT_EQ(mv.rewards, (std::vector<double>{1, 1, 1, 0, 0, 0, 0, 0}));
}

TEST(SelfConsistency, ViolationsCountInDenominatorOnly) {
  const auto g = group_of({"7", std::nullopt, "7", std::nullopt});
  EXPECT_EQ(g.group_size, 4u);
  EXPECT_EQ(g.valid_count(), 2u);
  EXPECT_EQ(sc_rewards(g), (std::vector<double>{0.5, 0.0, 0.5, 0.0}));
  EXPECT_EQ(mv_rewards(g).rewards, (std::vector<double>{1, 0, 1, 0}));
}

TEST(SelfConsistency, AllViolatedGroup) {
  const auto g = group_of({std::nullopt, std::nullopt});
  EXPECT_EQ(sc_rewards(g), (std::vector<double>{0.0, 0.0}));
  EXPECT_FALSE(majority_answer(g).has_value());
  EXPECT_FALSE(majority_index(g).has_value());
  EXPECT_FALSE(mv_rewards(g).answer.has_value());
  EXPECT_EQ(mv_rewards(g).rewards, (std::vector<double>{0.0, 0.0}));
}

TEST(SelfConsistency, MatchesCountingOracleOnRandomGroups) {
  Rng rng(5);
  const std::vector<std::string> vocab = {"1", "2", "3", "4"};
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng.next_u64() % 16;
    std::vector<std::optional<std::string>> answers;
    for (std::size_t i = 0; i < n; ++i) {
      if (rng.uniform() < 0.15)
        answers.push_back(std::nullopt);
      else
        answers.push_back(vocab[rng.next_u64() % vocab.size()]);
    }
    const auto g = group_of(answers);
    const auto got = sc_rewards(g);
    const auto want = oracle::sc(answers);
    ASSERT_EQ(got.size(), want.size());
    double sum_sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_DOUBLE_EQ(got[i], want[i]);
      sum_sq += want[i];
    }
    EXPECT_NEAR(mean_sc_reward(g), sum_sq / static_cast<double>(n), 1e-12);

    // MV rewards are binary and select exactly the trajectories with the top count.
    const auto mv = mv_rewards(g);
    const double top = *std::max_element(want.begin(), want.end());
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_TRUE(mv.rewards[i] == 0.0 || mv.rewards[i] == 1.0);
      if (mv.rewards[i] == 1.0) EXPECT_DOUBLE_EQ(want[i], top);
    }
  }
}

TEST(BuildGroup, RejectsMalformedBatches) {
  EXPECT_THROW(build_group({}), InvalidArgument);
  EXPECT_THROW(build_group({traj("a", "1"), traj("b", "1")}), InvalidArgument);
  auto bad = traj("a", "1");
  bad.format_violation = true;
  EXPECT_THROW(build_group({bad}), InvalidArgument);
}
