#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "selfevo/error.hpp"
#include "selfevo/grpo.hpp"
#include "selfevo/shaping.hpp"

using namespace selfevo;

namespace {

PolicyTable make_policy(PolicyMode mode, std::uint64_t seed, double scale = 1.0) {
  std::vector<TaskVocabulary> v = {{"a", {"1", "2", "3"}}, {"b", {"4", "5"}}};
  auto p = mode == PolicyMode::categorical ? PolicyTable::categorical(v) : PolicyTable::sequence(v, 3);
  Rng rng(seed);
  for (auto& x : p.parameters()) x = scale * rng.normal();
  return p;
}

std::vector<ScoredGroup> make_batch(const PolicyTable& p, Rng& rng, std::size_t n = 6) {
  std::vector<ScoredGroup> batch;
  for (const char* task : {"a", "b"}) {
    ScoredGroup g;
    g.group = build_group(sample_group(p, task, n, rng));
    for (std::size_t k = 0; k < n; ++k) g.advantages.push_back(rng.normal());
    batch.push_back(std::move(g));
  }
  return batch;
}

void perturb(PolicyTable& p, Rng& rng, double scale) {
  for (auto& x : p.parameters()) x += scale * rng.normal();
}

}  // namespace

TEST(ClippedTerm, Examples) {
  EXPECT_DOUBLE_EQ(clipped_term(0.5, -1.0, 0.2), -0.8);
  EXPECT_DOUBLE_EQ(clipped_term(1.5, 1.0, 0.2), 1.2);
  EXPECT_DOUBLE_EQ(clipped_term(1.5, -1.0, 0.2), -1.5);
  EXPECT_DOUBLE_EQ(clipped_term(0.5, 1.0, 0.2), 0.5);
  EXPECT_DOUBLE_EQ(clipped_term(1.0, 0.7, 0.2), 0.7);
  EXPECT_THROW(clipped_term(0.0, 1.0, 0.2), InvalidArgument);
  EXPECT_THROW(clipped_term(NAN, 1.0, 0.2), NumericError);
}

TEST(ClippedTerm, MatchesOracleOnGrid) {
  for (int i = 1; i <= 40; ++i)
    for (int j = -10; j <= 10; ++j) {
      const double r = i / 20.0, a = j / 5.0;
      EXPECT_NEAR(clipped_term(r, a, 0.2), static_cast<double>(oracle::clipped(r, a, 0.2L)), 1e-15);
    }
}

TEST(LowVarKl, FrozenValues) {
  const std::vector<double> zero = {0.0};
  EXPECT_NEAR(kl_low_var(zero, std::vector<double>{oracle::kLn2}), oracle::kLowVarKlAtLn2, 1e-15);
  EXPECT_NEAR(kl_low_var(zero, std::vector<double>{-oracle::kLn2}), oracle::kLowVarKlAtMinusLn2, 1e-15);
  EXPECT_EQ(kl_low_var(zero, zero), 0.0);
}

TEST(LowVarKl, NonNegativeAndMatchesOracle) {
  Rng rng(1);
  for (int i = 0; i < 100000; ++i) {
    const double d = 10.0 * rng.normal();
    const double got = kl_low_var(std::vector<double>{0.0}, std::vector<double>{d});
    ASSERT_GE(got, 0.0) << d;
    if (std::abs(d) < 30) ASSERT_NEAR(got, static_cast<double>(oracle::low_var_kl(d)), 1e-12 * (1 + got));
  }
  for (double d : {1e-9, -1e-9, 1e-12}) EXPECT_GE(kl_low_var(std::vector<double>{0.0}, std::vector<double>{d}), 0.0);
}

TEST(EvaluateObjective, HandComputedSingleTrajectory) {
  auto cur = PolicyTable::categorical({{"q", {"1", "2"}}});
  auto old = cur, ref = cur;
  cur.logits(0)[0] = 0.4;
  ref.logits(0)[1] = 0.3;
  Rng rng(4);
  ScoredGroup g;
  g.group = build_group(sample_group(old, "q", 1, rng));
  g.advantages = {0.9};
  const std::size_t tok = static_cast<std::size_t>(g.group.trajectories[0].tokens[0]);

  auto lp = [](const PolicyTable& p, std::size_t i) {
    const auto z = p.logits(0);
    return std::log(static_cast<double>(oracle::softmax({z[0], z[1]})[i]));
  };
  const long double ratio = std::exp(static_cast<long double>(lp(cur, tok) - lp(old, tok)));
  const long double kl = oracle::low_var_kl(lp(ref, tok) - lp(cur, tok));
  GrpoConfig cfg;
  cfg.kl_beta = 0.05;
  const auto ev = evaluate_objective(cur, old, ref, std::span(&g, 1), cfg);
  EXPECT_NEAR(ev.surrogate, static_cast<double>(oracle::clipped(ratio, 0.9L, 0.2L)), 1e-14);
  EXPECT_NEAR(ev.kl, static_cast<double>(kl), 1e-14);
  EXPECT_NEAR(ev.objective, ev.surrogate - 0.05 * ev.kl, 1e-15);
}

TEST(EvaluateObjective, GradientMatchesFiniteDifference) {
  Rng rng(31);
  int checked = 0;
  for (int inst = 0; inst < 40; ++inst) {
    const auto mode = inst % 2 ? PolicyMode::sequence : PolicyMode::categorical;
    auto old = make_policy(mode, 100 + inst);
    auto ref = make_policy(mode, 200 + inst);
    const auto batch = make_batch(old, rng);
    auto cur = old;
    perturb(cur, rng, 0.05);
    GrpoConfig cfg;
    cfg.ratio_level = inst % 4 < 2 ? RatioLevel::token : RatioLevel::trajectory;
    cfg.kl_beta = inst % 3 ? 0.01 : 0.0;
    const auto ev = evaluate_objective(cur, old, ref, batch, cfg);
    const double h = 1e-6;
    for (std::size_t i = 0; i < cur.parameters().size(); ++i) {
      const double keep = cur.parameters()[i];
      cur.parameters()[i] = keep + h;
      const auto up = evaluate_objective(cur, old, ref, batch, cfg);
      cur.parameters()[i] = keep - h;
      const auto down = evaluate_objective(cur, old, ref, batch, cfg);
      cur.parameters()[i] = keep;
      if (up.clip_fraction != down.clip_fraction) continue;  // straddles a clip kink
      const double fd = (up.objective - down.objective) / (2 * h);
      EXPECT_NEAR(ev.gradient[i], fd, 1e-4 * std::max(1.0, std::abs(fd))) << "instance " << inst << " param " << i;
      ++checked;
    }
  }
  EXPECT_GT(checked, 500);
}

TEST(EvaluateObjective, ExactKlGradientMatchesFiniteDifference) {
  Rng rng(41);
  auto old = make_policy(PolicyMode::categorical, 1);
  auto ref = make_policy(PolicyMode::categorical, 2);
  const auto batch = make_batch(old, rng);
  auto cur = old;
  perturb(cur, rng, 0.05);
  GrpoConfig cfg;
  cfg.kl_estimator = KlEstimator::exact_on_candidates;
  cfg.kl_beta = 0.3;
  const auto ev = evaluate_objective(cur, old, ref, batch, cfg);
  for (std::size_t i = 0; i < cur.parameters().size(); ++i) {
    const double keep = cur.parameters()[i], h = 1e-6;
    cur.parameters()[i] = keep + h;
    const double up = evaluate_objective(cur, old, ref, batch, cfg).objective;
    cur.parameters()[i] = keep - h;
    const double down = evaluate_objective(cur, old, ref, batch, cfg).objective;
    cur.parameters()[i] = keep;
    EXPECT_NEAR(ev.gradient[i], (up - down) / (2 * h), 1e-7);
  }
}

TEST(GrpoStep, OnPolicyNeverClips) {
  Rng rng(5);
  auto p = make_policy(PolicyMode::sequence, 3);
  PolicySnapshot old(p), ref(p);
  const auto batch = make_batch(p, rng);
  const auto rep = grpo_step(p, old, ref, batch, GrpoConfig{});
  EXPECT_EQ(rep.clip_fraction, 0.0);
  EXPECT_EQ(rep.policy_version_after, 1u);
  EXPECT_EQ(old.version(), 1u);
}

TEST(GrpoStep, ZeroAdvantagesAndNoKlLeaveParametersUnchanged) {
  Rng rng(6);
  auto p = make_policy(PolicyMode::categorical, 4);
  const auto before = std::vector<double>(p.parameters().begin(), p.parameters().end());
  PolicySnapshot old(p), ref(p);
  auto batch = make_batch(p, rng);
  for (auto& g : batch) std::fill(g.advantages.begin(), g.advantages.end(), 0.0);
  GrpoConfig cfg;
  cfg.kl_beta = 0.0;
  grpo_step(p, old, ref, batch, cfg);
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_EQ(p.parameters()[i], before[i]);
}

TEST(GrpoStep, GradientNormIsClipped) {
  Rng rng(7);
  auto p = make_policy(PolicyMode::categorical, 5);
  const auto before = std::vector<double>(p.parameters().begin(), p.parameters().end());
  PolicySnapshot old(p), ref(p);
  auto batch = make_batch(p, rng);
  for (auto& g : batch)
    for (auto& a : g.advantages) a *= 100.0;
  GrpoConfig cfg;
  cfg.learning_rate = 1.0;
  cfg.max_grad_norm = 0.5;
  const auto rep = grpo_step(p, old, ref, batch, cfg);
  EXPECT_GT(rep.grad_norm_pre_clip, 0.5);
  double moved = 0.0;
  for (std::size_t i = 0; i < before.size(); ++i) moved += std::pow(p.parameters()[i] - before[i], 2);
  EXPECT_NEAR(std::sqrt(moved), 0.5, 1e-12);
}

TEST(GrpoStep, LargeBetaPullsTowardReference) {
  Rng rng(8);
  auto p = make_policy(PolicyMode::categorical, 6);
  const auto ref_table = make_policy(PolicyMode::categorical, 7);
  PolicySnapshot ref(ref_table);
  PolicySnapshot old(p);
  GrpoConfig cfg;
  cfg.kl_beta = 50.0;
  cfg.kl_estimator = KlEstimator::exact_on_candidates;
  cfg.max_grad_norm = 1e9;
  cfg.learning_rate = 0.01;
  const double kl0 = exact_policy_kl(p, ref_table, 0) + exact_policy_kl(p, ref_table, 1);
  for (int s = 0; s < 200; ++s) {
    auto batch = make_batch(p, rng);
    for (auto& g : batch) std::fill(g.advantages.begin(), g.advantages.end(), 0.0);
    grpo_step(p, old, ref, batch, cfg);
  }
  const double kl1 = exact_policy_kl(p, ref_table, 0) + exact_policy_kl(p, ref_table, 1);
  EXPECT_LT(kl1, 0.01 * kl0);
}

TEST(GrpoStep, RatioOverflowIsReported) {
  Rng rng(9);
  auto p = make_policy(PolicyMode::categorical, 8);
  auto batch = make_batch(p, rng);
  auto old_table = p;
  for (auto& x : old_table.logits(0)) x = 0.0;
  old_table.logits(0)[0] = -2000.0;
  auto cur = p;
  cur.logits(0)[0] = 0.0;
  for (auto& t : batch[0].group.trajectories) t.tokens = {0};
  try {
    evaluate_objective(cur, old_table, cur, batch, GrpoConfig{});
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("'a'"), std::string::npos) << e.what();
  }
}

TEST(GrpoConfig, Validation) {
  GrpoConfig cfg;
  cfg.clip_epsilon = 1.5;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  cfg = {};
  cfg.kl_beta = -1.0;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  cfg = {};
  cfg.learning_rate = 0.0;
  EXPECT_THROW(cfg.validate(), InvalidArgument);
}

TEST(FitToTarget, ReachesOneHotUniformAndShapedTargets) {
  std::vector<Trajectory> ts;
  for (const char* a : {"1", "2", "3"}) {
    Trajectory t;
    t.task_id = "q";
    t.tokens = {0};
    t.behavior_logprobs = {0.0};
    t.answer = a;
    ts.push_back(t);
  }
  const auto group = build_group(ts);
  const auto shaped = shape_group(std::vector<double>{1.0, 0.5, 0.0}, ShapingParams{});
  const std::vector<std::vector<double>> targets = {
      {1.0, 0.0, 0.0}, {1.0 / 3, 1.0 / 3, 1.0 / 3}, shaped.target_dist};
  for (const auto& target : targets) {
    auto p = PolicyTable::categorical({{"q", {"1", "2", "3", "4"}}});
    const auto fit = fit_to_target(p, group, target, 10000, 0.1);
    EXPECT_LT(fit.final_kl, 1e-6);
    if (target[1] > 0)
      for (int i = 0; i < 3; ++i) EXPECT_NEAR(fit.restricted[i], target[i], 1e-4);
  }
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(shaped.target_dist[i], oracle::kQ_1_05_0[i], 1e-15);
}

TEST(FitToTarget, RejectsBadTargets) {
  Trajectory t;
  t.task_id = "q";
  t.tokens = {0};
  t.behavior_logprobs = {0.0};
  t.answer = "1";
  const auto group = build_group({t, t});
  auto p = PolicyTable::categorical({{"q", {"1", "2"}}});
  EXPECT_THROW(fit_to_target(p, group, std::vector<double>{0.5}, 10, 0.1), InvalidArgument);
  EXPECT_THROW(fit_to_target(p, group, std::vector<double>{0.5, 0.6}, 10, 0.1), InvalidArgument);
  EXPECT_THROW(fit_to_target(p, group, std::vector<double>{1.5, -0.5}, 10, 0.1), InvalidArgument);
}
