#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "selfevo/error.hpp"
#include "selfevo/judge.hpp"

using namespace selfevo;

TEST(Calibrate, FrozenReferenceValues) {
  const CalibrationParams p;
  EXPECT_NEAR(calibrate(0.95, p), oracle::kG095, 1e-15);
  EXPECT_NEAR(calibrate(1.0, p), oracle::kG100, 1e-15);
  EXPECT_NEAR(calibrate(0.0, p), oracle::kG000, 1e-14);
}

TEST(Calibrate, MatchesLongDoubleOracleOnGrid) {
  const CalibrationParams p;
  for (int i = 0; i <= 1000; ++i) {
    const double s = i / 1000.0;
    EXPECT_NEAR(calibrate(s, p), static_cast<double>(oracle::calibrate(s)), 1e-14) << s;
  }
}

TEST(Calibrate, MonotoneAndBoundedForRandomParams) {
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    CalibrationParams p;
    p.lambda_plus = 0.01 + 0.5 * rng.uniform();
    p.lambda_minus = 0.01 + 0.5 * rng.uniform();
    p.t_low = rng.uniform();
    p.t_high = p.t_low + (1.0 - p.t_low) * rng.uniform();
    p.tau_high = 0.01 + 2.0 * rng.uniform();
    p.tau_low = 0.01 + 2.0 * rng.uniform();
    p.validate();
    double prev = -INFINITY;
    for (int i = 0; i <= 2000; ++i) {
      const double g = calibrate(i / 2000.0, p);
      ASSERT_GE(g, prev);
      ASSERT_GT(g, 1.0 - p.lambda_minus);
      ASSERT_LT(g, 1.0 + p.lambda_plus);
      prev = g;
    }
  }
}

TEST(Calibrate, ZeroCapsGiveIdentityFactor) {
  CalibrationParams p;
  p.lambda_plus = p.lambda_minus = 0.0;
  EXPECT_THROW(p.validate(), InvalidArgument);
  p.validate(true);
  for (double s : {0.0, 0.3, 1.0}) EXPECT_EQ(calibrate(s, p), 1.0);
}

TEST(Calibrate, RejectsOutOfRangeScores) {
  const CalibrationParams p;
  EXPECT_THROW(calibrate(1.2, p), InvalidArgument);
  EXPECT_THROW(calibrate(-0.01, p), InvalidArgument);
  EXPECT_THROW(calibrate(std::nan(""), p), InvalidArgument);
}

TEST(Calibrate, InvalidParams) {
  CalibrationParams p;
  p.t_low = 0.9;
  p.t_high = 0.5;
  EXPECT_THROW(p.validate(), InvalidArgument);
  p = {};
  p.tau_high = 0.0;
  EXPECT_THROW(p.validate(), InvalidArgument);
}

TEST(JudgeScore, WeightedOverall) {
  const auto s = JudgeScore::from_components(1.0, 0.5, 0.0);
  EXPECT_DOUBLE_EQ(s.overall, 0.65);
  const auto clamped = JudgeScore::from_components(1.7, -0.2, 0.4);
  EXPECT_DOUBLE_EQ(clamped.answer_correctness, 1.0);
  EXPECT_DOUBLE_EQ(clamped.reasoning_quality, 0.0);
  EXPECT_DOUBLE_EQ(clamped.overall, 0.5 + 0.2 * 0.4);
}

TEST(SimJudge, ViolationScoresZeroWithoutConsumingRandomness) {
  Trajectory t;
  t.task_id = "q";
  t.format_violation = true;
  Rng a(3), b(3);
  const auto s = judge_trajectory(t, "1", SimJudgeConfig{}, a);
  EXPECT_EQ(s.overall, 0.0);
  EXPECT_EQ(s.answer_correctness, 0.0);
  EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(SimJudge, ReliabilityOneNoNoiseIsExact) {
  SimJudgeConfig cfg;
  cfg.reliability = 1.0;
  cfg.noise_scale = 0.0;
  Trajectory t;
  t.task_id = "q";
  t.answer = "4";
  Rng rng(1);
  EXPECT_DOUBLE_EQ(judge_trajectory(t, "4", cfg, rng).overall, 1.0);
  EXPECT_DOUBLE_EQ(judge_trajectory(t, "5", cfg, rng).overall, 0.0);
  cfg.reliability = 0.0;
  EXPECT_DOUBLE_EQ(judge_trajectory(t, "4", cfg, rng).overall, 0.0);
}

TEST(SimJudge, BiasInflatesMatchingAnswerOnly) {
  SimJudgeConfig cfg;
  cfg.reliability = 1.0;
  cfg.noise_scale = 0.0;
  cfg.bias_map["q"] = JudgeBias{"5", 0.7};
  Trajectory t;
  t.task_id = "q";
  t.answer = "5";
  Rng rng(1);
  EXPECT_NEAR(judge_trajectory(t, "4", cfg, rng).overall, 0.7, 1e-15);
  t.answer = "6";
  EXPECT_DOUBLE_EQ(judge_trajectory(t, "4", cfg, rng).overall, 0.0);
  t.task_id = "other";
  t.answer = "5";
  EXPECT_DOUBLE_EQ(judge_trajectory(t, "4", cfg, rng).overall, 0.0);
}

TEST(SimJudge, ReliabilityControlsAgreementRate) {
  SimJudgeConfig cfg;
  cfg.reliability = 0.7;
  cfg.noise_scale = 0.0;
  Trajectory t;
  t.task_id = "q";
  t.answer = "1";
  Rng rng(8);
  int high = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) high += judge_trajectory(t, "1", cfg, rng).overall > 0.5;
  EXPECT_NEAR(high / static_cast<double>(n), 0.7, 4.0 * std::sqrt(0.21 / n));
}
