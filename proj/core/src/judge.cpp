#include "selfevo/judge.hpp"

#include <algorithm>
#include <cmath>

#include "selfevo/error.hpp"

namespace selfevo {
namespace {

double clamp01(double x) noexcept { return std::clamp(x, 0.0, 1.0); }

}  // namespace

JudgeScore JudgeScore::from_components(double correctness, double reasoning, double grounding) {
  JudgeScore s;
  s.answer_correctness = clamp01(correctness);
  s.reasoning_quality = clamp01(reasoning);
  s.visual_grounding = clamp01(grounding);
  s.overall = kWeightAnswerCorrectness * s.answer_correctness + kWeightReasoningQuality * s.reasoning_quality +
              kWeightVisualGrounding * s.visual_grounding;
  return s;
}

void CalibrationParams::validate(bool allow_zero_caps) const {
  auto finite = [](double v) { return std::isfinite(v); };
  if (!finite(lambda_plus) || !finite(lambda_minus) || !finite(t_high) || !finite(t_low) || !finite(tau_high) ||
      !finite(tau_low))
    throw InvalidArgument("calibration parameters must be finite");
  const bool caps_ok = allow_zero_caps ? (lambda_plus >= 0.0 && lambda_minus >= 0.0)
                                       : (lambda_plus > 0.0 && lambda_minus > 0.0);
  if (!caps_ok) throw InvalidArgument("calibration caps lambda_plus/lambda_minus must be positive");
  if (t_high < 0.0 || t_high > 1.0 || t_low < 0.0 || t_low > 1.0)
    throw InvalidArgument("calibration gates t_high/t_low must lie in [0, 1]");
  if (t_low > t_high) throw InvalidArgument("calibration requires t_low <= t_high");
  if (tau_high <= 0.0 || tau_low <= 0.0) throw InvalidArgument("calibration smoothness tau_high/tau_low must be positive");
}

double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double calibrate(double s, const CalibrationParams& p) {
  if (!(s >= 0.0 && s <= 1.0)) throw InvalidArgument("uncalibrated judge output: score outside [0, 1]");
  return 1.0 + p.lambda_plus * sigmoid((s - p.t_high) / p.tau_high) -
         p.lambda_minus * sigmoid((p.t_low - s) / p.tau_low);
}

void SimJudgeConfig::validate() const {
  if (!(reliability >= 0.0 && reliability <= 1.0)) throw InvalidArgument("judge reliability must lie in [0, 1]");
  if (!(noise_scale >= 0.0) || !std::isfinite(noise_scale)) throw InvalidArgument("judge noise_scale must be >= 0");
  for (const auto& [task, bias] : bias_map)
    if (!std::isfinite(bias.inflation)) throw InvalidArgument("judge bias for task '" + task + "' is not finite");
}

JudgeScore judge_trajectory(const Trajectory& traj, const std::string& truth, const SimJudgeConfig& config, Rng& rng) {
  if (traj.format_violation || !traj.answer) return JudgeScore{};

  const bool correct = *traj.answer == truth;
  const bool faithful = rng.uniform() < config.reliability;
  const double center = (correct == faithful) ? 1.0 : 0.0;

  double inflation = 0.0;
  if (auto it = config.bias_map.find(traj.task_id); it != config.bias_map.end() && it->second.answer == *traj.answer)
    inflation = it->second.inflation;

  const double c = center + config.noise_scale * rng.normal() + inflation;
  const double r = center + config.noise_scale * rng.normal() + inflation;
  const double g = center + config.noise_scale * rng.normal() + inflation;
  return JudgeScore::from_components(c, r, g);
}

}  // namespace selfevo
