#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "selfevo/consistency.hpp"
#include "selfevo/rng.hpp"

namespace selfevo {

// Sub-score weights of the judge's overall score.
inline constexpr double kWeightAnswerCorrectness = 0.50;
inline constexpr double kWeightReasoningQuality = 0.30;
inline constexpr double kWeightVisualGrounding = 0.20;

struct JudgeScore {
  double answer_correctness = 0.0;
  double reasoning_quality = 0.0;
  double visual_grounding = 0.0;
  double overall = 0.0;

  // Builds a score from clamped sub-scores with the weighted overall.
  static JudgeScore from_components(double correctness, double reasoning, double grounding);
};

// Parameters of the bounded modulation g(s). Defaults are the reference
// training configuration.
struct CalibrationParams {
  double lambda_plus = 0.2;
  double lambda_minus = 0.2;
  double t_high = 0.95;
  double t_low = 0.40;
  double tau_high = 1.0;
  double tau_low = 1.0;

  // Throws InvalidArgument. Zero caps are accepted only when allow_zero_caps.
  void validate(bool allow_zero_caps = false) const;
};

double sigmoid(double x) noexcept;

// g(s) = 1 + l+ * sigmoid((s - t_h) / tau_h) - l- * sigmoid((t_l - s) / tau_l).
// Throws InvalidArgument when s is outside [0, 1] or not finite.
double calibrate(double s, const CalibrationParams& params);

// Systematic misjudgment: the judge inflates every sub-score of `answer` on
// the task by `inflation` before clamping.
struct JudgeBias {
  std::string answer;
  double inflation = 0.0;
};

// Stand-in for the frozen judge in simulation.
struct SimJudgeConfig {
  double reliability = 0.9;  // probability the scores track true correctness
  double noise_scale = 0.1;  // std-dev of additive per-component noise
  std::map<std::string, JudgeBias> bias_map;  // keyed by task id
  std::uint64_t seed = 0;

  void validate() const;
};

// Validity rule: a trajectory without a single well-formed answer scores all
// zeros. Otherwise each sub-score is centred on 1 (correct) or 0 (wrong),
// with the centring inverted with probability 1 - reliability, plus clamped
// Gaussian noise and any configured bias. Consumes exactly one uniform and
// three normals from `rng` for valid trajectories, none for invalid ones.
JudgeScore judge_trajectory(const Trajectory& traj, const std::string& truth, const SimJudgeConfig& config, Rng& rng);

}  // namespace selfevo
