#pragma once

// Reference values and straightforward long-double re-derivations used as test
// oracles. Nothing here calls into the library.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace oracle {

// Frozen from 50-digit evaluation.
inline constexpr double kG095 = 1.0268271182021601;
inline constexpr double kG100 = 1.0316307405420012;
inline constexpr double kG000 = 0.93603943237294;
inline constexpr double kRewardValid = 0.38506016932581005;     // sc=0.375, g(0.95), delta=0
inline constexpr double kRewardViolated = -0.11493983067418995; // same, delta=1, lambda_fmt=0.5
inline constexpr double kLse_1_05_0 = 1.6802696706417346;
inline constexpr double kAdv_1_05_0[3] = {-0.68026967064173458, -1.1802696706417346, -1.6802696706417346};
inline constexpr double kQ_1_05_0[3] = {0.50648039105565403, 0.30719588571849840, 0.18632372322584758};
inline constexpr double kLn8 = 2.0794415416798359;
inline constexpr double kLn2 = 0.69314718055994531;
inline constexpr double kEntropy_75_25 = 0.56233514461880835;
inline constexpr double kLowVarKlAtLn2 = 0.30685281944005469;
inline constexpr double kLowVarKlAtMinusLn2 = 0.19314718055994531;

inline long double sigmoid(long double x) { return 1.0L / (1.0L + std::exp(-x)); }

inline long double calibrate(long double s, long double lp = 0.2L, long double lm = 0.2L, long double th = 0.95L,
                             long double tl = 0.40L, long double tauh = 1.0L, long double taul = 1.0L) {
  return 1.0L + lp * sigmoid((s - th) / tauh) - lm * sigmoid((tl - s) / taul);
}

// Only safe for moderate inputs; that is the point of keeping it naive.
inline long double naive_lse(const std::vector<double>& x) {
  long double sum = 0.0L;
  for (double v : x) sum += std::exp(static_cast<long double>(v));
  return std::log(sum);
}

inline std::vector<long double> softmax(const std::vector<double>& x, long double alpha = 1.0L) {
  long double m = -INFINITY;
  for (double v : x) m = std::max(m, alpha * v);
  std::vector<long double> out;
  long double z = 0.0L;
  for (double v : x) {
    out.push_back(std::exp(alpha * v - m));
    z += out.back();
  }
  for (auto& p : out) p /= z;
  return out;
}

inline long double entropy(const std::vector<long double>& p) {
  long double h = 0.0L;
  for (auto v : p)
    if (v > 0.0L) h -= v * std::log(v);
  return h;
}

inline long double low_var_kl(long double d) { return std::exp(d) - d - 1.0L; }

inline long double clipped(long double r, long double a, long double eps) {
  const long double c = std::clamp(r, 1.0L - eps, 1.0L + eps);
  return std::min(r * a, c * a);
}

// Self-consistency reward by brute-force counting; nullopt marks a violation.
inline std::vector<double> sc(const std::vector<std::optional<std::string>>& answers) {
  std::vector<double> out;
  for (const auto& a : answers) {
    if (!a) {
      out.push_back(0.0);
      continue;
    }
    int c = 0;
    for (const auto& b : answers) c += b && *b == *a;
    out.push_back(static_cast<double>(c) / static_cast<double>(answers.size()));
  }
  return out;
}

}  // namespace oracle
