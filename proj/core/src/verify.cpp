#include "selfevo/verify.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

#include "selfevo/grpo.hpp"
#include "selfevo/judge.hpp"
#include "selfevo/policy.hpp"
#include "selfevo/rng.hpp"
#include "selfevo/shaping.hpp"

namespace selfevo {
namespace {

constexpr std::uint64_t kVerifySeed = 0x5eed'2026;

ShapedGroup shape(std::span<const double> rewards, const ShapingParams& params, Fault fault) {
  ShapedGroup g = shape_group(rewards, params);
  if (fault == Fault::flip_lse_sign)
    for (std::size_t k = 0; k < g.size(); ++k) g.advantages[k] = g.scaled_rewards[k] + g.baseline;
  return g;
}

// Softmax without max-subtraction; only used on bounded inputs.
std::vector<double> naive_softmax(std::span<const double> x) {
  std::vector<double> e(x.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) sum += (e[i] = std::exp(x[i]));
  for (auto& v : e) v /= sum;
  return e;
}

std::vector<double> random_rewards(Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<double> r(n);
  for (auto& v : r) v = lo + (hi - lo) * rng.uniform();
  return r;
}

PropertyResult check(std::string name, double measured, double threshold, std::string detail = {}) {
  return PropertyResult{std::move(name), measured < threshold, measured, threshold, std::move(detail)};
}

double rel_error(std::span<const double> a, std::span<const double> b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), 1e-8});
}

std::vector<TaskVocabulary> small_vocab(Rng& rng, std::size_t tasks) {
  std::vector<TaskVocabulary> v;
  for (std::size_t t = 0; t < tasks; ++t) {
    TaskVocabulary tv{"t" + std::to_string(t), {}};
    const std::size_t k = 2 + static_cast<std::size_t>(rng.next_u64() % 4);
    for (std::size_t a = 0; a < k; ++a) tv.answers.push_back(std::to_string(a));
    v.push_back(std::move(tv));
  }
  return v;
}

PolicyTable random_policy(Rng& rng, bool sequence, double scale) {
  auto vocab = small_vocab(rng, 2);
  const int len = 1 + static_cast<int>(rng.next_u64() % 3);
  PolicyTable p = sequence ? PolicyTable::sequence(std::move(vocab), len) : PolicyTable::categorical(std::move(vocab));
  for (auto& v : p.parameters()) v = scale * rng.normal();
  return p;
}

void perturb(PolicyTable& p, Rng& rng, double scale) {
  for (auto& v : p.parameters()) v += scale * rng.normal();
}

std::vector<double> fd_log_prob(PolicyTable p, const Trajectory& traj, double h) {
  std::vector<double> g(p.parameters().size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double x = p.parameters()[i];
    p.parameters()[i] = x + h;
    const double up = log_prob(p, traj).total;
    p.parameters()[i] = x - h;
    const double down = log_prob(p, traj).total;
    p.parameters()[i] = x;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// True when some ratio sits within `margin` of a clip boundary, where the
// objective has a kink and central differences are meaningless.
bool near_kink(const PolicyTable& cur, const PolicyTable& old, std::span<const ScoredGroup> batch,
               const GrpoConfig& cfg, double margin) {
  for (const auto& g : batch)
    for (const auto& t : g.group.trajectories) {
      const auto a = log_prob(cur, t), b = log_prob(old, t);
      std::vector<double> lr;
      if (cfg.ratio_level == RatioLevel::token) {
        for (std::size_t i = 0; i < a.per_token.size(); ++i) lr.push_back(a.per_token[i] - b.per_token[i]);
      } else {
        lr.push_back(a.total - b.total);
      }
      for (double l : lr) {
        const double r = std::exp(l);
        if (std::abs(r - (1.0 + cfg.clip_epsilon)) < margin || std::abs(r - (1.0 - cfg.clip_epsilon)) < margin)
          return true;
      }
    }
  return false;
}

std::vector<PropertyResult> shaping_properties(Fault fault) {
  std::vector<PropertyResult> out;
  Rng rng(derive_seed(kVerifySeed, {1}));
  const double alphas[] = {0.25, 1.0, 4.0};
  double worst_identity = 0.0, worst_norm = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = 2 + static_cast<std::size_t>(rng.next_u64() % 15);
    const ShapingParams params{alphas[i % 3], 0.5};
    const auto r = random_rewards(rng, n, -2.0, 2.0);
    const auto g = shape(r, params, fault);
    std::vector<double> scaled(n);
    for (std::size_t k = 0; k < n; ++k) scaled[k] = params.alpha * r[k];
    const auto q = naive_softmax(scaled);
    double sum_exp = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      worst_identity = std::max(worst_identity, std::abs(g.advantages[k] - std::log(q[k])));
      sum_exp += std::exp(g.advantages[k]);
    }
    worst_norm = std::max(worst_norm, std::abs(sum_exp - 1.0));
  }
  out.push_back(check("advantage_equals_log_target", worst_identity, 1e-10, "1000 random groups"));
  out.push_back(check("advantage_normalization", worst_norm, 1e-10, "|sum exp(A) - 1|"));

  double worst_shift = 0.0;
  for (int i = 0; i < 100; ++i) {
    const std::size_t n = 2 + static_cast<std::size_t>(rng.next_u64() % 15);
    const ShapingParams params{alphas[i % 3], 0.5};
    auto r = random_rewards(rng, n, -2.0, 2.0);
    const double c = -50.0 + 100.0 * rng.uniform();
    const auto a = shape(r, params, fault);
    for (auto& v : r) v += c;
    const auto b = shape(r, params, fault);
    for (std::size_t k = 0; k < n; ++k) worst_shift = std::max(worst_shift, std::abs(a.advantages[k] - b.advantages[k]));
  }
  out.push_back(check("advantage_shift_invariance", worst_shift, 1e-10, "100 random (group, c) pairs"));

  {
    const double big[] = {1000.0, 999.0, 998.0}, small[] = {2.0, 1.0, 0.0};
    const auto a = shape(big, {}, fault), b = shape(small, {}, fault);
    double worst = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
      const double e = std::abs(a.advantages[k] - b.advantages[k]);
      worst = std::max(worst, std::isfinite(e) ? e : INFINITY);
    }
    out.push_back(check("lse_large_reward_stability", worst, 1e-9, "[1000,999,998] vs [2,1,0]"));
  }

  {
    const double r[] = {1.0, 0.4, 0.1, -0.3};
    double prev = 0.0, prev_adv = -INFINITY;
    bool increasing = true;
    double q64 = 0.0;
    for (double alpha : {1.0, 4.0, 16.0, 64.0}) {
      const auto g = shape(r, ShapingParams{alpha, 0.5}, fault);
      const double q = std::exp(g.advantages[0]);
      increasing = increasing && q > prev && g.advantages[0] > prev_adv && g.advantages[0] <= 0.0;
      prev = q;
      prev_adv = g.advantages[0];
      q64 = q;
    }
    PropertyResult p = check("sharpening_limit", 1.0 - q64, 1e-3, "q(argmax) over alpha in {1,4,16,64}, gap 0.6");
    p.passed = p.passed && increasing;
    out.push_back(p);
  }

  {
    // Soft target keeps entropy, one-hot does not.
    RolloutGroup group;
    group.task_id = "t";
    for (const char* a : {"1", "1", "2"}) {
      Trajectory t;
      t.task_id = "t";
      t.answer = a;
      group.trajectories.push_back(t);
      ++group.answer_counts[a];
    }
    group.group_size = 3;
    const double r[] = {0.9, 0.9, 0.3};
    const double h_soft = entropy_of(shape(r, {}, fault).target_dist);
    const double h_hard = entropy_of(one_hot_target(group));
    PropertyResult p{"one_hot_vs_soft_entropy", h_hard == 0.0 && h_soft > 0.0, h_soft, 0.0,
                     "one-hot entropy " + std::to_string(h_hard)};
    out.push_back(p);
  }
  return out;
}

std::vector<PropertyResult> calibration_properties() {
  std::vector<PropertyResult> out;
  Rng rng(derive_seed(kVerifySeed, {2}));
  std::vector<CalibrationParams> sets{CalibrationParams{}};
  for (int i = 0; i < 100; ++i) {
    CalibrationParams p;
    p.lambda_plus = 0.01 + 0.99 * rng.uniform();
    p.lambda_minus = 0.01 + 0.98 * rng.uniform();
    const double a = rng.uniform(), b = rng.uniform();
    p.t_low = std::min(a, b);
    p.t_high = std::max(a, b);
    p.tau_high = 0.02 + 2.0 * rng.uniform();
    p.tau_low = 0.02 + 2.0 * rng.uniform();
    sets.push_back(p);
  }
  constexpr int kGrid = 10000;
  long violations = 0;
  double worst_lipschitz = 0.0;
  for (const auto& p : sets) {
    double prev = -INFINITY;
    const double lip = p.lambda_plus / (4.0 * p.tau_high) + p.lambda_minus / (4.0 * p.tau_low);
    for (int i = 0; i <= kGrid; ++i) {
      const double s = static_cast<double>(i) / kGrid;
      const double g = calibrate(s, p);
      if (g < prev) ++violations;
      if (!(g > 1.0 - p.lambda_minus && g < 1.0 + p.lambda_plus)) ++violations;
      if (i > 0) worst_lipschitz = std::max(worst_lipschitz, std::abs(g - prev) - lip * (1.0 / kGrid));
      prev = g;
    }
  }
  out.push_back(check("calibration_monotone_bounded", static_cast<double>(violations), 0.5,
                      "defaults + 100 random parameter sets on a 1e4 grid"));
  out.push_back(check("calibration_lipschitz", worst_lipschitz, 1e-12, "excess over sigmoid-slope bound"));

  const CalibrationParams d;
  const double e1 = std::abs(calibrate(0.95, d) - 1.0268271182021601);
  const double e2 = std::abs(calibrate(1.0, d) - 1.0316307405420012);
  out.push_back(check("calibration_reference_values", std::max(e1, e2), 1e-5, "g(0.95), g(1.0) at defaults"));
  return out;
}

std::vector<PropertyResult> kl_properties() {
  std::vector<PropertyResult> out;
  Rng rng(derive_seed(kVerifySeed, {3}));
  double most_negative = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double cur = -10.0 * rng.uniform(), ref = -10.0 * rng.uniform();
    most_negative = std::min(most_negative, kl_low_var(std::span(&cur, 1), std::span(&ref, 1)));
  }
  out.push_back(check("low_var_kl_nonnegative", -most_negative, 1e-15, "1e5 random log-ratio draws"));

  const double zero = 0.0, ln2 = std::log(2.0);
  out.push_back(check("low_var_kl_reference_value",
                      std::abs(kl_low_var(std::span(&zero, 1), std::span(&ln2, 1)) - 0.30685281944005469), 1e-6,
                      "d = ln 2"));

  double worst = -INFINITY;
  for (int i = 0; i <= 1000; ++i) {
    const double dd = -0.5 + i / 1000.0;
    const double est = kl_low_var(std::span(&zero, 1), std::span(&dd, 1));
    worst = std::max(worst, std::abs(est - dd * dd / 2.0) - std::abs(dd * dd * dd));
  }
  out.push_back(check("low_var_kl_second_order", worst, 1e-15, "|est - d^2/2| - |d|^3 on |d| <= 0.5"));
  return out;
}

std::vector<PropertyResult> gradient_properties() {
  std::vector<PropertyResult> out;
  Rng rng(derive_seed(kVerifySeed, {4}));
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    PolicyTable p = random_policy(rng, i % 2 == 1, 1.0);
    const auto& task = p.task(rng.next_u64() % p.task_count()).task_id;
    const auto trajs = sample_group(p, task, 1, rng);
    worst = std::max(worst, rel_error(grad_log_prob(p, trajs[0]), fd_log_prob(p, trajs[0], 1e-5)));
  }
  out.push_back(check("grad_log_prob_finite_difference", worst, 1e-5, "100 random policies, step 1e-5"));

  double worst_obj = 0.0;
  int built = 0;
  while (built < 50) {
    const bool seq = built % 2 == 1;
    PolicyTable cur = random_policy(rng, seq, 1.0);
    PolicyTable old = cur, ref = cur;
    perturb(old, rng, 0.3);
    perturb(ref, rng, 0.5);
    GrpoConfig cfg;
    cfg.ratio_level = (built / 2) % 2 == 0 ? RatioLevel::token : RatioLevel::trajectory;
    cfg.kl_beta = (built / 4) % 2 == 0 ? 0.0 : 0.01;
    std::vector<ScoredGroup> batch;
    for (std::size_t t = 0; t < cur.task_count(); ++t) {
      ScoredGroup sg{build_group(sample_group(old, cur.task(t).task_id, 4, rng)), {}};
      for (std::size_t k = 0; k < 4; ++k) sg.advantages.push_back(rng.normal());
      batch.push_back(std::move(sg));
    }
    if (near_kink(cur, old, batch, cfg, 1e-3)) continue;
    ++built;
    const auto ev = evaluate_objective(cur, old, ref, batch, cfg);
    std::vector<double> fd(ev.gradient.size());
    const double h = 1e-5;
    for (std::size_t i = 0; i < fd.size(); ++i) {
      const double x = cur.parameters()[i];
      cur.parameters()[i] = x + h;
      const double up = evaluate_objective(cur, old, ref, batch, cfg).objective;
      cur.parameters()[i] = x - h;
      const double down = evaluate_objective(cur, old, ref, batch, cfg).objective;
      cur.parameters()[i] = x;
      fd[i] = (up - down) / (2.0 * h);
    }
    worst_obj = std::max(worst_obj, rel_error(ev.gradient, fd));
  }
  out.push_back(check("grpo_objective_finite_difference", worst_obj, 1e-4,
                      "50 instances, both ratio levels, beta in {0, 0.01}"));
  return out;
}

std::vector<PropertyResult> fit_properties() {
  std::vector<PropertyResult> out;
  auto make_group = [](std::initializer_list<const char*> answers) {
    std::vector<Trajectory> ts;
    for (const char* a : answers) {
      Trajectory t;
      t.task_id = "fit";
      t.tokens = {std::stoi(a)};
      t.behavior_logprobs = {0.0};
      t.answer = a;
      ts.push_back(t);
    }
    return build_group(std::move(ts));
  };
  const auto group = make_group({"0", "1", "2"});
  const double r[] = {1.0, 0.5, 0.0};
  const std::vector<std::vector<double>> targets = {
      {1.0, 0.0, 0.0}, {1.0 / 3, 1.0 / 3, 1.0 / 3}, shape(r, {}, Fault::none).target_dist};
  // The reference softmax of [1, 0.5, 0] used to judge the fit.
  const std::vector<double> reference = {0.50648039105565403, 0.30719588571849840, 0.18632372322584758};
  double worst_kl = 0.0, worst_component = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    PolicyTable p = PolicyTable::categorical({{"fit", {"0", "1", "2", "3"}}});
    const auto fit = fit_to_target(p, group, targets[i], 10000, 0.1);
    worst_kl = std::max(worst_kl, fit.final_kl);
    const auto& expect = i == 2 ? reference : targets[i];
    for (std::size_t k = 0; k < 3; ++k) worst_component = std::max(worst_component, std::abs(fit.restricted[k] - expect[k]));
  }
  out.push_back(check("fit_to_target_kl", worst_kl, 1e-6, "one-hot, uniform, softmax([1,0.5,0]); 1e4 steps"));
  out.push_back(check("fit_to_target_matches_target", worst_component, 1e-4, "componentwise"));
  return out;
}

}  // namespace

std::vector<PropertyResult> run_verification(Fault fault) {
  std::vector<PropertyResult> all;
  for (auto part : {shaping_properties(fault), calibration_properties(), kl_properties(), gradient_properties(),
                    fit_properties()})
    all.insert(all.end(), part.begin(), part.end());
  return all;
}

int cli_verify(Fault fault, std::ostream& out) {
  const auto results = run_verification(fault);
  bool ok = true;
  for (const auto& r : results) {
    ok = ok && r.passed;
    out << (r.passed ? "PASS " : "FAIL ") << std::left << std::setw(36) << r.name << " measured=" << std::scientific
        << std::setprecision(3) << r.measured << " bound=" << r.threshold << std::defaultfloat;
    if (!r.detail.empty()) out << "  (" << r.detail << ")";
    out << '\n';
  }
  out << (ok ? "all properties passed" : "verification FAILED") << '\n';
  return ok ? 0 : 1;
}

}  // namespace selfevo
