#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "selfevo/consistency.hpp"
#include "selfevo/rng.hpp"

namespace selfevo {

enum class PolicyMode { categorical, sequence };

std::string_view to_string(PolicyMode mode) noexcept;

// Answer vocabulary of one task. Answers must already be canonical.
struct TaskVocabulary {
  std::string task_id;
  std::vector<std::string> answers;
};

// Tabular actor policy.
//
// categorical: one logit row of size K per task; a trajectory is a single
//   token, the index of the chosen answer.
// sequence: max_length rows of size K + 1 per task. Token K is the end
//   token; it is masked out at position 0, so every sequence carries at least
//   one answer token. Rows depend on position only. Generation stops after
//   the end token or at max_length; the answer is the last non-end token.
//   With max_length == 1 this is exactly the categorical policy.
//
// All rows live in one flat parameter vector so gradients are flat vectors of
// the same size. Probabilities are softmax(logits / temperature).
class PolicyTable {
public:
  static PolicyTable categorical(std::vector<TaskVocabulary> tasks, double temperature = 1.0);
  static PolicyTable sequence(std::vector<TaskVocabulary> tasks, int max_length, double temperature = 1.0);

  PolicyMode mode() const noexcept { return mode_; }
  int max_length() const noexcept { return max_length_; }
  double temperature() const noexcept { return temperature_; }
  std::uint64_t version() const noexcept { return version_; }
  void set_version(std::uint64_t v) noexcept { version_ = v; }
  void bump_version() noexcept { ++version_; }

  std::size_t task_count() const noexcept { return tasks_.size(); }
  const TaskVocabulary& task(std::size_t index) const { return tasks_.at(index); }
  bool has_task(const std::string& task_id) const { return index_.contains(task_id); }
  // Throws InvalidArgument for an unknown task.
  std::size_t task_index(const std::string& task_id) const;

  std::size_t answer_count(std::size_t task) const { return tasks_.at(task).answers.size(); }
  // Row width: K (categorical) or K + 1 (sequence).
  std::size_t token_count(std::size_t task) const;
  int end_token(std::size_t task) const { return static_cast<int>(answer_count(task)); }
  // Number of decision rows per task.
  int positions() const noexcept { return mode_ == PolicyMode::categorical ? 1 : max_length_; }

  std::span<double> logits(std::size_t task, int position = 0);
  std::span<const double> logits(std::size_t task, int position = 0) const;
  std::size_t row_offset(std::size_t task, int position = 0) const;

  std::span<double> parameters() noexcept { return params_; }
  std::span<const double> parameters() const noexcept { return params_; }

  // Token distribution at a position (end token has zero mass at position 0).
  std::vector<double> token_probabilities(std::size_t task, int position = 0) const;
  // Exact marginal distribution over the task's answers.
  std::vector<double> answer_distribution(std::size_t task) const;

  // Throws InvalidArgument when any logit is non-finite.
  void check_finite() const;

private:
  PolicyTable(PolicyMode mode, std::vector<TaskVocabulary> tasks, int max_length, double temperature);

  PolicyMode mode_;
  int max_length_;
  double temperature_;
  std::uint64_t version_ = 0;
  std::vector<TaskVocabulary> tasks_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
};

// Frozen copy of a policy (behavior or reference).
class PolicySnapshot {
public:
  explicit PolicySnapshot(const PolicyTable& policy) : table_(policy), version_(policy.version()) {}

  const PolicyTable& table() const noexcept { return table_; }
  std::uint64_t version() const noexcept { return version_; }

private:
  PolicyTable table_;
  std::uint64_t version_;
};

struct SampleOptions {
  // Probability that a rendered trajectory breaks the output contract.
  double malform_prob = 0.0;
};

// n independent trajectories for a task. Each trajectory's text is rendered
// through the actor template and parsed back with extract_answer, so answer
// and format flag come from the extractor. Throws InvalidArgument for an
// unknown task or n == 0.
std::vector<Trajectory> sample_group(const PolicyTable& policy, const std::string& task_id, std::size_t n, Rng& rng,
                                     const SampleOptions& options = {});

struct LogProb {
  double total = 0.0;
  std::vector<double> per_token;
};

// Exact log-probability of a trajectory's tokens. Throws InvalidArgument for
// out-of-vocabulary tokens, an end token in an illegal place, or an unknown
// task.
LogProb log_prob(const PolicyTable& policy, const Trajectory& traj);

// Gradient of log pi(traj) w.r.t. all policy parameters (flat layout).
std::vector<double> grad_log_prob(const PolicyTable& policy, const Trajectory& traj);

// Adds weight_t * d/dtheta log pi(token_t) into `grad` for every token t.
// `token_weights` has one entry per token.
void accumulate_token_grads(const PolicyTable& policy, const Trajectory& traj, std::span<const double> token_weights,
                            std::span<double> grad);

struct EntropyEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

// Exact entropy (nats) of the task's trajectory distribution. In sequence
// mode the rows are position-only, so the chain rule gives the exact value
// H = sum_t P(reach t) H_t for any max_length; std_error is always 0.
EntropyEstimate entropy(const PolicyTable& policy, const std::string& task_id);

// Exact expected number of generated tokens (end token included).
double expected_response_length(const PolicyTable& policy, const std::string& task_id);

// Versioned plain-text checkpoint format; see README for the layout.
std::string serialize_policy(const PolicyTable& policy);
// Throws InvalidArgument on malformed input.
PolicyTable deserialize_policy(std::string_view text);

void save_policy(const PolicyTable& policy, const std::filesystem::path& path);
PolicyTable load_policy(const std::filesystem::path& path);

}  // namespace selfevo
