#include "selfevo/policy.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "selfevo/answer_format.hpp"
#include "selfevo/error.hpp"
#include "selfevo/shaping.hpp"

namespace selfevo {
namespace {

constexpr std::string_view kFormatMagic = "selfevo-policy";
constexpr int kFormatVersion = 1;

void validate_tasks(const std::vector<TaskVocabulary>& tasks) {
  if (tasks.empty()) throw InvalidArgument("policy needs at least one task");
  for (const auto& t : tasks) {
    if (t.task_id.empty() || t.task_id.find_first_of(" \t\r\n") != std::string::npos)
      throw InvalidArgument("task id must be non-empty and contain no whitespace: '" + t.task_id + "'");
    if (t.answers.empty()) throw InvalidArgument("task '" + t.task_id + "' has an empty answer vocabulary");
    for (std::size_t i = 0; i < t.answers.size(); ++i) {
      const auto& a = t.answers[i];
      const auto parsed = extract_answer(render_conforming("", a));
      if (a.empty() || canonicalize(a) != a || !parsed.answer || *parsed.answer != a)
        throw InvalidArgument("task '" + t.task_id + "': answer '" + a + "' is not a canonical renderable answer");
      for (std::size_t j = 0; j < i; ++j)
        if (t.answers[j] == a) throw InvalidArgument("task '" + t.task_id + "': duplicate answer '" + a + "'");
    }
  }
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw InvalidArgument("policy text: bad number '" + std::string(s) + "'");
  return v;
}

template <typename Int>
Int parse_int(std::string_view s) {
  Int v{};
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw InvalidArgument("policy text: bad integer '" + std::string(s) + "'");
  return v;
}

// Log-probabilities of a row; masked entries are -inf.
std::vector<double> log_softmax_row(const PolicyTable& policy, std::size_t task, int position) {
  const auto row = policy.logits(task, position);
  const double inv_t = 1.0 / policy.temperature();
  const bool mask_end = policy.mode() == PolicyMode::sequence && position == 0;
  const std::size_t end = static_cast<std::size_t>(policy.end_token(task));

  std::vector<double> scaled(row.size());
  for (std::size_t i = 0; i < row.size(); ++i)
    scaled[i] = (mask_end && i == end) ? -std::numeric_limits<double>::infinity() : row[i] * inv_t;
  const double lse = log_sum_exp(scaled);
  for (auto& v : scaled) v -= lse;
  return scaled;
}

void validate_tokens(const PolicyTable& policy, std::size_t task, const Trajectory& traj) {
  const auto& tokens = traj.tokens;
  const int k = static_cast<int>(policy.answer_count(task));
  if (policy.mode() == PolicyMode::categorical) {
    if (tokens.size() != 1) throw InvalidArgument("categorical trajectory must have exactly one token");
    if (tokens[0] < 0 || tokens[0] >= k) throw InvalidArgument("token out of vocabulary");
    return;
  }
  const std::size_t max_len = static_cast<std::size_t>(policy.max_length());
  if (tokens.empty() || tokens.size() > max_len) throw InvalidArgument("sequence trajectory length out of range");
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    if (tokens[t] < 0 || tokens[t] > k) throw InvalidArgument("token out of vocabulary");
    const bool is_end = tokens[t] == k;
    if (is_end && (t == 0 || t + 1 != tokens.size()))
      throw InvalidArgument("end token only allowed as the final token after position 0");
  }
  if (tokens.back() != k && tokens.size() != max_len)
    throw InvalidArgument("sequence trajectory stops before max_length without an end token");
}

std::string render_malformed(int kind, std::string_view reasoning, std::string_view answer) {
  const std::string think = "<think>" + std::string(reasoning) + "</think>";
  const std::string box = "\\boxed{" + std::string(answer) + "}";
  switch (kind) {
    case 0: return box;                                    // missing think block
    case 1: return think + " the answer is " + std::string(answer);  // no boxed
    case 2: return think + box + box;                      // multiple boxed
    case 3: return think + box + " done";                  // text outside tags
    default: return think + "\\boxed{}";                   // empty boxed
  }
}

}  // namespace

std::string_view to_string(PolicyMode mode) noexcept {
  return mode == PolicyMode::categorical ? "categorical" : "sequence";
}

PolicyTable::PolicyTable(PolicyMode mode, std::vector<TaskVocabulary> tasks, int max_length, double temperature)
    : mode_(mode), max_length_(max_length), temperature_(temperature), tasks_(std::move(tasks)) {
  validate_tasks(tasks_);
  if (!(temperature_ > 0.0) || !std::isfinite(temperature_)) throw InvalidArgument("temperature must be positive");
  if (max_length_ < 1) throw InvalidArgument("max_length must be >= 1");
  std::size_t offset = 0;
  for (std::size_t i = 0; i < tasks_.size(); ++i) {
    if (!index_.emplace(tasks_[i].task_id, i).second)
      throw InvalidArgument("duplicate task id '" + tasks_[i].task_id + "'");
    offsets_.push_back(offset);
    offset += token_count(i) * static_cast<std::size_t>(positions());
  }
  params_.assign(offset, 0.0);
}

PolicyTable PolicyTable::categorical(std::vector<TaskVocabulary> tasks, double temperature) {
  return PolicyTable(PolicyMode::categorical, std::move(tasks), 1, temperature);
}

PolicyTable PolicyTable::sequence(std::vector<TaskVocabulary> tasks, int max_length, double temperature) {
  return PolicyTable(PolicyMode::sequence, std::move(tasks), max_length, temperature);
}

std::size_t PolicyTable::task_index(const std::string& task_id) const {
  auto it = index_.find(task_id);
  if (it == index_.end()) throw InvalidArgument("unknown task '" + task_id + "'");
  return it->second;
}

std::size_t PolicyTable::token_count(std::size_t task) const {
  return answer_count(task) + (mode_ == PolicyMode::sequence ? 1 : 0);
}

std::size_t PolicyTable::row_offset(std::size_t task, int position) const {
  if (position < 0 || position >= positions()) throw InvalidArgument("position out of range");
  return offsets_.at(task) + static_cast<std::size_t>(position) * token_count(task);
}

std::span<double> PolicyTable::logits(std::size_t task, int position) {
  return std::span<double>(params_).subspan(row_offset(task, position), token_count(task));
}

std::span<const double> PolicyTable::logits(std::size_t task, int position) const {
  return std::span<const double>(params_).subspan(row_offset(task, position), token_count(task));
}

std::vector<double> PolicyTable::token_probabilities(std::size_t task, int position) const {
  auto lp = log_softmax_row(*this, task, position);
  for (auto& v : lp) v = std::exp(v);
  return lp;
}

std::vector<double> PolicyTable::answer_distribution(std::size_t task) const {
  const std::size_t k = answer_count(task);
  if (mode_ == PolicyMode::categorical) return token_probabilities(task, 0);

  std::vector<double> dist(k, 0.0);
  double reach = 1.0;
  for (int t = 0; t < max_length_; ++t) {
    const auto p = token_probabilities(task, t);
    const double stop_after = (t + 1 == max_length_) ? 1.0 : token_probabilities(task, t + 1)[k];
    for (std::size_t a = 0; a < k; ++a) dist[a] += reach * p[a] * stop_after;
    reach *= 1.0 - p[k];
  }
  return dist;
}

void PolicyTable::check_finite() const {
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (!std::isfinite(params_[i])) throw NumericError("policy parameter " + std::to_string(i) + " is not finite");
}

std::vector<Trajectory> sample_group(const PolicyTable& policy, const std::string& task_id, std::size_t n, Rng& rng,
                                     const SampleOptions& options) {
  if (n == 0) throw InvalidArgument("sample_group: group size must be >= 1");
  const std::size_t task = policy.task_index(task_id);
  const auto& answers = policy.task(task).answers;
  const int end = policy.end_token(task);

  std::vector<std::vector<double>> log_rows;
  std::vector<std::vector<double>> prob_rows;
  for (int t = 0; t < policy.positions(); ++t) {
    log_rows.push_back(log_softmax_row(policy, task, t));
    prob_rows.push_back(policy.token_probabilities(task, t));
  }

  std::vector<Trajectory> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Trajectory traj;
    traj.task_id = task_id;
    for (int t = 0; t < policy.positions(); ++t) {
      const int tok = static_cast<int>(rng.categorical(prob_rows[static_cast<std::size_t>(t)]));
      traj.tokens.push_back(tok);
      traj.behavior_logprobs.push_back(log_rows[static_cast<std::size_t>(t)][static_cast<std::size_t>(tok)]);
      if (policy.mode() == PolicyMode::sequence && tok == end) break;
    }

    int answer_token = traj.tokens.back();
    if (answer_token == end) answer_token = traj.tokens[traj.tokens.size() - 2];
    std::string reasoning;
    for (std::size_t t = 0; t < traj.tokens.size(); ++t) {
      if (t) reasoning += ' ';
      reasoning += 't' + std::to_string(traj.tokens[t]);
    }
    const std::string& answer = answers[static_cast<std::size_t>(answer_token)];

    const bool malformed = rng.uniform() < options.malform_prob;
    if (malformed) {
      traj.text = render_malformed(static_cast<int>(rng.next_u64() % 5), reasoning, answer);
    } else {
      traj.text = render_conforming(reasoning, answer);
    }
    auto parsed = extract_answer(traj.text);
    traj.answer = std::move(parsed.answer);
    traj.format_violation = parsed.format_violation;
    out.push_back(std::move(traj));
  }
  return out;
}

LogProb log_prob(const PolicyTable& policy, const Trajectory& traj) {
  const std::size_t task = policy.task_index(traj.task_id);
  validate_tokens(policy, task, traj);
  LogProb lp;
  lp.per_token.reserve(traj.tokens.size());
  for (std::size_t t = 0; t < traj.tokens.size(); ++t) {
    const auto row = log_softmax_row(policy, task, static_cast<int>(t));
    const double v = row[static_cast<std::size_t>(traj.tokens[t])];
    lp.per_token.push_back(v);
    lp.total += v;
  }
  return lp;
}

void accumulate_token_grads(const PolicyTable& policy, const Trajectory& traj, std::span<const double> token_weights,
                            std::span<double> grad) {
  const std::size_t task = policy.task_index(traj.task_id);
  validate_tokens(policy, task, traj);
  if (token_weights.size() != traj.tokens.size()) throw InvalidArgument("token weight count mismatch");
  if (grad.size() != policy.parameters().size()) throw InvalidArgument("gradient buffer size mismatch");
  const double inv_t = 1.0 / policy.temperature();
  for (std::size_t t = 0; t < traj.tokens.size(); ++t) {
    const double w = token_weights[t];
    if (w == 0.0) continue;
    const int pos = static_cast<int>(t);
    const auto p = policy.token_probabilities(task, pos);
    const std::size_t off = policy.row_offset(task, pos);
    const auto tok = static_cast<std::size_t>(traj.tokens[t]);
    for (std::size_t i = 0; i < p.size(); ++i) grad[off + i] += w * inv_t * ((i == tok ? 1.0 : 0.0) - p[i]);
  }
}

std::vector<double> grad_log_prob(const PolicyTable& policy, const Trajectory& traj) {
  std::vector<double> grad(policy.parameters().size(), 0.0);
  const std::vector<double> ones(traj.tokens.size(), 1.0);
  accumulate_token_grads(policy, traj, ones, grad);
  return grad;
}

EntropyEstimate entropy(const PolicyTable& policy, const std::string& task_id) {
  const std::size_t task = policy.task_index(task_id);
  if (policy.mode() == PolicyMode::categorical) return {entropy_of(policy.token_probabilities(task, 0)), 0.0};
  const auto end = static_cast<std::size_t>(policy.end_token(task));
  double h = 0.0, reach = 1.0;
  for (int t = 0; t < policy.max_length(); ++t) {
    const auto p = policy.token_probabilities(task, t);
    h += reach * entropy_of(p);
    reach *= 1.0 - p[end];
  }
  return {h, 0.0};
}

double expected_response_length(const PolicyTable& policy, const std::string& task_id) {
  const std::size_t task = policy.task_index(task_id);
  if (policy.mode() == PolicyMode::categorical) return 1.0;
  const auto end = static_cast<std::size_t>(policy.end_token(task));
  double len = 0.0, reach = 1.0;
  for (int t = 0; t < policy.max_length(); ++t) {
    len += reach;
    reach *= 1.0 - policy.token_probabilities(task, t)[end];
  }
  return len;
}

std::string serialize_policy(const PolicyTable& policy) {
  std::ostringstream os;
  os << kFormatMagic << ' ' << kFormatVersion << '\n';
  os << "mode " << to_string(policy.mode()) << '\n';
  os << "temperature " << format_double(policy.temperature()) << '\n';
  os << "max_length " << policy.max_length() << '\n';
  os << "version " << policy.version() << '\n';
  os << "tasks " << policy.task_count() << '\n';
  for (std::size_t i = 0; i < policy.task_count(); ++i) {
    const auto& t = policy.task(i);
    os << "task " << t.task_id << '\n';
    os << "answers " << t.answers.size() << '\n';
    for (const auto& a : t.answers) os << a << '\n';
    for (int pos = 0; pos < policy.positions(); ++pos) {
      os << "logits";
      for (double v : policy.logits(i, pos)) os << ' ' << format_double(v);
      os << '\n';
    }
  }
  os << "end\n";
  return os.str();
}

namespace {

class LineReader {
public:
  explicit LineReader(std::string_view text) : text_(text) {}

  std::string_view next() {
    if (pos_ >= text_.size()) throw InvalidArgument("policy text: unexpected end of input at line " + std::to_string(line_));
    auto nl = text_.find('\n', pos_);
    if (nl == std::string_view::npos) nl = text_.size();
    std::string_view line = text_.substr(pos_, nl - pos_);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos_ = nl + 1;
    ++line_;
    return line;
  }

  // Reads "key value" and returns value.
  std::string_view field(std::string_view key) {
    auto line = next();
    if (line.size() <= key.size() || line.substr(0, key.size()) != key || line[key.size()] != ' ')
      throw InvalidArgument("policy text line " + std::to_string(line_) + ": expected '" + std::string(key) + "'");
    return line.substr(key.size() + 1);
  }

private:
  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 0;
};

std::vector<double> split_numbers(std::string_view s) {
  std::vector<double> out;
  while (!s.empty()) {
    auto sp = s.find(' ');
    out.push_back(parse_double(s.substr(0, sp)));
    if (sp == std::string_view::npos) break;
    s.remove_prefix(sp + 1);
  }
  return out;
}

}  // namespace

PolicyTable deserialize_policy(std::string_view text) {
  LineReader in(text);
  const auto header = in.next();
  if (header != std::string(kFormatMagic) + ' ' + std::to_string(kFormatVersion))
    throw InvalidArgument("policy text: unsupported header '" + std::string(header) + "'");

  const auto mode_name = in.field("mode");
  PolicyMode mode;
  if (mode_name == "categorical") {
    mode = PolicyMode::categorical;
  } else if (mode_name == "sequence") {
    mode = PolicyMode::sequence;
  } else {
    throw InvalidArgument("policy text: unknown mode '" + std::string(mode_name) + "'");
  }
  const double temperature = parse_double(in.field("temperature"));
  const int max_length = parse_int<int>(in.field("max_length"));
  const auto version = parse_int<std::uint64_t>(in.field("version"));
  const auto ntasks = parse_int<std::size_t>(in.field("tasks"));

  std::vector<TaskVocabulary> tasks;
  std::vector<std::vector<std::vector<double>>> rows;
  const int npos = mode == PolicyMode::categorical ? 1 : max_length;
  for (std::size_t i = 0; i < ntasks; ++i) {
    TaskVocabulary vocab;
    vocab.task_id = std::string(in.field("task"));
    const auto nanswers = parse_int<std::size_t>(in.field("answers"));
    for (std::size_t a = 0; a < nanswers; ++a) vocab.answers.emplace_back(in.next());
    auto& task_rows = rows.emplace_back();
    for (int pos = 0; pos < npos; ++pos) task_rows.push_back(split_numbers(in.field("logits")));
    tasks.push_back(std::move(vocab));
  }
  if (in.next() != "end") throw InvalidArgument("policy text: missing 'end' marker");

  PolicyTable policy = mode == PolicyMode::categorical ? PolicyTable::categorical(std::move(tasks), temperature)
                                                       : PolicyTable::sequence(std::move(tasks), max_length, temperature);
  for (std::size_t i = 0; i < ntasks; ++i) {
    for (int pos = 0; pos < npos; ++pos) {
      const auto& src = rows[i][static_cast<std::size_t>(pos)];
      auto dst = policy.logits(i, pos);
      if (src.size() != dst.size())
        throw InvalidArgument("policy text: task " + policy.task(i).task_id + " logit row has wrong width");
      std::copy(src.begin(), src.end(), dst.begin());
    }
  }
  policy.set_version(version);
  policy.check_finite();
  return policy;
}

void save_policy(const PolicyTable& policy, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << serialize_policy(policy);
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

PolicyTable load_policy(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_policy(ss.str());
}

}  // namespace selfevo
