#include "selfevo/answer_format.hpp"

#include <array>
#include <cctype>

namespace selfevo {
namespace {

constexpr std::string_view kThinkOpen = "<think>";
constexpr std::string_view kThinkClose = "</think>";
constexpr std::string_view kBoxed = "\\boxed{";

bool is_space(char c) noexcept { return std::isspace(static_cast<unsigned char>(c)) != 0; }

bool all_space(std::string_view s) noexcept {
  for (char c : s)
    if (!is_space(c)) return false;
  return true;
}

std::string_view trim(std::string_view s) noexcept {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::size_t count_occurrences(std::string_view hay, std::string_view needle) noexcept {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string_view::npos; pos = hay.find(needle, pos + needle.size())) ++n;
  return n;
}

// Index one past the brace that closes the '{' at `open`, or npos.
std::size_t match_brace(std::string_view s, std::size_t open) noexcept {
  int depth = 0;
  for (std::size_t i = open; i < s.size(); ++i) {
    if (s[i] == '{') {
      ++depth;
    } else if (s[i] == '}') {
      if (--depth == 0) return i + 1;
    }
  }
  return std::string_view::npos;
}

std::string collapse_whitespace(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char c : trim(s)) {
    if (is_space(c)) {
      pending_space = true;
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

// Strips one outer brace pair when the leading '{' closes at the very end and
// something non-blank remains inside.
bool strip_outer_braces(std::string& s) {
  if (s.size() < 2 || s.front() != '{' || s.back() != '}') return false;
  if (match_brace(s, 0) != s.size()) return false;
  std::string_view inner(s.data() + 1, s.size() - 2);
  if (all_space(inner)) return false;
  s = std::string(inner);
  return true;
}

bool is_digit(char c) noexcept { return c >= '0' && c <= '9'; }

// Plain decimal literal: [+-]? (digits [. digits?] | . digits)
std::optional<std::string> normalize_number(std::string_view s) {
  if (s.empty()) return std::nullopt;
  bool negative = false;
  if (s.front() == '+' || s.front() == '-') {
    negative = s.front() == '-';
    s.remove_prefix(1);
  }
  const auto dot = s.find('.');
  std::string_view int_part = s.substr(0, dot);
  std::string_view frac_part = dot == std::string_view::npos ? std::string_view{} : s.substr(dot + 1);
  if (int_part.empty() && frac_part.empty()) return std::nullopt;
  for (char c : int_part)
    if (!is_digit(c)) return std::nullopt;
  for (char c : frac_part)
    if (!is_digit(c)) return std::nullopt;

  while (int_part.size() > 1 && int_part.front() == '0') int_part.remove_prefix(1);
  while (!frac_part.empty() && frac_part.back() == '0') frac_part.remove_suffix(1);

  std::string out;
  out += int_part.empty() ? std::string_view("0") : int_part;
  if (!frac_part.empty()) {
    out += '.';
    out += frac_part;
  }
  if (negative && out != "0") out.insert(out.begin(), '-');
  return out;
}

}  // namespace

std::string_view to_string(ViolationReason reason) noexcept {
  switch (reason) {
    case ViolationReason::none: return "none";
    case ViolationReason::missing_think_block: return "missing_think_block";
    case ViolationReason::text_outside_tags: return "text_outside_tags";
    case ViolationReason::no_boxed: return "no_boxed";
    case ViolationReason::multiple_boxed: return "multiple_boxed";
    case ViolationReason::empty_boxed: return "empty_boxed";
  }
  return "unknown";
}

std::optional<ViolationReason> parse_violation_reason(std::string_view name) noexcept {
  constexpr std::array all = {ViolationReason::none,           ViolationReason::missing_think_block,
                              ViolationReason::text_outside_tags, ViolationReason::no_boxed,
                              ViolationReason::multiple_boxed, ViolationReason::empty_boxed};
  for (auto r : all)
    if (to_string(r) == name) return r;
  return std::nullopt;
}

ExtractionResult extract_answer(std::string_view text) {
  auto violation = [](ViolationReason r) { return ExtractionResult{std::nullopt, true, r}; };

  const auto open = text.find(kThinkOpen);
  const auto close = text.find(kThinkClose);
  if (open == std::string_view::npos || close == std::string_view::npos || close < open)
    return violation(ViolationReason::missing_think_block);
  if (count_occurrences(text, kThinkOpen) > 1 || count_occurrences(text, kThinkClose) > 1)
    return violation(ViolationReason::text_outside_tags);

  const std::string_view tail = text.substr(close + kThinkClose.size());

  const auto first_box = tail.find(kBoxed);
  if (first_box == std::string_view::npos) return violation(ViolationReason::no_boxed);
  const auto box_end = match_brace(tail, first_box + kBoxed.size() - 1);
  if (box_end == std::string_view::npos) return violation(ViolationReason::no_boxed);
  if (tail.find(kBoxed, box_end) != std::string_view::npos) return violation(ViolationReason::multiple_boxed);

  const std::size_t content_begin = first_box + kBoxed.size();
  const std::string_view content = tail.substr(content_begin, box_end - 1 - content_begin);
  if (all_space(content)) return violation(ViolationReason::empty_boxed);

  if (!all_space(text.substr(0, open)) || !all_space(tail.substr(0, first_box)) || !all_space(tail.substr(box_end)))
    return violation(ViolationReason::text_outside_tags);

  std::string answer = canonicalize(content);
  if (answer.empty()) return violation(ViolationReason::empty_boxed);
  return ExtractionResult{std::move(answer), false, ViolationReason::none};
}

std::string canonicalize(std::string_view answer_text) {
  std::string s = collapse_whitespace(answer_text);
  while (strip_outer_braces(s)) s = collapse_whitespace(s);
  if (auto number = normalize_number(s)) return *number;
  return s;
}

std::string render_conforming(std::string_view reasoning, std::string_view answer) {
  std::string out;
  out.reserve(reasoning.size() + answer.size() + 32);
  out += kThinkOpen;
  out += reasoning;
  out += kThinkClose;
  out += kBoxed;
  out += answer;
  out += '}';
  return out;
}

}  // namespace selfevo
