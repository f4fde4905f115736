#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace selfevo {

// Why an actor output failed the output contract
//   <think>...</think>\boxed{ANSWER}
enum class ViolationReason {
  none,
  missing_think_block,
  text_outside_tags,
  no_boxed,
  multiple_boxed,
  empty_boxed,
};

std::string_view to_string(ViolationReason reason) noexcept;
std::optional<ViolationReason> parse_violation_reason(std::string_view name) noexcept;

struct ExtractionResult {
  std::optional<std::string> answer;  // present iff !format_violation
  bool format_violation = false;
  ViolationReason reason = ViolationReason::none;
};

// Parses an actor output. Exactly one <think>...</think> block must come
// first (only whitespace before it), followed by exactly one \boxed{...}
// with non-empty, brace-balanced content and nothing but whitespace around
// it. \boxed inside the think block is reasoning text and is ignored.
// Never throws; violations are reported in the result.
ExtractionResult extract_answer(std::string_view text);

// Lexical answer normalization used for answer equality:
//  - trim and collapse internal whitespace runs to one space,
//  - strip redundant outer brace pairs ("{A}" -> "A"),
//  - normalize plain decimal literals ("+4" -> "4", "007" -> "7",
//    "4.0" -> "4", ".5" -> "0.5", "0.50" -> "0.5", "-0" -> "0").
// No arithmetic is evaluated, so "1/2" and "0.5" stay distinct.
// Idempotent.
std::string canonicalize(std::string_view answer_text);

// Renders an answer through the conforming actor template. extract_answer on
// the result returns canonicalize(answer).
std::string render_conforming(std::string_view reasoning, std::string_view answer);

}  // namespace selfevo
