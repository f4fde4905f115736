#include <gtest/gtest.h>

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "selfevo/answer_format.hpp"
#include "selfevo/policy.hpp"

using namespace selfevo;

namespace {

struct CorpusCase {
  int line = 0;
  std::string reason;
  std::string expected;
  std::string text;
};

std::string unescape(const std::string& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && i + 1 < s.size() && (s[i + 1] == 'n' || s[i + 1] == 't')) {
      out += s[i + 1] == 'n' ? '\n' : '\t';
      ++i;
    } else {
      out += s[i];
    }
  }
  return out;
}

std::vector<CorpusCase> load_corpus() {
  std::ifstream in(SELFEVO_TEST_DATA_DIR "/extraction_corpus.txt");
  std::vector<CorpusCase> cases;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty() || line[0] == '#') continue;
    const auto t1 = line.find('\t');
    const auto t2 = line.find('\t', t1 + 1);
    cases.push_back({n, line.substr(0, t1), line.substr(t1 + 1, t2 - t1 - 1), unescape(line.substr(t2 + 1))});
  }
  return cases;
}

}  // namespace

TEST(ExtractAnswer, GoldenCorpus) {
  const auto cases = load_corpus();
  ASSERT_GE(cases.size(), 40u);
  std::vector<int> seen(6, 0);
  for (const auto& c : cases) {
    SCOPED_TRACE("corpus line " + std::to_string(c.line));
    const auto want = parse_violation_reason(c.reason);
    ASSERT_TRUE(want.has_value()) << c.reason;
    ++seen[static_cast<int>(*want)];
    const auto got = extract_answer(c.text);
    EXPECT_EQ(got.reason, *want);
    EXPECT_EQ(got.format_violation, *want != ViolationReason::none);
    if (*want == ViolationReason::none) {
      ASSERT_TRUE(got.answer.has_value());
      EXPECT_EQ(*got.answer, c.expected);
    } else {
      EXPECT_FALSE(got.answer.has_value());
    }
  }
  for (int r = 0; r < 6; ++r) EXPECT_GT(seen[r], 0) << "no corpus case for reason " << r;
}

TEST(ExtractAnswer, ReasonNamesRoundTrip) {
  for (auto r : {ViolationReason::none, ViolationReason::missing_think_block, ViolationReason::text_outside_tags,
                 ViolationReason::no_boxed, ViolationReason::multiple_boxed, ViolationReason::empty_boxed})
    EXPECT_EQ(parse_violation_reason(to_string(r)), r);
  EXPECT_FALSE(parse_violation_reason("boxed_twice").has_value());
}

TEST(Canonicalize, Idempotent) {
  for (const char* s : {"  3.50 ", "{{x}}", "{a}{b}", "-0.0", "007", "\\frac{1}{2}", "a\t\tb", "{ }", "+1.", ".5"}) {
    const auto once = canonicalize(s);
    EXPECT_EQ(canonicalize(once), once) << s;
  }
}

TEST(Canonicalize, NumericForms) {
  EXPECT_EQ(canonicalize("3.50"), "3.5");
  EXPECT_EQ(canonicalize("+4"), "4");
  EXPECT_EQ(canonicalize("-0.000"), "0");
  EXPECT_EQ(canonicalize("10"), "10");
  EXPECT_EQ(canonicalize("1.0e2"), "1.0e2");  // exponent forms are left alone
  EXPECT_EQ(canonicalize("1 000"), "1 000");
}

TEST(RenderConforming, ReExtractsEveryVocabularyAnswer) {
  for (const char* a : {"0", "17", "-3.25", "x + 1", "\\sqrt{2}", "B"}) {
    const auto got = extract_answer(render_conforming("t0 t1", a));
    ASSERT_FALSE(got.format_violation) << a;
    EXPECT_EQ(*got.answer, canonicalize(a));
  }
}

TEST(RenderConforming, RoundTripOverPolicySamples) {
  auto policy = PolicyTable::sequence({{"t", {"1", "2.5", "-4", "x + y", "\\frac{3}{4}"}}}, 3);
  Rng rng(99);
  for (int i = 0; i < 10000; ++i) {
    for (auto& v : policy.parameters()) v = rng.normal();
    const auto traj = sample_group(policy, "t", 1, rng).front();
    ASSERT_FALSE(traj.format_violation) << traj.text;
    int tok = traj.tokens.back();
    if (tok == policy.end_token(0)) tok = traj.tokens[traj.tokens.size() - 2];
    EXPECT_EQ(*traj.answer, policy.task(0).answers[static_cast<std::size_t>(tok)]);
  }
}
