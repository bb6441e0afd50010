#include <gtest/gtest.h>

#include <sstream>

#include "kgfr/error.hpp"
#include "kgfr/questions.hpp"
#include "oracles.hpp"

namespace kgfr {
namespace {

const KnowledgeGraph& graph() {
  static const auto g = testing::make_graph({{"A", "r", "B"}, {"B", "r", "C"}, {"C", "s", "D"}});
  return g;
}

std::vector<QuestionInstance> parse(const std::string& text) {
  std::istringstream in(text);
  return parse_questions(in, graph());
}

TEST(Questions, ParsesLabels) {
  const auto qs = parse(R"({"question": "who?", "topics": ["B", "A"], "answers": ["C"]})"
                        "\n\n"
                        R"({"question": "which?", "topics": ["A"], "candidates": ["C", "D"]})"
                        "\n");
  ASSERT_EQ(qs.size(), 2u);
  EXPECT_EQ(qs[0].text, "who?");
  EXPECT_EQ(qs[0].topics, (std::vector<EntityId>{graph().entity_id("A"), graph().entity_id("B")}));
  EXPECT_EQ(qs[0].answers, std::vector<EntityId>{graph().entity_id("C")});
  EXPECT_FALSE(qs[0].candidates.has_value());
  ASSERT_TRUE(qs[1].candidates.has_value());
  EXPECT_EQ(qs[1].candidates->size(), 2u);
  EXPECT_TRUE(qs[1].answers.empty());
}

TEST(Questions, UnknownLabel) {
  EXPECT_THROW(parse(R"({"question": "q", "topics": ["nope"]})"), LookupError);
}

TEST(Questions, NeedsTopic) {
  EXPECT_THROW(parse(R"({"question": "q", "topics": []})"), Error);
  EXPECT_THROW(parse(R"({"question": "q"})"), ParseError);
  EXPECT_THROW(parse("not json"), ParseError);
}

TEST(Questions, AnswersWithinCandidates) {
  EXPECT_THROW(parse(R"({"question": "q", "topics": ["A"], "answers": ["B"], "candidates": ["C"]})"), Error);
}

TEST(Questions, RoundTrip) {
  const auto qs = parse(R"({"question": "q1", "topics": ["A"], "answers": ["B", "C"], "candidates": ["B", "C", "D"]})"
                        "\n");
  std::ostringstream out;
  write_questions(out, qs, graph());
  const auto back = parse(out.str());
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].text, qs[0].text);
  EXPECT_EQ(back[0].topics, qs[0].topics);
  EXPECT_EQ(back[0].answers, qs[0].answers);
  EXPECT_EQ(back[0].candidates, qs[0].candidates);
}

}  // namespace
}  // namespace kgfr
