#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "kgfr/kg_store.hpp"

namespace kgfr {

// One (generalized) KGQA question. Id sets are sorted and duplicate-free.
struct QuestionInstance {
  std::string text;
  std::vector<EntityId> topics;
  std::vector<EntityId> answers;
  // Candidate answers for multiple-choice style questions; nullopt means
  // every entity is a candidate.
  std::optional<std::vector<EntityId>> candidates;

  // Checks the topic/answer/candidate invariants against g.
  void validate(const KnowledgeGraph& g) const;
};

// Questions file: one JSON object per line,
//   {"question": "...", "topics": ["label", ...],
//    "answers": ["label", ...], "candidates": ["label", ...]}
// "answers" and "candidates" are optional. Labels must exist in g.
std::vector<QuestionInstance> load_questions(const std::filesystem::path& path,
                                             const KnowledgeGraph& g);
std::vector<QuestionInstance> parse_questions(std::istream& in, const KnowledgeGraph& g);
void write_questions(std::ostream& out, const std::vector<QuestionInstance>& qs,
                     const KnowledgeGraph& g);

}  // namespace kgfr
