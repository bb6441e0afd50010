#include "kgfr/questions.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>

#include <nlohmann/json.hpp>

#include "kgfr/error.hpp"

namespace kgfr {

namespace {

std::vector<EntityId> sorted_unique(std::vector<EntityId> ids) {
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

std::vector<EntityId> resolve(const nlohmann::json& arr, const KnowledgeGraph& g,
                              const char* field, std::size_t line) {
  if (!arr.is_array()) throw ParseError(std::string("'") + field + "' must be an array", line);
  std::vector<EntityId> ids;
  for (const auto& item : arr) {
    if (!item.is_string()) throw ParseError(std::string("'") + field + "' entries must be strings", line);
    const auto label = item.get<std::string>();
    const auto id = g.find_entity(label);
    if (!id) throw LookupError("unknown entity '" + label + "' in '" + field + "' (line " +
                               std::to_string(line) + ")");
    ids.push_back(*id);
  }
  return sorted_unique(std::move(ids));
}

nlohmann::json labels(const std::vector<EntityId>& ids, const KnowledgeGraph& g) {
  auto arr = nlohmann::json::array();
  for (EntityId e : ids) arr.push_back(g.entity_label(e));
  return arr;
}

}  // namespace

void QuestionInstance::validate(const KnowledgeGraph& g) const {
  if (topics.empty()) throw PreconditionError("question '" + text + "' has no topic entity");
  for (EntityId e : topics)
    if (e >= g.entity_count()) throw LookupError("topic id out of range");
  for (EntityId e : answers)
    if (e >= g.entity_count()) throw LookupError("answer id out of range");
  if (candidates) {
    for (EntityId e : *candidates)
      if (e >= g.entity_count()) throw LookupError("candidate id out of range");
    for (EntityId a : answers)
      if (!std::binary_search(candidates->begin(), candidates->end(), a))
        throw PreconditionError("question '" + text + "': answer '" + g.entity_label(a) +
                                "' is not among the candidates");
  }
}

std::vector<QuestionInstance> parse_questions(std::istream& in, const KnowledgeGraph& g) {
  std::vector<QuestionInstance> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("invalid JSON: ") + e.what(), line_no);
    }
    if (!j.is_object() || !j.contains("question") || !j["question"].is_string())
      throw ParseError("record needs a string 'question' field", line_no);
    if (!j.contains("topics")) throw ParseError("record needs a 'topics' field", line_no);
    QuestionInstance q;
    q.text = j["question"].get<std::string>();
    q.topics = resolve(j["topics"], g, "topics", line_no);
    if (j.contains("answers")) q.answers = resolve(j["answers"], g, "answers", line_no);
    if (j.contains("candidates")) q.candidates = resolve(j["candidates"], g, "candidates", line_no);
    try {
      q.validate(g);
    } catch (const Error& e) {
      throw ParseError(e.what(), line_no);
    }
    out.push_back(std::move(q));
  }
  return out;
}

std::vector<QuestionInstance> load_questions(const std::filesystem::path& path,
                                             const KnowledgeGraph& g) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open questions file '" + path.string() + "'");
  return parse_questions(in, g);
}

void write_questions(std::ostream& out, const std::vector<QuestionInstance>& qs,
                     const KnowledgeGraph& g) {
  for (const auto& q : qs) {
    nlohmann::json j;
    j["question"] = q.text;
    j["topics"] = labels(q.topics, g);
    j["answers"] = labels(q.answers, g);
    if (q.candidates) j["candidates"] = labels(*q.candidates, g);
    out << j.dump() << '\n';
  }
}

}  // namespace kgfr
