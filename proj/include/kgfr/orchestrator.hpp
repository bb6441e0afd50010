#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "kgfr/embedding.hpp"
#include "kgfr/llm_client.hpp"
#include "kgfr/questions.hpp"
#include "kgfr/retrieval.hpp"

namespace kgfr {

// --- verbalization -----------------------------------------------------------

enum class TemplateSource { llm, file, fallback };

std::string_view to_string(TemplateSource s);

struct VerbalizationTemplate {
  RelationId relation;
  std::string pattern;  // contains {s} and {o} exactly once each
  TemplateSource source = TemplateSource::fallback;
};

bool is_valid_pattern(std::string_view pattern);

// "{s} [label] {o}."
std::string fallback_pattern(const KnowledgeGraph& g, RelationId r);

std::string template_prompt(const KnowledgeGraph& g, RelationId r, const std::string& description);

class TemplateTable {
 public:
  TemplateTable() = default;
  explicit TemplateTable(std::vector<VerbalizationTemplate> entries);

  static TemplateTable fallback(const KnowledgeGraph& g);

  // TSV: relation-label \t source \t pattern, one line per relation.
  static TemplateTable load(const std::filesystem::path& path, const KnowledgeGraph& g);
  void save(const std::filesystem::path& path, const KnowledgeGraph& g) const;
  void write(std::ostream& out, const KnowledgeGraph& g) const;

  std::size_t size() const noexcept { return entries_.size(); }
  const VerbalizationTemplate& at(RelationId r) const;

 private:
  std::vector<VerbalizationTemplate> entries_;
};

// One template per relation. Failed or malformed replies fall back.
TemplateTable build_templates(const KnowledgeGraph& g, const RelationDescriptionTable& descriptions,
                              LlmClient& llm);

std::string verbalize(const Triple& fact, const TemplateTable& templates, const KnowledgeGraph& g);

// --- reply protocol ----------------------------------------------------------

// Fields of the line-structured reply block. List values are '|'-separated.
struct ReplyBlock {
  bool has_answers = false;
  bool has_status = false;
  std::vector<std::string> answers;
  std::string status;
  std::vector<std::string> sub_questions;
  std::vector<std::string> focus;
  std::vector<std::string> topics;
  std::string rationale;  // text outside the block
};

ReplyBlock parse_reply(std::string_view reply);

// --- session -----------------------------------------------------------------

struct PredictedAnswer {
  std::string text;
  std::optional<EntityId> entity;  // nullopt: free-text answer outside the KG

  friend bool operator==(const PredictedAnswer&, const PredictedAnswer&) = default;
};

// Evidence gathered by one retrieval call.
struct Evidence {
  enum class Kind { question, sub_question, focus };
  Kind kind = Kind::question;
  std::string query;
  std::vector<EntityId> topics;
  std::shared_ptr<const PropagationOutput<float>> propagation;
  RetrievalBundle bundle;
};

struct AnswerRound {
  std::size_t step = 0;
  std::vector<PredictedAnswer> answers;
  std::string rationale;
  bool parsed = false;
};

struct TranscriptEntry {
  std::size_t step;
  std::string kind;  // "answer", "answer-retry", "reflect"
  std::string prompt;
  std::string reply;
};

enum class SessionStatus { running, confirmed, exhausted };

std::string_view to_string(SessionStatus s);

struct Decision {
  enum class Kind { confirmed, rewrite, focus, give_best };
  Kind kind = Kind::give_best;
  std::vector<std::string> sub_questions;
  std::vector<EntityId> focus;
  std::vector<EntityId> topics;  // resolved TOPICS of a rewrite
};

struct Session {
  QuestionInstance question;
  std::size_t step = 0;
  std::size_t max_steps = 3;
  std::vector<std::string> sub_questions;
  std::vector<EntityId> focus_entities;
  std::vector<Evidence> evidence;
  std::vector<AnswerRound> rounds;
  std::vector<TranscriptEntry> transcript;
  std::vector<std::string> warnings;
  SessionStatus status = SessionStatus::running;
  std::vector<PredictedAnswer> answers;

  // One JSON object per transcript entry, then a summary line.
  void write_transcript(std::ostream& out, const KnowledgeGraph& g) const;
};

class PipelineError : public Error {
 public:
  PipelineError(const std::string& what, Session partial)
      : Error(what), session_(std::make_shared<Session>(std::move(partial))) {}
  const Session& session() const noexcept { return *session_; }

 private:
  std::shared_ptr<const Session> session_;
};

struct PipelineConfig {
  std::size_t max_steps = 3;
  std::size_t max_sub_questions = 3;
  RetrievalConfig retrieval;
};

// Everything an answer or reflect prompt needs, numbered candidates
// included, built from the session's accumulated evidence.
struct PromptContext {
  std::vector<ScoredEntity> candidates;  // #1 .. #N
  std::vector<std::string> facts;
  std::vector<std::string> paths;
};

PromptContext prompt_context(const Session& session, const TemplateTable& templates, const KnowledgeGraph& g,
                             const PipelineConfig& config);
std::string answer_prompt(const Session& session, const PromptContext& ctx, const KnowledgeGraph& g);
std::string reflect_prompt(const Session& session, const PromptContext& ctx, const KnowledgeGraph& g);

AnswerRound answer_round(Session& session, const TemplateTable& templates, const KnowledgeGraph& g, LlmClient& llm,
                         const PipelineConfig& config);
Decision reflect(Session& session, const TemplateTable& templates, const KnowledgeGraph& g, LlmClient& llm,
                 const PipelineConfig& config);

// Stage 1 retrieval, then answer/reflect cycles until confirmation, a
// give-best decision, or max_steps.
Session run_pipeline(const QuestionInstance& question, const Retriever& retriever, const TemplateTable& templates,
                     LlmClient& llm, const PipelineConfig& config);

}  // namespace kgfr
