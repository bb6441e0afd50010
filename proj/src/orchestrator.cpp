#include "kgfr/orchestrator.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "kgfr/error.hpp"
#include "tsv.hpp"

namespace kgfr {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::size_t count_of(std::string_view hay, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string_view::npos; pos = hay.find(needle, pos + needle.size())) ++n;
  return n;
}

std::vector<std::string> split_list(std::string_view value) {
  std::vector<std::string> out;
  while (true) {
    const auto bar = value.find('|');
    const auto item = trim(value.substr(0, bar));
    if (!item.empty()) out.emplace_back(item);
    if (bar == std::string_view::npos) break;
    value.remove_prefix(bar + 1);
  }
  return out;
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

// --- templates ---------------------------------------------------------------

std::string_view to_string(TemplateSource s) {
  switch (s) {
    case TemplateSource::llm: return "llm";
    case TemplateSource::file: return "file";
    case TemplateSource::fallback: return "fallback";
  }
  return "?";
}

bool is_valid_pattern(std::string_view pattern) {
  return count_of(pattern, "{s}") == 1 && count_of(pattern, "{o}") == 1 &&
         pattern.find('\n') == std::string_view::npos;
}

std::string fallback_pattern(const KnowledgeGraph& g, RelationId r) {
  return "{s} [" + g.relation_label(r) + "] {o}.";
}

std::string template_prompt(const KnowledgeGraph& g, RelationId r, const std::string& description) {
  std::string p = "Task: Write a verbalization template for a knowledge-graph relation.\n";
  p += "Relation: " + g.relation_label(r) + "\n";
  p += "Description: " + description + "\n";
  p += "Output: a single sentence pattern that uses {s} for the subject and {o} for the object, "
       "each exactly once. Reply with the pattern only.\n";
  return p;
}

TemplateTable::TemplateTable(std::vector<VerbalizationTemplate> entries) : entries_(std::move(entries)) {
  for (RelationId r = 0; r < entries_.size(); ++r) {
    if (entries_[r].relation != r) throw ConfigError(fmt::format("template {} is out of order", r));
    if (!is_valid_pattern(entries_[r].pattern))
      throw ConfigError(fmt::format("template for relation {} needs {{s}} and {{o}} exactly once", r));
  }
}

TemplateTable TemplateTable::fallback(const KnowledgeGraph& g) {
  std::vector<VerbalizationTemplate> entries;
  for (RelationId r = 0; r < g.relation_count(); ++r)
    entries.push_back({r, fallback_pattern(g, r), TemplateSource::fallback});
  return TemplateTable(std::move(entries));
}

const VerbalizationTemplate& TemplateTable::at(RelationId r) const {
  if (r >= entries_.size()) throw LookupError(fmt::format("no verbalization template for relation id {}", r));
  return entries_[r];
}

void TemplateTable::write(std::ostream& out, const KnowledgeGraph& g) const {
  for (const auto& t : entries_)
    out << detail::escape_field(g.relation_label(t.relation)) << '\t' << to_string(t.source) << '\t'
        << detail::escape_field(t.pattern) << '\n';
}

void TemplateTable::save(const std::filesystem::path& path, const KnowledgeGraph& g) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write template file '" + path.string() + "'");
  write(out, g);
}

TemplateTable TemplateTable::load(const std::filesystem::path& path, const KnowledgeGraph& g) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open template file '" + path.string() + "'");
  std::vector<std::optional<VerbalizationTemplate>> slots(g.relation_count());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) throw ParseError("template file: expected 3 fields", line_no);
    const auto label = detail::unescape_field(std::string_view(line).substr(0, t1));
    const auto r = g.find_relation(label);
    if (!r) throw ParseError("template file: unknown relation '" + label + "'", line_no);
    if (slots[*r]) throw ParseError("template file: duplicate relation '" + label + "'", line_no);
    auto pattern = detail::unescape_field(std::string_view(line).substr(t2 + 1));
    if (!is_valid_pattern(pattern)) throw ParseError("template file: malformed pattern for '" + label + "'", line_no);
    slots[*r] = VerbalizationTemplate{*r, std::move(pattern), TemplateSource::file};
  }
  std::vector<VerbalizationTemplate> entries;
  for (RelationId r = 0; r < slots.size(); ++r) {
    if (!slots[r]) throw ParseError("template file lacks relation '" + g.relation_label(r) + "'");
    entries.push_back(std::move(*slots[r]));
  }
  return TemplateTable(std::move(entries));
}

TemplateTable build_templates(const KnowledgeGraph& g, const RelationDescriptionTable& descriptions,
                              LlmClient& llm) {
  std::vector<VerbalizationTemplate> entries;
  for (RelationId r = 0; r < g.relation_count(); ++r) {
    std::string pattern;
    try {
      const std::string reply = llm.complete(template_prompt(g, r, descriptions.at(r).text));
      // First non-empty line, without quotes or code fences around it.
      std::string_view rest = reply;
      while (!rest.empty()) {
        const auto nl = rest.find('\n');
        auto line = trim(rest.substr(0, nl));
        rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
        if (line.empty() || line.starts_with("```")) continue;
        while (line.size() >= 2 && (line.front() == '"' || line.front() == '`') && line.back() == line.front())
          line = line.substr(1, line.size() - 2);
        pattern = std::string(line);
        break;
      }
    } catch (const LlmError&) {
      pattern.clear();
    }
    if (is_valid_pattern(pattern))
      entries.push_back({r, std::move(pattern), TemplateSource::llm});
    else
      entries.push_back({r, fallback_pattern(g, r), TemplateSource::fallback});
  }
  return TemplateTable(std::move(entries));
}

std::string verbalize(const Triple& fact, const TemplateTable& templates, const KnowledgeGraph& g) {
  std::string out = templates.at(fact.relation).pattern;
  // Labels may themselves contain "{o}", so substitute from a split pattern.
  const auto s_pos = out.find("{s}");
  const auto o_pos = out.find("{o}");
  const std::string& s = g.entity_label(fact.subject);
  const std::string& o = g.entity_label(fact.object);
  if (s_pos < o_pos)
    return out.substr(0, s_pos) + s + out.substr(s_pos + 3, o_pos - s_pos - 3) + o + out.substr(o_pos + 3);
  return out.substr(0, o_pos) + o + out.substr(o_pos + 3, s_pos - o_pos - 3) + s + out.substr(s_pos + 3);
}

// --- reply protocol ----------------------------------------------------------

ReplyBlock parse_reply(std::string_view reply) {
  // Prefer the last fenced block that carries a key; otherwise scan all lines.
  std::vector<std::string_view> lines;
  for (std::string_view rest = reply; !rest.empty();) {
    const auto nl = rest.find('\n');
    lines.push_back(rest.substr(0, nl));
    rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
  }
  auto key_of = [](std::string_view line) -> std::string {
    line = trim(line);
    const auto colon = line.find(':');
    if (colon == std::string_view::npos) return {};
    const auto key = lower(trim(line.substr(0, colon)));
    if (key == "answers" || key == "answer" || key == "status" || key == "subquestions" ||
        key == "sub-questions" || key == "focus" || key == "topics")
      return key;
    return {};
  };

  std::size_t begin = 0, end = lines.size();
  bool fenced = false;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (!trim(lines[i]).starts_with("```")) continue;
    std::size_t j = i + 1;
    while (j < lines.size() && !trim(lines[j]).starts_with("```")) ++j;
    bool has_key = false;
    for (std::size_t k = i + 1; k < j; ++k) has_key |= !key_of(lines[k]).empty();
    if (has_key) {
      begin = i + 1;
      end = j;
      fenced = true;
    }
    i = j;
  }

  ReplyBlock out;
  std::string rationale;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const bool inside = i >= begin && i < end;
    const std::string key = inside ? key_of(lines[i]) : std::string{};
    if (key.empty()) {
      const bool block_line = fenced && i + 1 >= begin && i <= end;
      if (!block_line && !trim(lines[i]).empty()) {
        if (!rationale.empty()) rationale += '\n';
        rationale += std::string(trim(lines[i]));
      }
      continue;
    }
    const auto value = trim(lines[i].substr(lines[i].find(':') + 1));
    if (key == "answers" || key == "answer") {
      out.has_answers = true;
      out.answers = split_list(value);
    } else if (key == "status") {
      out.has_status = true;
      out.status = lower(value);
    } else if (key == "subquestions" || key == "sub-questions") {
      out.sub_questions = split_list(value);
    } else if (key == "focus") {
      out.focus = split_list(value);
    } else {
      out.topics = split_list(value);
    }
  }
  out.rationale = std::string(trim(rationale));
  return out;
}

// --- session -----------------------------------------------------------------

std::string_view to_string(SessionStatus s) {
  switch (s) {
    case SessionStatus::running: return "running";
    case SessionStatus::confirmed: return "confirmed";
    case SessionStatus::exhausted: return "exhausted";
  }
  return "?";
}

void Session::write_transcript(std::ostream& out, const KnowledgeGraph& g) const {
  for (const auto& e : transcript)
    out << nlohmann::json{{"step", e.step}, {"kind", e.kind}, {"prompt", e.prompt}, {"reply", e.reply}}.dump()
        << '\n';
  nlohmann::json summary{{"status", to_string(status)}, {"steps", step}};
  summary["answers"] = nlohmann::json::array();
  for (const auto& a : answers)
    summary["answers"].push_back({{"text", a.text}, {"in_kg", a.entity.has_value()}});
  summary["sub_questions"] = sub_questions;
  summary["focus"] = nlohmann::json::array();
  for (EntityId e : focus_entities) summary["focus"].push_back(g.entity_label(e));
  summary["warnings"] = warnings;
  out << summary.dump() << '\n';
}

PromptContext prompt_context(const Session& session, const TemplateTable& templates, const KnowledgeGraph& g,
                             const PipelineConfig& config) {
  PromptContext ctx;
  std::set<EntityId> seen_entities;
  std::set<Triple> seen_facts;
  std::set<std::string> seen_paths;
  for (const auto& ev : session.evidence) {
    for (const auto& c : ev.bundle.candidates)
      if (seen_entities.insert(c.entity).second) ctx.candidates.push_back(c);
    for (const auto& [e, facts] : ev.bundle.facts) {
      std::size_t shown = 0;
      for (const auto& f : facts) {
        if (shown++ >= config.retrieval.n) break;
        if (seen_facts.insert(f.edge).second) ctx.facts.push_back(verbalize(f.edge, templates, g));
      }
    }
    for (const auto& p : ev.bundle.paths) {
      std::string text = g.entity_label(p.from);
      if (p.edges.empty()) text += " (topic entity)";
      for (const auto& t : p.edges) text += " -[" + g.relation_label(t.relation) + "]-> " + g.entity_label(t.object);
      if (seen_paths.insert(text).second) ctx.paths.push_back(std::move(text));
    }
  }
  return ctx;
}

namespace {

void append_context(std::string& p, const Session& session, const PromptContext& ctx, const KnowledgeGraph& g) {
  p += "Question: " + session.question.text + "\n";
  if (!session.sub_questions.empty()) {
    p += "Sub-questions:\n";
    for (const auto& s : session.sub_questions) p += "- " + s + "\n";
  }
  p += "Topic entities:";
  for (std::size_t i = 0; i < session.question.topics.size(); ++i)
    p += (i ? ", " : " ") + g.entity_label(session.question.topics[i]);
  p += "\nCandidates:\n";
  if (ctx.candidates.empty()) p += "(none)\n";
  for (std::size_t i = 0; i < ctx.candidates.size(); ++i)
    p += fmt::format("#{} {} (score {:.4f})\n", i + 1, g.entity_label(ctx.candidates[i].entity),
                     ctx.candidates[i].score);
  p += "Facts:\n";
  if (ctx.facts.empty()) p += "(none)\n";
  for (const auto& f : ctx.facts) p += "- " + f + "\n";
  p += "Paths:\n";
  if (ctx.paths.empty()) p += "(none)\n";
  for (const auto& s : ctx.paths) p += "- " + s + "\n";
}

std::optional<EntityId> resolve_entity(std::string_view item, const PromptContext& ctx, const KnowledgeGraph& g) {
  if (item.size() > 1 && item.front() == '#') {
    std::size_t n = 0;
    for (char c : item.substr(1)) {
      if (!std::isdigit(static_cast<unsigned char>(c))) return g.find_entity(std::string(item));
      n = n * 10 + static_cast<std::size_t>(c - '0');
    }
    if (n >= 1 && n <= ctx.candidates.size()) return ctx.candidates[n - 1].entity;
    return std::nullopt;
  }
  return g.find_entity(std::string(item));
}

}  // namespace

std::string answer_prompt(const Session& session, const PromptContext& ctx, const KnowledgeGraph& g) {
  std::string p = "Task: answer the question using the retrieved knowledge-graph evidence.\n";
  append_context(p, session, ctx, g);
  p += "Reply with a short explanation followed by a fenced block:\n"
       "```\nANSWERS: <answer> | <answer>\n```\n"
       "Refer to a candidate as #N or write the entity name; put the most likely answer first.\n";
  return p;
}

std::string reflect_prompt(const Session& session, const PromptContext& ctx, const KnowledgeGraph& g) {
  std::string p = "Task: reflect on whether the proposed answers are sufficient and consistent with the evidence.\n";
  append_context(p, session, ctx, g);
  p += "Proposed answers:";
  const AnswerRound* last = session.rounds.empty() ? nullptr : &session.rounds.back();
  if (!last || last->answers.empty()) p += " (none)";
  if (last)
    for (std::size_t i = 0; i < last->answers.size(); ++i) p += (i ? " | " : " ") + last->answers[i].text;
  p += "\n";
  if (last && !last->rationale.empty()) p += "Rationale: " + last->rationale + "\n";
  p += "Reply with a fenced block:\n"
       "```\nSTATUS: confirmed | rewrite | focus | give-best\n"
       "SUBQUESTIONS: <question> | <question>\nTOPICS: <entity> | <entity>\nFOCUS: <entity> | <entity>\n```\n"
       "Use SUBQUESTIONS (at most 3) and optionally TOPICS with rewrite, FOCUS with focus.\n";
  return p;
}

AnswerRound answer_round(Session& session, const TemplateTable& templates, const KnowledgeGraph& g, LlmClient& llm,
                         const PipelineConfig& config) {
  const PromptContext ctx = prompt_context(session, templates, g, config);
  const std::string prompt = answer_prompt(session, ctx, g);
  AnswerRound round;
  round.step = session.step;

  std::string reply = llm.complete(prompt);
  session.transcript.push_back({session.step, "answer", prompt, reply});
  ReplyBlock block = parse_reply(reply);
  if (!block.has_answers) {
    const std::string retry = prompt + "\nYour previous reply had no ANSWERS line. Reply again using the fenced block.\n";
    reply = llm.complete(retry);
    session.transcript.push_back({session.step, "answer-retry", retry, reply});
    block = parse_reply(reply);
  }
  if (!block.has_answers) {
    session.warnings.push_back(fmt::format("step {}: answer reply could not be parsed", session.step));
    session.rounds.push_back(round);
    return round;
  }

  round.parsed = true;
  round.rationale = block.rationale;
  for (const auto& item : block.answers) {
    PredictedAnswer a;
    if (auto e = resolve_entity(item, ctx, g)) {
      a = {g.entity_label(*e), *e};
    } else if (item.front() == '#') {
      session.warnings.push_back(fmt::format("step {}: no candidate {}", session.step, item));
      continue;
    } else {
      a = {item, std::nullopt};
    }
    if (std::find(round.answers.begin(), round.answers.end(), a) == round.answers.end()) round.answers.push_back(a);
  }
  session.rounds.push_back(round);
  return round;
}

Decision reflect(Session& session, const TemplateTable& templates, const KnowledgeGraph& g, LlmClient& llm,
                 const PipelineConfig& config) {
  const PromptContext ctx = prompt_context(session, templates, g, config);
  const std::string prompt = reflect_prompt(session, ctx, g);
  const std::string reply = llm.complete(prompt);
  session.transcript.push_back({session.step, "reflect", prompt, reply});
  const ReplyBlock block = parse_reply(reply);

  Decision d;
  auto resolve_all = [&](const std::vector<std::string>& labels, const char* what) {
    std::vector<EntityId> ids;
    for (const auto& label : labels) {
      if (auto e = resolve_entity(label, ctx, g)) {
        if (std::find(ids.begin(), ids.end(), *e) == ids.end()) ids.push_back(*e);
      } else {
        session.warnings.push_back(fmt::format("step {}: dropped unknown {} '{}'", session.step, what, label));
      }
    }
    return ids;
  };

  if (!block.has_status) {
    session.warnings.push_back(fmt::format("step {}: reflection reply could not be parsed", session.step));
  } else if (block.status == "confirmed") {
    d.kind = Decision::Kind::confirmed;
  } else if (block.status == "rewrite") {
    d.sub_questions = block.sub_questions;
    if (d.sub_questions.size() > config.max_sub_questions) d.sub_questions.resize(config.max_sub_questions);
    d.topics = resolve_all(block.topics, "topic");
    if (!d.sub_questions.empty()) d.kind = Decision::Kind::rewrite;
    else session.warnings.push_back(fmt::format("step {}: rewrite without sub-questions", session.step));
  } else if (block.status == "focus") {
    d.focus = resolve_all(block.focus, "focus entity");
    if (!d.focus.empty()) d.kind = Decision::Kind::focus;
    else session.warnings.push_back(fmt::format("step {}: focus without known entities", session.step));
  } else if (block.status != "give-best") {
    session.warnings.push_back(fmt::format("step {}: unknown status '{}'", session.step, block.status));
  }
  return d;
}

namespace {

void focus_on(Session& session, EntityId e, const Retriever& retriever, const PipelineConfig& config) {
  for (const auto& ev : session.evidence) {
    if (!ev.propagation || !ev.propagation->subgraph.has_entity(e)) continue;
    Evidence focused;
    focused.kind = Evidence::Kind::focus;
    focused.query = ev.query;
    focused.topics = ev.topics;
    focused.propagation = ev.propagation;
    focused.bundle.facts.push_back({e, edge_retrieve(ev.propagation->attention, e, config.retrieval.n)});
    session.evidence.push_back(std::move(focused));
    return;
  }
  // Not reached by any retrieval so far: propagate from it.
  const std::vector<EntityId> topics{e};
  auto r = retriever.retrieve(session.question.text, topics, config.retrieval,
                              session.question.candidates ? &*session.question.candidates : nullptr);
  session.evidence.push_back(
      {Evidence::Kind::focus, session.question.text, topics, std::move(r.propagation), std::move(r.bundle)});
}

}  // namespace

Session run_pipeline(const QuestionInstance& question, const Retriever& retriever, const TemplateTable& templates,
                     LlmClient& llm, const PipelineConfig& config) {
  if (config.max_steps == 0) throw ConfigError("max_steps must be at least 1");
  const KnowledgeGraph& g = retriever.graph();
  question.validate(g);
  const std::vector<EntityId>* filter = question.candidates ? &*question.candidates : nullptr;

  Session session;
  session.question = question;
  session.max_steps = config.max_steps;

  auto r = retriever.retrieve(question.text, question.topics, config.retrieval, filter);
  session.evidence.push_back(
      {Evidence::Kind::question, question.text, question.topics, std::move(r.propagation), std::move(r.bundle)});

  try {
    while (session.status == SessionStatus::running) {
      ++session.step;
      const AnswerRound round = answer_round(session, templates, g, llm, config);
      const Decision d = reflect(session, templates, g, llm, config);

      if (d.kind == Decision::Kind::confirmed && !round.answers.empty()) {
        session.status = SessionStatus::confirmed;
        session.answers = round.answers;
        break;
      }
      if (d.kind == Decision::Kind::confirmed)
        session.warnings.push_back(fmt::format("step {}: confirmation without answers", session.step));
      if (d.kind != Decision::Kind::rewrite && d.kind != Decision::Kind::focus) {
        session.status = SessionStatus::exhausted;
        break;
      }
      if (session.step >= session.max_steps) {
        session.status = SessionStatus::exhausted;
        break;
      }
      if (d.kind == Decision::Kind::rewrite) {
        const std::vector<EntityId>& topics = d.topics.empty() ? question.topics : d.topics;
        for (const auto& sq : d.sub_questions) {
          session.sub_questions.push_back(sq);
          auto sr = retriever.retrieve(sq, topics, config.retrieval, filter);
          session.evidence.push_back(
              {Evidence::Kind::sub_question, sq, topics, std::move(sr.propagation), std::move(sr.bundle)});
        }
      } else {
        for (EntityId e : d.focus) {
          if (std::find(session.focus_entities.begin(), session.focus_entities.end(), e) ==
              session.focus_entities.end())
            session.focus_entities.push_back(e);
          focus_on(session, e, retriever, config);
        }
      }
    }
  } catch (const LlmError& e) {
    session.status = SessionStatus::exhausted;
    throw PipelineError(std::string("llm failure: ") + e.what(), std::move(session));
  }

  if (session.status == SessionStatus::exhausted) {
    for (auto it = session.rounds.rbegin(); it != session.rounds.rend(); ++it)
      if (!it->answers.empty()) {
        session.answers = it->answers;
        break;
      }
  }
  return session;
}

}  // namespace kgfr
