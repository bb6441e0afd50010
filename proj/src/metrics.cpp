#include "kgfr/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <set>
#include <thread>

#include <nlohmann/json.hpp>

namespace kgfr {

double metric_f1(std::span<const std::string> pred, std::span<const std::string> gold) {
  const std::set<std::string> p(pred.begin(), pred.end());
  const std::set<std::string> g(gold.begin(), gold.end());
  if (p.empty() && g.empty()) return 1.0;
  if (p.empty() || g.empty()) return 0.0;
  std::size_t common = 0;
  for (const auto& x : p) common += g.count(x);
  if (common == 0) return 0.0;
  const double precision = static_cast<double>(common) / static_cast<double>(p.size());
  const double recall = static_cast<double>(common) / static_cast<double>(g.size());
  return 2 * precision * recall / (precision + recall);
}

bool metric_hit(std::span<const std::string> pred, std::span<const std::string> gold) {
  return std::any_of(pred.begin(), pred.end(),
                     [&](const std::string& x) { return std::find(gold.begin(), gold.end(), x) != gold.end(); });
}

bool metric_h1(std::span<const std::string> pred, std::span<const std::string> gold) {
  return !pred.empty() && std::find(gold.begin(), gold.end(), pred.front()) != gold.end();
}

QuestionResult score_question(std::string question, std::vector<std::string> predicted,
                              std::vector<std::string> gold) {
  QuestionResult r;
  r.question = std::move(question);
  r.f1 = metric_f1(predicted, gold);
  r.hit = metric_hit(predicted, gold);
  r.h1 = metric_h1(predicted, gold);
  r.predicted = std::move(predicted);
  r.gold = std::move(gold);
  return r;
}

EvalReport EvalReport::aggregate(std::vector<QuestionResult> rows) {
  EvalReport rep;
  rep.rows = std::move(rows);
  if (rep.rows.empty()) return rep;
  for (const auto& r : rep.rows) {
    rep.mean_f1 += r.f1;
    rep.hit_rate += r.hit ? 1.0 : 0.0;
    rep.h1_rate += r.h1 ? 1.0 : 0.0;
    rep.errors += r.status == "error" ? 1 : 0;
  }
  const auto n = static_cast<double>(rep.rows.size());
  rep.mean_f1 /= n;
  rep.hit_rate /= n;
  rep.h1_rate /= n;
  return rep;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["questions"] = rows.size();
  j["errors"] = errors;
  j["f1"] = mean_f1;
  j["hit"] = hit_rate;
  j["h1"] = h1_rate;
  j["rows"] = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json row{{"question", r.question}, {"predicted", r.predicted}, {"gold", r.gold}, {"f1", r.f1},
                       {"hit", r.hit},           {"h1", r.h1},               {"status", r.status}, {"steps", r.steps}};
    if (!r.error.empty()) row["error"] = r.error;
    j["rows"].push_back(std::move(row));
  }
  return j;
}

EvalReport evaluate(const std::vector<QuestionInstance>& questions, const Retriever& retriever,
                    const TemplateTable& templates, LlmClient& llm, const PipelineConfig& config,
                    std::size_t workers) {
  const KnowledgeGraph& g = retriever.graph();
  std::vector<QuestionResult> rows(questions.size());

  auto run_one = [&](std::size_t i) {
    const auto& q = questions[i];
    std::vector<std::string> gold;
    for (EntityId e : q.answers) gold.push_back(g.entity_label(e));
    std::vector<std::string> predicted;
    std::string status, error;
    std::size_t steps = 0;
    try {
      const Session s = run_pipeline(q, retriever, templates, llm, config);
      for (const auto& a : s.answers) predicted.push_back(a.text);
      status = std::string(to_string(s.status));
      steps = s.step;
    } catch (const PipelineError& e) {
      status = "error";
      error = e.what();
      steps = e.session().step;
    } catch (const Error& e) {
      status = "error";
      error = e.what();
    }
    rows[i] = score_question(q.text, std::move(predicted), std::move(gold));
    rows[i].status = std::move(status);
    rows[i].error = std::move(error);
    rows[i].steps = steps;
  };

  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(questions.size(), 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < questions.size(); ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < questions.size(); i = next++) run_one(i);
      });
  }
  return EvalReport::aggregate(std::move(rows));
}

}  // namespace kgfr
