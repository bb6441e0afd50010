#pragma once

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "kgfr/orchestrator.hpp"

namespace kgfr {

// Set F1 of pred against gold. Both empty counts as a perfect match.
double metric_f1(std::span<const std::string> pred, std::span<const std::string> gold);
bool metric_hit(std::span<const std::string> pred, std::span<const std::string> gold);
// First prediction is in gold.
bool metric_h1(std::span<const std::string> pred, std::span<const std::string> gold);

struct QuestionResult {
  std::string question;
  std::vector<std::string> predicted;
  std::vector<std::string> gold;
  double f1 = 0;
  bool hit = false;
  bool h1 = false;
  std::string status;  // session status, or "error"
  std::size_t steps = 0;
  std::string error;
};

QuestionResult score_question(std::string question, std::vector<std::string> predicted,
                              std::vector<std::string> gold);

struct EvalReport {
  std::vector<QuestionResult> rows;
  double mean_f1 = 0;
  double hit_rate = 0;
  double h1_rate = 0;
  std::size_t errors = 0;

  // Macro means over rows.
  static EvalReport aggregate(std::vector<QuestionResult> rows);
  nlohmann::json to_json() const;
};

// Runs the pipeline on every question with up to `workers` sessions in
// flight. Rows keep input order. Pipeline failures become error rows.
EvalReport evaluate(const std::vector<QuestionInstance>& questions, const Retriever& retriever,
                    const TemplateTable& templates, LlmClient& llm, const PipelineConfig& config,
                    std::size_t workers = 1);

}  // namespace kgfr
