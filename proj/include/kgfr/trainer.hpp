#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "kgfr/embedding.hpp"
#include "kgfr/params.hpp"
#include "kgfr/propagation.hpp"
#include "kgfr/questions.hpp"

namespace kgfr {

// Gradients share the parameter layout.
template <class T>
using GradientSet = ModelParams<T>;

// log sum_{x in E} exp(c_x) - log sum_{a in A} exp(c_a), max-shifted.
// Entities missing from scores count as score 0. answers must be sorted,
// non-empty and within [0, entity_count).
template <class T>
T multiclass_log_loss(const EntityScores<T>& scores, std::span<const EntityId> answers,
                      std::size_t entity_count);

// Loss plus dLoss/dc for every entity present in scores (same order).
template <class T>
T multiclass_log_loss_grad(const EntityScores<T>& scores, std::span<const EntityId> answers,
                           std::size_t entity_count, std::vector<T>& dscores);

template <class T>
struct BackwardResult {
  T loss;
  GradientSet<T> grads;
};

// Exact reverse-mode gradient of one question's loss. q and rel_init are
// constants (the encoder is frozen).
template <class T>
BackwardResult<T> backward(const KnowledgeGraph& g, std::span<const T> q, std::span<const EntityId> topics,
                           std::span<const EntityId> answers, const ModelParams<T>& params,
                           const Matrix<T>& rel_init, const ExpansionPolicy& policy);

// Forward-only loss, used by finite-difference checks.
template <class T>
T question_loss(const KnowledgeGraph& g, std::span<const T> q, std::span<const EntityId> topics,
                std::span<const EntityId> answers, const ModelParams<T>& params, const Matrix<T>& rel_init,
                const ExpansionPolicy& policy);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  Adam(const ModelParams<float>& like, double learning_rate, AdamConfig config = {});
  void step(ModelParams<float>& params, const GradientSet<float>& grads);
  std::size_t steps() const noexcept { return t_; }

 private:
  double lr_;
  AdamConfig cfg_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t max_epochs = 200;
  std::size_t patience = 5;
  ExpansionPolicy policy;
  std::uint64_t seed = 0;
  AdamConfig adam;
  ModelDims dims = kDeskDims;

  void validate() const;
};

struct EpochLog {
  std::size_t epoch;
  double mean_loss;
  double dev_h1;
  double wall_seconds;
};

struct TrainResult {
  ModelParams<float> params;  // best-dev checkpoint
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_dev_h1 = 0.0;
  std::size_t skipped_questions = 0;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Per-question Adam steps with early stopping on dev H@1. When dev is
// empty the training set doubles as the dev set. If initial is given,
// training starts from it instead of a fresh Xavier init.
TrainResult train(const std::vector<QuestionInstance>& dataset, const std::vector<QuestionInstance>& dev,
                  const KnowledgeGraph& g, const EmbeddingProvider& provider, const Matrix<float>& rel_init,
                  const TrainConfig& config, const ModelParams<float>* initial = nullptr,
                  const EpochCallback& on_epoch = {});

// H@1 of the retriever alone: top-scoring reached entity (within the
// candidate set when given) against the gold answers.
double retriever_h1(const std::vector<QuestionInstance>& qs, const KnowledgeGraph& g,
                    const EmbeddingProvider& provider, const Matrix<float>& rel_init,
                    const ModelParams<float>& params, const ExpansionPolicy& policy);

void write_epoch_log(std::ostream& out, const EpochLog& entry);

}  // namespace kgfr
