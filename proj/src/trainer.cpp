#include "kgfr/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>
#include <random>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "kgfr/error.hpp"
#include "kgfr/kernels/kernels.hpp"

namespace kgfr {

namespace {

// log(sum_i exp(v_i) + zeros * exp(0)), shifted by the maximum.
template <class T>
T log_sum_exp(std::span<const T> values, std::size_t zeros) {
  T m = zeros > 0 ? T{0} : -std::numeric_limits<T>::infinity();
  for (T v : values) m = std::max(m, v);
  T acc = static_cast<T>(zeros) * std::exp(-m);
  for (T v : values) acc += std::exp(v - m);
  return m + std::log(acc);
}

template <class T>
void check_answers(std::span<const EntityId> answers, std::size_t entity_count) {
  if (answers.empty()) throw PreconditionError("loss: answer set is empty");
  for (std::size_t i = 0; i < answers.size(); ++i) {
    if (answers[i] >= entity_count) throw PreconditionError("loss: answer outside the entity set");
    if (i > 0 && answers[i] <= answers[i - 1]) throw PreconditionError("loss: answers must be sorted and unique");
  }
}

// Scores of the answers that are present, and how many answers are absent.
template <class T>
std::pair<std::vector<T>, std::size_t> answer_scores(const EntityScores<T>& scores,
                                                     std::span<const EntityId> answers) {
  std::vector<T> vals;
  std::size_t absent = 0;
  for (EntityId a : answers) {
    auto it = std::lower_bound(scores.ids.begin(), scores.ids.end(), a);
    if (it != scores.ids.end() && *it == a)
      vals.push_back(scores.values[static_cast<std::size_t>(it - scores.ids.begin())]);
    else
      ++absent;
  }
  return {std::move(vals), absent};
}

}  // namespace

template <class T>
T multiclass_log_loss(const EntityScores<T>& scores, std::span<const EntityId> answers,
                      std::size_t entity_count) {
  check_answers<T>(answers, entity_count);
  const auto [ans, absent] = answer_scores(scores, answers);
  const T all = log_sum_exp<T>(scores.values, entity_count - scores.ids.size());
  const T pos = log_sum_exp<T>(ans, absent);
  return std::max(T{0}, all - pos);
}

template <class T>
T multiclass_log_loss_grad(const EntityScores<T>& scores, std::span<const EntityId> answers,
                           std::size_t entity_count, std::vector<T>& dscores) {
  check_answers<T>(answers, entity_count);
  const auto [ans, absent] = answer_scores(scores, answers);
  const T all = log_sum_exp<T>(scores.values, entity_count - scores.ids.size());
  const T pos = log_sum_exp<T>(ans, absent);
  dscores.assign(scores.ids.size(), T{0});
  for (std::size_t i = 0; i < scores.ids.size(); ++i) {
    dscores[i] = std::exp(scores.values[i] - all);
    if (std::binary_search(answers.begin(), answers.end(), scores.ids[i]))
      dscores[i] -= std::exp(scores.values[i] - pos);
  }
  return std::max(T{0}, all - pos);
}

template <class T>
T question_loss(const KnowledgeGraph& g, std::span<const T> q, std::span<const EntityId> topics,
                std::span<const EntityId> answers, const ModelParams<T>& params, const Matrix<T>& rel_init,
                const ExpansionPolicy& policy) {
  const auto out = propagate<T>(g, q, topics, params, rel_init, policy);
  return multiclass_log_loss<T>(score_entities<T>(out.entities, params), answers, g.entity_count());
}

template <class T>
BackwardResult<T> backward(const KnowledgeGraph& g, std::span<const T> q, std::span<const EntityId> topics,
                           std::span<const EntityId> answers, const ModelParams<T>& params,
                           const Matrix<T>& rel_init, const ExpansionPolicy& policy) {
  const std::size_t d = params.dims.dim, a = params.dims.dim_attn, L = params.dims.layers;
  PropagationTape<T> tape;
  const auto out = propagate<T>(g, q, topics, params, rel_init, policy, &tape);
  const auto scores = score_entities<T>(out.entities, params);

  BackwardResult<T> res{T{0}, GradientSet<T>::zeros(params.dims)};
  auto& grads = res.grads;
  std::vector<T> dscores;
  res.loss = multiclass_log_loss_grad<T>(scores, answers, g.entity_count(), dscores);

  // Scoring: c = W7 h.
  EntityState<T> dh(d);
  for (std::size_t k = 0; k < scores.ids.size(); ++k) {
    kernels::ger_acc<T>(grads.w7, std::span<const T>(&dscores[k], 1), out.entities.slot(k));
    auto row = dh.touch(scores.ids[k]);
    kernels::axpy<T>(dscores[k], params.w7.row(0), row);
  }

  Matrix<T> drel_next(g.relation_count(), d);  // dL/dR^(i+1)
  std::vector<T> cat(2 * d), dcat(2 * d), dagg(d), m(d), dm(d), relu(a), dz(a);
  for (std::size_t ii = L; ii-- > 0;) {
    const auto& l = params.layers[ii];
    auto& gl = grads.layers[ii];
    const auto& lt = tape.layers[ii];

    // Relation update R^(i+1) = W1 [R^(i) ; q].
    Matrix<T> drel(g.relation_count(), d);
    std::copy(q.begin(), q.end(), cat.begin() + d);
    for (RelationId r = 0; r < g.relation_count(); ++r) {
      std::copy(lt.relations.row(r).begin(), lt.relations.row(r).end(), cat.begin());
      kernels::ger_acc<T>(gl.w1, drel_next.row(r), cat);
      std::fill(dcat.begin(), dcat.end(), T{0});
      kernels::gemv_t_acc<T>(l.w1, drel_next.row(r), dcat);
      std::copy(dcat.begin(), dcat.begin() + d, drel.row(r).begin());
    }

    // H^(i+1)[o] = W2 agg[o].
    EntityState<T> dagg_state(d);
    for (std::size_t k = 0; k < lt.aggregate.size(); ++k) {
      const EntityId o = lt.aggregate.ids()[k];
      if (!dh.has(o)) continue;
      const auto g_out = dh.get(o);
      kernels::ger_acc<T>(gl.w2, g_out, lt.aggregate.slot(k));
      auto row = dagg_state.touch(o);
      kernels::gemv_t_acc<T>(l.w2, g_out, row);
    }

    // Messages alpha (s + r) and attention sigmoid(W3 relu(W4 s + W5 r + W6 q)).
    EntityState<T> dh_prev(d);
    for (std::size_t k = 0; k < lt.edges.size(); ++k) {
      const Triple& t = lt.edges[k];
      if (!dagg_state.has(t.object)) continue;
      const auto g_agg = dagg_state.get(t.object);
      const auto s = lt.entities.get(t.subject);
      const auto r = lt.relations.row(t.relation);
      const T alpha = lt.alpha[k];
      for (std::size_t c = 0; c < d; ++c) m[c] = s[c] + r[c];
      const T dalpha = kernels::dot<T>(g_agg, m);
      for (std::size_t c = 0; c < d; ++c) dm[c] = alpha * g_agg[c];

      const auto z = lt.preact.row(k);
      for (std::size_t c = 0; c < a; ++c) relu[c] = z[c] > T{0} ? z[c] : T{0};
      const T dlogit = dalpha * alpha * (T{1} - alpha);
      kernels::ger_acc<T>(gl.w3, std::span<const T>(&dlogit, 1), relu);
      for (std::size_t c = 0; c < a; ++c) dz[c] = z[c] > T{0} ? dlogit * l.w3(0, c) : T{0};
      kernels::ger_acc<T>(gl.w4, dz, s);
      kernels::ger_acc<T>(gl.w5, dz, r);
      kernels::ger_acc<T>(gl.w6, dz, q);

      auto drow = drel.row(t.relation);
      kernels::axpy<T>(T{1}, dm, drow);
      kernels::gemv_t_acc<T>(l.w5, dz, drow);
      // Entities without an embedding at this layer are structural zeros.
      if (lt.entities.has(t.subject)) {
        auto srow = dh_prev.touch(t.subject);
        kernels::axpy<T>(T{1}, dm, srow);
        kernels::gemv_t_acc<T>(l.w4, dz, srow);
      }
    }
    dh = std::move(dh_prev);
    drel_next = std::move(drel);
  }

  grads.for_each([](const std::string& name, const Matrix<T>& mat) {
    for (T x : mat.flat())
      if (!std::isfinite(x)) throw NumericError("non-finite gradient in " + name);
  });
  return res;
}

template float multiclass_log_loss<float>(const EntityScores<float>&, std::span<const EntityId>, std::size_t);
template double multiclass_log_loss<double>(const EntityScores<double>&, std::span<const EntityId>, std::size_t);
template float multiclass_log_loss_grad<float>(const EntityScores<float>&, std::span<const EntityId>, std::size_t,
                                               std::vector<float>&);
template double multiclass_log_loss_grad<double>(const EntityScores<double>&, std::span<const EntityId>,
                                                 std::size_t, std::vector<double>&);
template BackwardResult<float> backward<float>(const KnowledgeGraph&, std::span<const float>,
                                               std::span<const EntityId>, std::span<const EntityId>,
                                               const ModelParams<float>&, const Matrix<float>&,
                                               const ExpansionPolicy&);
template BackwardResult<double> backward<double>(const KnowledgeGraph&, std::span<const double>,
                                                 std::span<const EntityId>, std::span<const EntityId>,
                                                 const ModelParams<double>&, const Matrix<double>&,
                                                 const ExpansionPolicy&);
template float question_loss<float>(const KnowledgeGraph&, std::span<const float>, std::span<const EntityId>,
                                    std::span<const EntityId>, const ModelParams<float>&, const Matrix<float>&,
                                    const ExpansionPolicy&);
template double question_loss<double>(const KnowledgeGraph&, std::span<const double>, std::span<const EntityId>,
                                      std::span<const EntityId>, const ModelParams<double>&,
                                      const Matrix<double>&, const ExpansionPolicy&);

// --- Adam --------------------------------------------------------------------

Adam::Adam(const ModelParams<float>& like, double learning_rate, AdamConfig config)
    : lr_(learning_rate), cfg_(config) {
  like.for_each([&](const std::string&, const Matrix<float>& m) {
    m_.emplace_back(m.size(), 0.0);
    v_.emplace_back(m.size(), 0.0);
  });
}

void Adam::step(ModelParams<float>& params, const GradientSet<float>& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  std::vector<const Matrix<float>*> gs;
  grads.for_each([&](const std::string&, const Matrix<float>& m) { gs.push_back(&m); });
  std::size_t idx = 0;
  params.for_each([&](const std::string& name, Matrix<float>& p) {
    const auto& gm = *gs[idx];
    if (!gm.same_shape(p)) throw ShapeError("Adam: gradient shape mismatch for " + name);
    auto& m = m_[idx];
    auto& v = v_[idx];
    auto pf = p.flat();
    auto gf = gm.flat();
    for (std::size_t k = 0; k < pf.size(); ++k) {
      const double gk = gf[k];
      m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * gk;
      v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * gk * gk;
      const double update = lr_ * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg_.epsilon);
      pf[k] = static_cast<float>(pf[k] - update);
    }
    ++idx;
  });
}

// --- training loop -----------------------------------------------------------

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw ConfigError("learning rate must be non-negative");
  if (patience < 1) throw ConfigError("patience must be at least 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be at least 1");
  if (policy.lambda < 0) throw ConfigError("lambda must be non-negative");
}

namespace {

bool answer_reachable(const KnowledgeGraph& g, const QuestionInstance& q, const ExpansionPolicy& policy,
                      std::size_t layers) {
  SubgraphExpander ex(g, q.topics, policy);
  for (std::size_t i = 0; i < layers; ++i) ex.expand();
  for (EntityId a : q.answers)
    if (ex.subgraph().has_entity(a)) return true;
  return false;
}

std::optional<EntityId> top1(const EntityScores<float>& scores, const QuestionInstance& q) {
  std::optional<EntityId> best;
  float best_score = 0.0f;
  for (std::size_t k = 0; k < scores.ids.size(); ++k) {
    const EntityId e = scores.ids[k];
    if (q.candidates && !std::binary_search(q.candidates->begin(), q.candidates->end(), e)) continue;
    const float s = scores.values[k];
    if (!best || s > best_score) {  // ids ascending: ties keep the smaller id
      best = e;
      best_score = s;
    }
  }
  return best;
}

}  // namespace

double retriever_h1(const std::vector<QuestionInstance>& qs, const KnowledgeGraph& g,
                    const EmbeddingProvider& provider, const Matrix<float>& rel_init,
                    const ModelParams<float>& params, const ExpansionPolicy& policy) {
  if (qs.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& q : qs) {
    const auto emb = provider.encode(q.text);
    const auto out = propagate<float>(g, emb.vector, q.topics, params, rel_init, policy);
    const auto best = top1(score_entities<float>(out.entities, params), q);
    if (best && std::binary_search(q.answers.begin(), q.answers.end(), *best)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(qs.size());
}

TrainResult train(const std::vector<QuestionInstance>& dataset, const std::vector<QuestionInstance>& dev,
                  const KnowledgeGraph& g, const EmbeddingProvider& provider, const Matrix<float>& rel_init,
                  const TrainConfig& config, const ModelParams<float>* initial, const EpochCallback& on_epoch) {
  config.validate();
  if (dataset.empty()) throw TrainingError("training set is empty");

  TrainResult result;
  result.params = initial ? *initial : ModelParams<float>::xavier(config.dims, config.seed);
  result.params.validate();
  const std::size_t layers = result.params.dims.layers;

  struct Usable {
    const QuestionInstance* q;
    std::vector<float> emb;
  };
  std::vector<Usable> usable;
  for (const auto& q : dataset) {
    if (q.answers.empty() || !answer_reachable(g, q, config.policy, layers)) {
      ++result.skipped_questions;
      continue;
    }
    usable.push_back({&q, provider.encode(q.text).vector});
  }
  if (usable.empty()) throw TrainingError("no training question reaches any of its answers");
  const auto& dev_set = dev.empty() ? dataset : dev;

  ModelParams<float> params = result.params;
  Adam adam(params, config.learning_rate, config.adam);
  std::mt19937_64 rng(config.seed ^ 0x5DEECE66Dull);
  std::vector<std::size_t> order(usable.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  const auto start = std::chrono::steady_clock::now();
  double best = -1.0;
  std::size_t bad_epochs = 0;
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t idx : order) {
      const auto& u = usable[idx];
      auto res = backward<float>(g, u.emb, u.q->topics, u.q->answers, params, rel_init, config.policy);
      loss_sum += res.loss;
      adam.step(params, res.grads);
    }
    const double h1 = retriever_h1(dev_set, g, provider, rel_init, params, config.policy);
    const EpochLog entry{epoch, loss_sum / static_cast<double>(usable.size()), h1,
                         std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()};
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
    if (h1 > best) {
      best = h1;
      result.params = params;
      result.best_epoch = epoch;
      result.best_dev_h1 = h1;
      bad_epochs = 0;
    } else if (++bad_epochs >= config.patience) {
      break;
    }
  }
  return result;
}

void write_epoch_log(std::ostream& out, const EpochLog& entry) {
  nlohmann::json j;
  j["epoch"] = entry.epoch;
  j["mean_loss"] = entry.mean_loss;
  j["dev_h1"] = entry.dev_h1;
  j["wall_seconds"] = entry.wall_seconds;
  out << j.dump() << '\n';
}

}  // namespace kgfr
