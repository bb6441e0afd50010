#include "kgfr/propagation.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "kgfr/error.hpp"
#include "kgfr/kernels/kernels.hpp"

namespace kgfr {

template <class T>
std::span<T> EntityState<T>::touch(EntityId e) {
  auto [it, inserted] = index_.emplace(e, ids_.size());
  if (inserted) {
    ids_.push_back(e);
    data_.resize(data_.size() + dim_, T{0});
  }
  return slot(it->second);
}

template <class T>
void EntityState<T>::finalize() {
  if (std::is_sorted(ids_.begin(), ids_.end())) return;
  std::vector<std::size_t> order(ids_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ids_[a] < ids_[b]; });
  std::vector<EntityId> ids(ids_.size());
  std::vector<T> data(data_.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    ids[i] = ids_[order[i]];
    std::copy_n(data_.begin() + order[i] * dim_, dim_, data.begin() + i * dim_);
    index_[ids[i]] = i;
  }
  ids_ = std::move(ids);
  data_ = std::move(data);
}

template <class T>
EntityState<T> init_entities(const KnowledgeGraph& g, std::span<const EntityId> topics, std::size_t dim) {
  if (topics.empty()) throw PreconditionError("init_entities: topic set is empty");
  EntityState<T> state(dim);
  for (EntityId e : topics) {
    if (e >= g.entity_count()) throw LookupError("topic entity id " + std::to_string(e) + " out of range");
    auto row = state.touch(e);
    std::fill(row.begin(), row.end(), T{1});
  }
  state.finalize();
  return state;
}

namespace {

template <class T>
T sigmoid(T x) {
  return x >= T{0} ? T{1} / (T{1} + std::exp(-x)) : std::exp(x) / (T{1} + std::exp(x));
}

template <class T>
void check_finite(std::span<const T> v, const char* what, std::size_t layer, const std::string& where) {
  for (T x : v)
    if (!std::isfinite(x)) throw NumericError(fmt::format("non-finite {} at layer {} ({})", what, layer, where));
}

template <class T>
void check_vec(std::span<const T> v, std::size_t d, const char* what) {
  if (v.size() != d) throw ShapeError(fmt::format("{} has length {}, expected {}", what, v.size(), d));
}

// Projection of the three attention inputs, summed: W4 s + W5 r + W6 q.
template <class T>
void attention_preact(std::span<const T> s_proj, std::span<const T> r_proj, std::span<const T> q_proj,
                      std::span<T> out) {
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = s_proj[k] + r_proj[k] + q_proj[k];
}

template <class T>
T attention_from_preact(const LayerParams<T>& l, std::span<const T> z, std::vector<T>& scratch) {
  scratch.resize(z.size());
  for (std::size_t k = 0; k < z.size(); ++k) scratch[k] = z[k] > T{0} ? z[k] : T{0};
  const T logit = kernels::dot<T>(l.w3.row(0), scratch);
  return sigmoid(logit);
}

}  // namespace

template <class T>
Matrix<T> update_relations(std::size_t layer, const Matrix<T>& rel, std::span<const T> q,
                           const ModelParams<T>& params) {
  const std::size_t d = params.dims.dim;
  if (layer >= params.layers.size()) throw ConfigError("update_relations: layer out of range");
  if (rel.cols() != d) throw ShapeError("update_relations: relation embeddings have the wrong width");
  check_vec(q, d, "question embedding");
  const auto& w1 = params.layers[layer].w1;
  Matrix<T> out(rel.rows(), d);
  std::vector<T> cat(2 * d);
  std::copy(q.begin(), q.end(), cat.begin() + d);
  for (std::size_t r = 0; r < rel.rows(); ++r) {
    std::copy(rel.row(r).begin(), rel.row(r).end(), cat.begin());
    kernels::gemv<T>(w1, cat, out.row(r));
  }
  return out;
}

template <class T>
T attention(std::span<const T> s, std::span<const T> r, std::span<const T> q, std::size_t layer,
            const ModelParams<T>& params) {
  const std::size_t d = params.dims.dim, a = params.dims.dim_attn;
  if (layer >= params.layers.size()) throw ConfigError("attention: layer out of range");
  check_vec(s, d, "subject embedding");
  check_vec(r, d, "relation embedding");
  check_vec(q, d, "question embedding");
  const auto& l = params.layers[layer];
  std::vector<T> sp(a), rp(a), qp(a), z(a), scratch;
  kernels::gemv<T>(l.w4, s, sp);
  kernels::gemv<T>(l.w5, r, rp);
  kernels::gemv<T>(l.w6, q, qp);
  attention_preact<T>(sp, rp, qp, z);
  check_finite<T>(z, "attention pre-activation", layer, "direct call");
  const T alpha = attention_from_preact(l, std::span<const T>(z), scratch);
  if (!std::isfinite(alpha)) throw NumericError("non-finite attention");
  return alpha;
}

template <class T>
PropagationOutput<T> propagate(const KnowledgeGraph& g, std::span<const T> q,
                               std::span<const EntityId> topics, const ModelParams<T>& params,
                               const Matrix<T>& rel_init, const ExpansionPolicy& policy,
                               PropagationTape<T>* tape, const ExpansionObserver* observer) {
  const std::size_t d = params.dims.dim, a = params.dims.dim_attn, L = params.dims.layers;
  check_vec(q, d, "question embedding");
  if (rel_init.rows() != g.relation_count() || rel_init.cols() != d)
    throw ShapeError(fmt::format("initial relation embeddings are {}x{}, expected {}x{}", rel_init.rows(),
                                 rel_init.cols(), g.relation_count(), d));
  if (params.layers.size() != L) throw ShapeError("parameter layer count does not match dims");

  SubgraphExpander expander(g, topics, policy);
  EntityState<T> h = init_entities<T>(g, topics, d);
  Matrix<T> rel = rel_init;
  if (tape) tape->layers.clear();

  // (edge, layer, alpha) in the order edges are visited; folded into records below.
  std::vector<std::pair<Triple, std::pair<std::uint32_t, T>>> alpha_log;

  std::vector<T> q_proj(a), scratch, msg(d);
  Matrix<T> rel_proj;
  for (std::size_t i = 0; i < L; ++i) {
    const auto& l = params.layers[i];
    expander.expand(observer);
    const auto& edges = expander.subgraph().edges;

    kernels::gemv<T>(l.w6, q, q_proj);
    rel_proj = Matrix<T>(g.relation_count(), a);
    for (RelationId r = 0; r < g.relation_count(); ++r) kernels::gemv<T>(l.w5, rel.row(r), rel_proj.row(r));

    EntityState<T> agg(d);
    Matrix<T> preact(tape ? edges.size() : 0, a);
    std::vector<T> alphas;
    if (tape) alphas.reserve(edges.size());
    std::vector<T> s_proj(a), z(a);
    EntityId last_subject = static_cast<EntityId>(-1);
    for (std::size_t k = 0; k < edges.size(); ++k) {
      const Triple& t = edges[k];
      const auto s = h.get(t.subject);
      if (t.subject != last_subject) {
        kernels::gemv<T>(l.w4, s, s_proj);
        last_subject = t.subject;
      }
      attention_preact<T>(s_proj, rel_proj.row(t.relation), q_proj, z);
      const T alpha = attention_from_preact(l, std::span<const T>(z), scratch);
      if (!std::isfinite(alpha))
        throw NumericError(fmt::format("non-finite attention at layer {} on edge ({}, {}, {})", i,
                                       g.entity_label(t.subject), g.relation_label(t.relation),
                                       g.entity_label(t.object)));
      const auto r = rel.row(t.relation);
      for (std::size_t c = 0; c < d; ++c) msg[c] = s[c] + r[c];
      auto dst = agg.touch(t.object);
      kernels::axpy<T>(alpha, msg, dst);
      alpha_log.push_back({t, {static_cast<std::uint32_t>(i), alpha}});
      if (tape) {
        std::copy(z.begin(), z.end(), preact.row(k).begin());
        alphas.push_back(alpha);
      }
    }
    agg.finalize();

    // W2 is factored out of the per-edge sum: W2 sum(alpha m) = sum(W2 alpha m).
    EntityState<T> next(d);
    for (std::size_t k = 0; k < agg.size(); ++k) {
      const EntityId e = agg.ids()[k];
      auto out = next.touch(e);
      kernels::gemv<T>(l.w2, agg.slot(k), out);
      check_finite<T>(out, "entity embedding", i, g.entity_label(e));
    }
    next.finalize();

    Matrix<T> rel_next = update_relations<T>(i, rel, q, params);
    for (RelationId r = 0; r < rel_next.rows(); ++r)
      check_finite<T>(rel_next.row(r), "relation embedding", i, g.relation_label(r));

    if (tape) {
      tape->layers.push_back({std::move(rel), std::move(h), edges, std::move(alphas), std::move(preact),
                              std::move(agg)});
    }
    h = std::move(next);
    rel = std::move(rel_next);
  }

  PropagationOutput<T> out;
  out.entities = std::move(h);
  out.relations = std::move(rel);
  out.subgraph = expander.release();

  std::stable_sort(alpha_log.begin(), alpha_log.end(),
                   [](const auto& x, const auto& y) { return x.first < y.first; });
  for (const auto& [edge, entry] : alpha_log) {
    if (out.attention.empty() || out.attention.back().edge != edge)
      out.attention.push_back({edge, {}, entry.second});
    auto& rec = out.attention.back();
    rec.per_layer.push_back(entry);
    rec.alpha_max = std::max(rec.alpha_max, entry.second);
  }
  return out;
}

template <class T>
T EntityScores<T>::at(EntityId e) const {
  auto it = std::lower_bound(ids.begin(), ids.end(), e);
  if (it == ids.end() || *it != e) return T{0};
  return values[static_cast<std::size_t>(it - ids.begin())];
}

template <class T>
EntityScores<T> score_entities(const EntityState<T>& state, const ModelParams<T>& params) {
  if (state.dim() != params.dims.dim) throw ShapeError("score_entities: embedding width mismatch");
  EntityScores<T> out;
  out.ids = state.ids();
  out.values.reserve(state.size());
  for (std::size_t k = 0; k < state.size(); ++k) out.values.push_back(kernels::dot<T>(params.w7.row(0), state.slot(k)));
  return out;
}

#define KGFR_INSTANTIATE(T)                                                                             \
  template class EntityState<T>;                                                                        \
  template EntityState<T> init_entities<T>(const KnowledgeGraph&, std::span<const EntityId>, std::size_t); \
  template Matrix<T> update_relations<T>(std::size_t, const Matrix<T>&, std::span<const T>,             \
                                         const ModelParams<T>&);                                        \
  template T attention<T>(std::span<const T>, std::span<const T>, std::span<const T>, std::size_t,      \
                          const ModelParams<T>&);                                                       \
  template PropagationOutput<T> propagate<T>(const KnowledgeGraph&, std::span<const T>,                 \
                                             std::span<const EntityId>, const ModelParams<T>&,          \
                                             const Matrix<T>&, const ExpansionPolicy&,                  \
                                             PropagationTape<T>*, const ExpansionObserver*);            \
  template struct EntityScores<T>;                                                                      \
  template EntityScores<T> score_entities<T>(const EntityState<T>&, const ModelParams<T>&);

KGFR_INSTANTIATE(float)
KGFR_INSTANTIATE(double)

#undef KGFR_INSTANTIATE

}  // namespace kgfr
