#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <unordered_map>
#include <vector>

#include "kgfr/kg_store.hpp"
#include "kgfr/matrix.hpp"
#include "kgfr/params.hpp"

namespace kgfr {

// --- asymmetric progressive expansion ----------------------------------------

inline constexpr std::int64_t kUnboundedLambda = std::numeric_limits<std::int64_t>::max();

struct ExpansionPolicy {
  // Expand hop by hop from the topics. Off: every hop activates the whole graph.
  bool progressive = true;
  // Cap (entity, relation) groups larger than lambda to already-reached objects.
  bool pruning = true;
  std::int64_t lambda = 100;
  // Abort with CapacityError once more edges than this are reached (0 = no cap).
  std::size_t max_edges = 0;
};

// Per-group instrumentation emitted by SubgraphExpander::expand.
struct GroupExpansion {
  std::size_t hop;
  EntityId entity;
  RelationId relation;
  std::size_t group_size;       // |C_{e,r}|
  std::size_t reached_in_group; // |C_{e,r} ∩ S_hop|
  std::size_t emitted_new;      // edges of this group added at this hop
  bool pruned;                  // |C_{e,r}| > lambda with pruning on
};

using ExpansionObserver = std::function<void(const GroupExpansion&)>;

// Retrieval subgraph after some number of hops. reached[i] is S_i (sorted),
// frontier[i] the edges first reached at hop i, edges the cumulative set.
struct RetrievalSubgraph {
  std::vector<std::vector<EntityId>> reached;
  std::vector<std::vector<Triple>> frontier;
  std::vector<Triple> edges;  // sorted by (subject, relation, object)

  std::size_t hops() const noexcept { return frontier.size(); }
  const std::vector<EntityId>& entities() const { return reached.back(); }
  bool has_entity(EntityId e) const;
  bool has_edge(const Triple& t) const;
};

class SubgraphExpander {
 public:
  SubgraphExpander(const KnowledgeGraph& g, std::span<const EntityId> topics, ExpansionPolicy policy);

  // One hop: grows the edge set from every entity in S_hop, then S_{hop+1}
  // = S_hop plus all endpoints. Returns the edges new at this hop (sorted).
  const std::vector<Triple>& expand(const ExpansionObserver* observer = nullptr);

  std::size_t hop() const noexcept { return subgraph_.frontier.size(); }
  const RetrievalSubgraph& subgraph() const noexcept { return subgraph_; }
  RetrievalSubgraph release() { return std::move(subgraph_); }

 private:
  void emit(const Triple& t, std::vector<Triple>& out);

  const KnowledgeGraph& g_;
  ExpansionPolicy policy_;
  RetrievalSubgraph subgraph_;
  std::vector<char> in_reached_;   // membership of S_hop
  std::vector<char> expanded_;     // entity already emitted its unpruned groups
  std::vector<char> pruned_groups_;// entity has at least one pruned group
  std::unordered_map<Triple, char, TripleHash> edge_set_;
};

// --- message passing ---------------------------------------------------------

// Sparse entity embeddings; absent entities are the zero vector.
template <class T>
class EntityState {
 public:
  explicit EntityState(std::size_t dim = 0) : dim_(dim), zero_(dim, T{0}) {}

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return ids_.size(); }
  const std::vector<EntityId>& ids() const noexcept { return ids_; }
  bool has(EntityId e) const { return index_.count(e) > 0; }

  std::span<const T> get(EntityId e) const {
    auto it = index_.find(e);
    if (it == index_.end()) return zero_;
    return {data_.data() + it->second * dim_, dim_};
  }
  std::span<T> slot(std::size_t i) { return {data_.data() + i * dim_, dim_}; }
  std::span<const T> slot(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }

  // Adds a zero row for e (or returns the existing one).
  std::span<T> touch(EntityId e);
  // Sorts rows by entity id; call after all touches.
  void finalize();

 private:
  std::size_t dim_;
  std::vector<T> zero_;
  std::vector<EntityId> ids_;
  std::vector<T> data_;
  std::unordered_map<EntityId, std::size_t> index_;
};

template <class T>
EntityState<T> init_entities(const KnowledgeGraph& g, std::span<const EntityId> topics, std::size_t dim);

template <class T>
struct AttentionRecord {
  Triple edge;
  std::vector<std::pair<std::uint32_t, T>> per_layer;  // (layer, alpha)
  T alpha_max;
};

// Per-layer intermediates kept for the backward pass.
template <class T>
struct LayerTape {
  Matrix<T> relations;          // R^(i)
  EntityState<T> entities;      // H^(i)
  std::vector<Triple> edges;    // active edges, (s, r, o) order
  std::vector<T> alpha;         // per edge
  Matrix<T> preact;             // per edge, W4 s + W5 r + W6 q
  EntityState<T> aggregate;     // per object, sum of alpha * (s + r)
};

template <class T>
struct PropagationTape {
  std::vector<LayerTape<T>> layers;
};

template <class T>
struct PropagationOutput {
  EntityState<T> entities;                 // H^(L)
  RetrievalSubgraph subgraph;
  std::vector<AttentionRecord<T>> attention;  // sorted by edge
  Matrix<T> relations;                     // R^(L)
};

// r^(i+1) = W1[i] [r^(i) ; q] for every row of rel.
template <class T>
Matrix<T> update_relations(std::size_t layer, const Matrix<T>& rel, std::span<const T> q,
                           const ModelParams<T>& params);

// sigmoid(W3 relu(W4 s + W5 r + W6 q)) at the given layer.
template <class T>
T attention(std::span<const T> s, std::span<const T> r, std::span<const T> q, std::size_t layer,
            const ModelParams<T>& params);

// Full L-layer question-conditioned propagation with APP expansion.
// rel_init holds r^(0) for every relation id.
template <class T>
PropagationOutput<T> propagate(const KnowledgeGraph& g, std::span<const T> q,
                               std::span<const EntityId> topics, const ModelParams<T>& params,
                               const Matrix<T>& rel_init, const ExpansionPolicy& policy,
                               PropagationTape<T>* tape = nullptr,
                               const ExpansionObserver* observer = nullptr);

// Sparse scores; entities without an entry score exactly 0.
template <class T>
struct EntityScores {
  std::vector<EntityId> ids;
  std::vector<T> values;

  T at(EntityId e) const;
};

// c_e = W7 e^(L) for every reached entity.
template <class T>
EntityScores<T> score_entities(const EntityState<T>& state, const ModelParams<T>& params);

}  // namespace kgfr
