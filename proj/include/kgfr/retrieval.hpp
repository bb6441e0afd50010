#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "kgfr/embedding.hpp"
#include "kgfr/params.hpp"
#include "kgfr/propagation.hpp"

namespace kgfr {

struct ScoredEntity {
  EntityId entity;
  double score;

  friend bool operator==(const ScoredEntity&, const ScoredEntity&) = default;
};

struct NodeRetrieval {
  std::vector<ScoredEntity> candidates;  // score desc, id asc
  std::vector<EntityId> unreached;       // filter members outside S_L (score 0)
};

// Top-k of S_L by score; restricted to filter ∩ S_L when a filter is given.
NodeRetrieval node_retrieve(const EntityScores<float>& scores, const RetrievalSubgraph& sub, std::size_t k,
                            const std::vector<EntityId>* filter = nullptr);

struct Fact {
  Triple edge;
  double alpha_max;

  friend bool operator==(const Fact&, const Fact&) = default;
};

// Top-n incoming edges (s, r, e) of e by alpha_max desc, ties by (s, r) asc.
// records must be sorted by edge, as produced by propagate.
std::vector<Fact> edge_retrieve(std::span<const AttentionRecord<float>> records, EntityId e, std::size_t n);

struct Path {
  EntityId from;
  EntityId to;
  std::vector<Triple> edges;  // empty when from == to

  friend bool operator==(const Path&, const Path&) = default;
};

// For every (from, topic) pair, the directed shortest paths inside the
// subgraph, at most cap per pair, lexicographically smallest edge sequences
// first. Pairs without a route contribute nothing.
std::vector<Path> path_retrieve(const RetrievalSubgraph& sub, std::span<const EntityId> froms,
                                std::span<const EntityId> topics, std::size_t cap);

struct RetrievalConfig {
  std::size_t k = 20;
  std::size_t n = 20;
  std::size_t path_cap = 10;
};

struct RetrievalBundle {
  std::vector<ScoredEntity> candidates;                   // C_q
  std::vector<EntityId> unreached_candidates;
  std::vector<std::pair<EntityId, std::vector<Fact>>> facts;  // I_{q;e} for e in P_q ∪ C_q
  std::vector<Path> paths;                                // P^path_q

  // I_q: distinct facts over all entities, in first-seen order.
  std::vector<Fact> fact_union() const;
};

// Assembles the bundle from a finished propagation.
RetrievalBundle build_bundle(const PropagationOutput<float>& out, const EntityScores<float>& scores,
                             std::span<const EntityId> topics, const RetrievalConfig& config,
                             const std::vector<EntityId>* filter = nullptr);

nlohmann::json bundle_to_json(const RetrievalBundle& bundle, const KnowledgeGraph& g);

// Everything needed to answer retrieval requests for one graph and model.
class Retriever {
 public:
  Retriever(const KnowledgeGraph& g, const ModelParams<float>& params, const EmbeddingProvider& provider,
            Matrix<float> rel_init, ExpansionPolicy policy);

  struct Result {
    std::shared_ptr<const PropagationOutput<float>> propagation;
    EntityScores<float> scores;
    RetrievalBundle bundle;
  };

  Result retrieve(const std::string& text, std::span<const EntityId> topics, const RetrievalConfig& config,
                  const std::vector<EntityId>* filter = nullptr) const;
  Result retrieve(std::span<const float> q, std::span<const EntityId> topics, const RetrievalConfig& config,
                  const std::vector<EntityId>* filter = nullptr) const;

  const KnowledgeGraph& graph() const noexcept { return g_; }
  const EmbeddingProvider& provider() const noexcept { return provider_; }

 private:
  const KnowledgeGraph& g_;
  const ModelParams<float>& params_;
  const EmbeddingProvider& provider_;
  Matrix<float> rel_init_;
  ExpansionPolicy policy_;
};

}  // namespace kgfr
