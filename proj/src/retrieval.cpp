#include "kgfr/retrieval.hpp"

#include <algorithm>
#include <deque>
#include <limits>
#include <set>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "kgfr/error.hpp"

namespace kgfr {

NodeRetrieval node_retrieve(const EntityScores<float>& scores, const RetrievalSubgraph& sub, std::size_t k,
                            const std::vector<EntityId>* filter) {
  if (k == 0) throw PreconditionError("node_retrieve: k must be at least 1");
  NodeRetrieval out;
  std::vector<ScoredEntity> pool;
  if (filter) {
    for (EntityId e : *filter) {
      if (sub.has_entity(e))
        pool.push_back({e, scores.at(e)});
      else
        out.unreached.push_back(e);
    }
  } else {
    for (EntityId e : sub.entities()) pool.push_back({e, scores.at(e)});
  }
  auto better = [](const ScoredEntity& x, const ScoredEntity& y) {
    return x.score != y.score ? x.score > y.score : x.entity < y.entity;
  };
  const std::size_t take = std::min(k, pool.size());
  std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take), pool.end(), better);
  pool.resize(take);
  out.candidates = std::move(pool);
  std::sort(out.unreached.begin(), out.unreached.end());
  return out;
}

std::vector<Fact> edge_retrieve(std::span<const AttentionRecord<float>> records, EntityId e, std::size_t n) {
  if (n == 0) throw PreconditionError("edge_retrieve: n must be at least 1");
  std::vector<Fact> pool;
  for (const auto& rec : records)
    if (rec.edge.object == e) pool.push_back({rec.edge, rec.alpha_max});
  auto better = [](const Fact& x, const Fact& y) {
    if (x.alpha_max != y.alpha_max) return x.alpha_max > y.alpha_max;
    if (x.edge.subject != y.edge.subject) return x.edge.subject < y.edge.subject;
    return x.edge.relation < y.edge.relation;
  };
  const std::size_t take = std::min(n, pool.size());
  std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take), pool.end(), better);
  pool.resize(take);
  return pool;
}

namespace {

// Compact view of the subgraph: local node ids and CSR out/in lists.
struct LocalGraph {
  std::vector<EntityId> nodes;  // sorted global ids
  std::vector<std::uint32_t> out_off, in_off;
  std::vector<std::uint32_t> out_edge, in_edge;  // indexes into edges (sorted)
  const std::vector<Triple>* edges = nullptr;

  explicit LocalGraph(const RetrievalSubgraph& sub) : nodes(sub.entities()), edges(&sub.edges) {
    const std::size_t n = nodes.size();
    out_off.assign(n + 1, 0);
    in_off.assign(n + 1, 0);
    for (const Triple& t : sub.edges) {
      ++out_off[local(t.subject) + 1];
      ++in_off[local(t.object) + 1];
    }
    for (std::size_t i = 0; i < n; ++i) {
      out_off[i + 1] += out_off[i];
      in_off[i + 1] += in_off[i];
    }
    out_edge.resize(sub.edges.size());
    in_edge.resize(sub.edges.size());
    auto out_fill = out_off, in_fill = in_off;
    for (std::uint32_t k = 0; k < sub.edges.size(); ++k) {
      out_edge[out_fill[local(sub.edges[k].subject)]++] = k;
      in_edge[in_fill[local(sub.edges[k].object)]++] = k;
    }
  }

  std::uint32_t local(EntityId e) const {
    auto it = std::lower_bound(nodes.begin(), nodes.end(), e);
    if (it == nodes.end() || *it != e) throw LookupError("entity " + std::to_string(e) + " is not in the subgraph");
    return static_cast<std::uint32_t>(it - nodes.begin());
  }
};

constexpr std::uint32_t kUnreached = std::numeric_limits<std::uint32_t>::max();

}  // namespace

std::vector<Path> path_retrieve(const RetrievalSubgraph& sub, std::span<const EntityId> froms,
                                std::span<const EntityId> topics, std::size_t cap) {
  if (cap == 0) throw PreconditionError("path_retrieve: cap must be at least 1");
  const LocalGraph lg(sub);
  std::vector<Path> out;
  std::vector<std::uint32_t> dist(lg.nodes.size());
  std::vector<std::uint32_t> topic_order(topics.begin(), topics.end());

  for (EntityId from : froms) {
    const std::uint32_t src = lg.local(from);
    for (EntityId topic : topics) {
      const std::uint32_t dst = lg.local(topic);
      // Distances to the topic over reversed edges.
      std::fill(dist.begin(), dist.end(), kUnreached);
      std::deque<std::uint32_t> queue{dst};
      dist[dst] = 0;
      while (!queue.empty() && dist[src] == kUnreached) {
        const std::uint32_t v = queue.front();
        queue.pop_front();
        for (std::uint32_t i = lg.in_off[v]; i < lg.in_off[v + 1]; ++i) {
          const std::uint32_t u = lg.local((*lg.edges)[lg.in_edge[i]].subject);
          if (dist[u] == kUnreached) {
            dist[u] = dist[v] + 1;
            queue.push_back(u);
          }
        }
      }
      if (dist[src] == kUnreached) continue;

      // Depth-first over distance-decreasing edges in sorted edge order,
      // which yields lexicographic path order.
      std::size_t found = 0;
      std::vector<Triple> stack;
      auto walk = [&](auto&& self, std::uint32_t v) -> void {
        if (found >= cap) return;
        if (v == dst) {
          out.push_back({from, topic, stack});
          ++found;
          return;
        }
        for (std::uint32_t i = lg.out_off[v]; i < lg.out_off[v + 1] && found < cap; ++i) {
          const Triple& t = (*lg.edges)[lg.out_edge[i]];
          const std::uint32_t w = lg.local(t.object);
          if (dist[w] + 1 != dist[v]) continue;
          stack.push_back(t);
          self(self, w);
          stack.pop_back();
        }
      };
      walk(walk, src);
    }
  }
  return out;
}

std::vector<Fact> RetrievalBundle::fact_union() const {
  std::vector<Fact> out;
  std::set<Triple> seen;
  for (const auto& [e, fs] : facts)
    for (const auto& f : fs)
      if (seen.insert(f.edge).second) out.push_back(f);
  return out;
}

RetrievalBundle build_bundle(const PropagationOutput<float>& out, const EntityScores<float>& scores,
                             std::span<const EntityId> topics, const RetrievalConfig& config,
                             const std::vector<EntityId>* filter) {
  RetrievalBundle b;
  auto nodes = node_retrieve(scores, out.subgraph, config.k, filter);
  b.candidates = std::move(nodes.candidates);
  b.unreached_candidates = std::move(nodes.unreached);

  std::vector<EntityId> focus(topics.begin(), topics.end());
  for (const auto& c : b.candidates)
    if (std::find(focus.begin(), focus.end(), c.entity) == focus.end()) focus.push_back(c.entity);
  for (EntityId e : focus) b.facts.push_back({e, edge_retrieve(out.attention, e, config.n)});

  std::vector<EntityId> froms;
  for (const auto& c : b.candidates) froms.push_back(c.entity);
  b.paths = path_retrieve(out.subgraph, froms, topics, config.path_cap);
  return b;
}

nlohmann::json bundle_to_json(const RetrievalBundle& bundle, const KnowledgeGraph& g) {
  auto triple = [&](const Triple& t) {
    return nlohmann::json{{"subject", g.entity_label(t.subject)},
                          {"relation", g.relation_label(t.relation)},
                          {"object", g.entity_label(t.object)}};
  };
  nlohmann::json j;
  j["candidates"] = nlohmann::json::array();
  for (const auto& c : bundle.candidates)
    j["candidates"].push_back({{"entity", g.entity_label(c.entity)}, {"score", c.score}});
  j["unreached_candidates"] = nlohmann::json::array();
  for (EntityId e : bundle.unreached_candidates) j["unreached_candidates"].push_back(g.entity_label(e));
  j["facts"] = nlohmann::json::array();
  for (const auto& [e, fs] : bundle.facts) {
    nlohmann::json item{{"entity", g.entity_label(e)}, {"facts", nlohmann::json::array()}};
    for (const auto& f : fs) {
      auto t = triple(f.edge);
      t["alpha_max"] = f.alpha_max;
      item["facts"].push_back(std::move(t));
    }
    j["facts"].push_back(std::move(item));
  }
  j["paths"] = nlohmann::json::array();
  for (const auto& p : bundle.paths) {
    nlohmann::json labels = nlohmann::json::array({g.entity_label(p.from)});
    for (const auto& t : p.edges) {
      labels.push_back(g.relation_label(t.relation));
      labels.push_back(g.entity_label(t.object));
    }
    j["paths"].push_back({{"from", g.entity_label(p.from)}, {"to", g.entity_label(p.to)}, {"sequence", labels}});
  }
  return j;
}

Retriever::Retriever(const KnowledgeGraph& g, const ModelParams<float>& params, const EmbeddingProvider& provider,
                     Matrix<float> rel_init, ExpansionPolicy policy)
    : g_(g), params_(params), provider_(provider), rel_init_(std::move(rel_init)), policy_(policy) {
  params_.validate();
  if (provider_.dim() != params_.dims.dim)
    throw ConfigError("embedding dimension " + std::to_string(provider_.dim()) + " does not match model dimension " +
                      std::to_string(params_.dims.dim));
}

Retriever::Result Retriever::retrieve(const std::string& text, std::span<const EntityId> topics,
                                      const RetrievalConfig& config, const std::vector<EntityId>* filter) const {
  const auto q = provider_.encode(text);
  return retrieve(std::span<const float>(q.vector), topics, config, filter);
}

Retriever::Result Retriever::retrieve(std::span<const float> q, std::span<const EntityId> topics,
                                      const RetrievalConfig& config, const std::vector<EntityId>* filter) const {
  Result r;
  auto prop = std::make_shared<PropagationOutput<float>>(
      propagate<float>(g_, q, topics, params_, rel_init_, policy_));
  r.scores = score_entities<float>(prop->entities, params_);
  r.bundle = build_bundle(*prop, r.scores, topics, config, filter);
  r.propagation = std::move(prop);
  return r;
}

}  // namespace kgfr
