#include <algorithm>

#include "kgfr/error.hpp"
#include "kgfr/propagation.hpp"

namespace kgfr {

bool RetrievalSubgraph::has_entity(EntityId e) const {
  const auto& s = entities();
  return std::binary_search(s.begin(), s.end(), e);
}

bool RetrievalSubgraph::has_edge(const Triple& t) const {
  return std::binary_search(edges.begin(), edges.end(), t);
}

SubgraphExpander::SubgraphExpander(const KnowledgeGraph& g, std::span<const EntityId> topics,
                                   ExpansionPolicy policy)
    : g_(g), policy_(policy) {
  if (policy_.lambda < 0) throw ConfigError("lambda must be non-negative");
  if (topics.empty()) throw PreconditionError("at least one topic entity is required");
  std::vector<EntityId> s0(topics.begin(), topics.end());
  for (EntityId e : s0)
    if (e >= g.entity_count()) throw LookupError("topic entity id " + std::to_string(e) + " out of range");
  std::sort(s0.begin(), s0.end());
  s0.erase(std::unique(s0.begin(), s0.end()), s0.end());
  in_reached_.assign(g.entity_count(), 0);
  expanded_.assign(g.entity_count(), 0);
  pruned_groups_.assign(g.entity_count(), 0);
  for (EntityId e : s0) in_reached_[e] = 1;
  subgraph_.reached.push_back(std::move(s0));
}

void SubgraphExpander::emit(const Triple& t, std::vector<Triple>& out) { out.push_back(t); }

const std::vector<Triple>& SubgraphExpander::expand(const ExpansionObserver* observer) {
  const std::size_t hop = subgraph_.frontier.size();
  const auto& current = subgraph_.reached.back();
  std::vector<Triple> fresh;

  if (!policy_.progressive) {
    if (hop == 0) fresh.assign(g_.triples().begin(), g_.triples().end());
  } else {
    const auto lambda = static_cast<std::uint64_t>(policy_.lambda);
    for (EntityId e : current) {
      if (expanded_[e] && !pruned_groups_[e] && observer == nullptr) continue;
      for (const RelationGroup& grp : g_.groups(e)) {
        const auto objects = g_.group_objects(grp);
        const bool pruned = policy_.pruning && objects.size() > lambda;
        std::size_t emitted = 0;
        std::size_t reached_in_group = 0;
        if (!pruned) {
          if (!expanded_[e]) {
            for (EntityId o : objects) emit({e, grp.relation, o}, fresh);
            emitted = objects.size();
          }
          if (observer != nullptr)
            for (EntityId o : objects) reached_in_group += in_reached_[o];
        } else {
          pruned_groups_[e] = 1;
          auto take = [&](EntityId o) {
            ++reached_in_group;
            const Triple t{e, grp.relation, o};
            if (edge_set_.emplace(t, 1).second) {
              emit(t, fresh);
              ++emitted;
            }
          };
          if (current.size() < objects.size()) {
            // Walk S_hop and probe the sorted group.
            for (EntityId o : current)
              if (std::binary_search(objects.begin(), objects.end(), o)) take(o);
          } else {
            for (EntityId o : objects)
              if (in_reached_[o]) take(o);
          }
        }
        if (observer != nullptr)
          (*observer)({hop, e, grp.relation, objects.size(), reached_in_group, emitted, pruned});
      }
      expanded_[e] = 1;
    }
  }

  // Emission order is (entity asc, relation asc, object asc) except that the
  // pruned branch may walk S_hop; sort to restore the canonical order.
  std::sort(fresh.begin(), fresh.end());

  std::vector<Triple> merged;
  merged.reserve(subgraph_.edges.size() + fresh.size());
  std::merge(subgraph_.edges.begin(), subgraph_.edges.end(), fresh.begin(), fresh.end(),
             std::back_inserter(merged));
  subgraph_.edges = std::move(merged);
  if (policy_.max_edges != 0 && subgraph_.edges.size() > policy_.max_edges)
    throw CapacityError("retrieval subgraph exceeded " + std::to_string(policy_.max_edges) + " edges");

  std::vector<EntityId> added;
  for (const Triple& t : fresh) {
    for (EntityId x : {t.subject, t.object})
      if (!in_reached_[x]) {
        in_reached_[x] = 1;
        added.push_back(x);
      }
  }
  std::sort(added.begin(), added.end());
  std::vector<EntityId> next;
  next.reserve(current.size() + added.size());
  std::merge(current.begin(), current.end(), added.begin(), added.end(), std::back_inserter(next));
  subgraph_.reached.push_back(std::move(next));
  subgraph_.frontier.push_back(std::move(fresh));
  return subgraph_.frontier.back();
}

}  // namespace kgfr
