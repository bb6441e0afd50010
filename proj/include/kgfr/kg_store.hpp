#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace kgfr {

using EntityId = std::uint32_t;
using RelationId = std::uint32_t;

struct Triple {
  EntityId subject = 0;
  RelationId relation = 0;
  EntityId object = 0;

  friend auto operator<=>(const Triple&, const Triple&) = default;
};

struct TripleHash {
  std::size_t operator()(const Triple& t) const noexcept {
    std::uint64_t h = (std::uint64_t{t.subject} << 32) ^ t.object;
    h ^= std::uint64_t{t.relation} * 0x9E3779B97F4A7C15ull;
    h ^= h >> 29;
    h *= 0xBF58476D1CE4E5B9ull;
    return static_cast<std::size_t>(h ^ (h >> 32));
  }
};

// Labels appended to a forward relation label to name its inverse. Forward
// labels carrying this suffix are rejected on load.
inline constexpr std::string_view kInverseSuffix = "^-1";

// String <-> dense id table in first-insertion order.
class Vocabulary {
 public:
  std::uint32_t intern(std::string_view label);
  std::optional<std::uint32_t> find(std::string_view label) const;
  const std::string& label(std::uint32_t id) const;
  std::size_t size() const noexcept { return labels_.size(); }
  const std::vector<std::string>& labels() const noexcept { return labels_; }

 private:
  std::vector<std::string> labels_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

// One (subject, relation) bucket of the adjacency index: objects_[begin, end).
struct RelationGroup {
  RelationId relation;
  std::uint32_t begin;
  std::uint32_t end;
  std::uint32_t size() const noexcept { return end - begin; }
};

// Immutable triple store. Triples are kept sorted by (subject, relation,
// object) and deduplicated; adjacency groups objects by (subject, relation).
class KnowledgeGraph {
 public:
  struct LabeledTriple {
    std::string subject;
    std::string relation;
    std::string object;
  };

  // Forward graph from tab-separated subject/relation/object lines.
  // '#'-prefixed and blank lines are skipped.
  static KnowledgeGraph load_triples(const std::filesystem::path& path);
  static KnowledgeGraph parse_triples(std::istream& in, std::string_view source = "<stream>");
  static KnowledgeGraph from_labeled(std::span<const LabeledTriple> triples);

  // New graph with r^-1 appended for every relation r (id r + F, F = number
  // of forward relations) and (o, r^-1, s) for every (s, r, o).
  [[nodiscard]] KnowledgeGraph augment_inverse() const;

  bool is_augmented() const noexcept { return augmented_; }
  std::size_t entity_count() const noexcept { return entities_.size(); }
  std::size_t relation_count() const noexcept { return relations_.size(); }
  std::size_t forward_relation_count() const noexcept { return forward_relations_; }
  std::size_t triple_count() const noexcept { return triples_.size(); }
  std::span<const Triple> triples() const noexcept { return triples_; }

  const std::string& entity_label(EntityId e) const;
  const std::string& relation_label(RelationId r) const;
  std::optional<EntityId> find_entity(std::string_view label) const { return entities_.find(label); }
  std::optional<RelationId> find_relation(std::string_view label) const { return relations_.find(label); }
  EntityId entity_id(std::string_view label) const;
  RelationId relation_id(std::string_view label) const;

  bool is_inverse(RelationId r) const;
  // Partner of r (forward <-> inverse). Only valid on augmented graphs.
  RelationId partner(RelationId r) const;

  // C_{e,r}: sorted objects of (e, r, *). Empty when the bucket is empty.
  std::span<const EntityId> candidate_set(EntityId e, RelationId r) const;
  std::span<const RelationGroup> groups(EntityId e) const;
  std::span<const EntityId> group_objects(const RelationGroup& g) const {
    return {objects_.data() + g.begin, g.size()};
  }
  std::size_t max_group_size() const noexcept { return max_group_size_; }
  bool contains(const Triple& t) const;

  void write_triples(std::ostream& out) const;

 private:
  void rebuild_index();
  void check_entity(EntityId e) const;
  void check_relation(RelationId r) const;

  Vocabulary entities_;
  Vocabulary relations_;
  std::size_t forward_relations_ = 0;
  bool augmented_ = false;
  std::vector<Triple> triples_;

  std::vector<std::uint32_t> group_offsets_;  // per entity into groups_, size E+1
  std::vector<RelationGroup> groups_;
  std::vector<EntityId> objects_;
  std::size_t max_group_size_ = 0;
};

}  // namespace kgfr
