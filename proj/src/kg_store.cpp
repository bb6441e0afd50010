#include "kgfr/kg_store.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "kgfr/error.hpp"

namespace kgfr {

std::uint32_t Vocabulary::intern(std::string_view label) {
  auto it = index_.find(std::string(label));
  if (it != index_.end()) return it->second;
  const auto id = static_cast<std::uint32_t>(labels_.size());
  labels_.emplace_back(label);
  index_.emplace(labels_.back(), id);
  return id;
}

std::optional<std::uint32_t> Vocabulary::find(std::string_view label) const {
  auto it = index_.find(std::string(label));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const std::string& Vocabulary::label(std::uint32_t id) const {
  if (id >= labels_.size()) throw LookupError("id " + std::to_string(id) + " out of range");
  return labels_[id];
}

namespace {

std::string_view trim_cr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

bool ends_with_inverse_suffix(std::string_view label) {
  return label.size() >= kInverseSuffix.size() &&
         label.substr(label.size() - kInverseSuffix.size()) == kInverseSuffix;
}

}  // namespace

KnowledgeGraph KnowledgeGraph::load_triples(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open triple file '" + path.string() + "'");
  return parse_triples(in, path.string());
}

KnowledgeGraph KnowledgeGraph::parse_triples(std::istream& in, std::string_view source) {
  std::vector<LabeledTriple> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = trim_cr(line);
    if (view.empty() || view.front() == '#') continue;
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
      const auto tab = view.find('\t', start);
      fields.push_back(view.substr(start, tab == std::string_view::npos ? tab : tab - start));
      if (tab == std::string_view::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 3)
      throw ParseError(std::string(source) + ": expected 3 tab-separated fields, got " +
                           std::to_string(fields.size()),
                       line_no);
    for (auto f : fields)
      if (f.empty()) throw ParseError(std::string(source) + ": empty field", line_no);
    if (ends_with_inverse_suffix(fields[1]))
      throw ParseError(std::string(source) + ": relation label '" + std::string(fields[1]) +
                           "' uses the reserved inverse suffix",
                       line_no);
    rows.push_back({std::string(fields[0]), std::string(fields[1]), std::string(fields[2])});
  }
  if (rows.empty()) throw ParseError(std::string(source) + ": graph has no triples");
  return from_labeled(rows);
}

KnowledgeGraph KnowledgeGraph::from_labeled(std::span<const LabeledTriple> triples) {
  if (triples.empty()) throw ParseError("graph has no triples");
  KnowledgeGraph g;
  g.triples_.reserve(triples.size());
  for (const auto& t : triples) {
    if (ends_with_inverse_suffix(t.relation))
      throw ParseError("relation label '" + t.relation + "' uses the reserved inverse suffix");
    const EntityId s = g.entities_.intern(t.subject);
    const RelationId r = g.relations_.intern(t.relation);
    const EntityId o = g.entities_.intern(t.object);
    g.triples_.push_back({s, r, o});
  }
  g.forward_relations_ = g.relations_.size();
  std::sort(g.triples_.begin(), g.triples_.end());
  g.triples_.erase(std::unique(g.triples_.begin(), g.triples_.end()), g.triples_.end());
  g.rebuild_index();
  return g;
}

KnowledgeGraph KnowledgeGraph::augment_inverse() const {
  if (augmented_) throw PreconditionError("augment_inverse: graph already carries inverse relations");
  KnowledgeGraph g = *this;
  const auto forward = static_cast<RelationId>(forward_relations_);
  for (RelationId r = 0; r < forward; ++r)
    g.relations_.intern(relations_.label(r) + std::string(kInverseSuffix));
  g.triples_.reserve(triples_.size() * 2);
  for (const Triple& t : triples_) g.triples_.push_back({t.object, t.relation + forward, t.subject});
  std::sort(g.triples_.begin(), g.triples_.end());
  g.augmented_ = true;
  g.rebuild_index();
  return g;
}

void KnowledgeGraph::rebuild_index() {
  const std::size_t n = entities_.size();
  group_offsets_.assign(n + 1, 0);
  groups_.clear();
  objects_.clear();
  objects_.reserve(triples_.size());
  max_group_size_ = 0;
  std::size_t i = 0;
  for (EntityId e = 0; e < n; ++e) {
    group_offsets_[e] = static_cast<std::uint32_t>(groups_.size());
    while (i < triples_.size() && triples_[i].subject == e) {
      const RelationId r = triples_[i].relation;
      RelationGroup grp{r, static_cast<std::uint32_t>(objects_.size()), 0};
      while (i < triples_.size() && triples_[i].subject == e && triples_[i].relation == r)
        objects_.push_back(triples_[i++].object);
      grp.end = static_cast<std::uint32_t>(objects_.size());
      max_group_size_ = std::max<std::size_t>(max_group_size_, grp.size());
      groups_.push_back(grp);
    }
  }
  group_offsets_[n] = static_cast<std::uint32_t>(groups_.size());
}

void KnowledgeGraph::check_entity(EntityId e) const {
  if (e >= entities_.size()) throw LookupError("unknown entity id " + std::to_string(e));
}

void KnowledgeGraph::check_relation(RelationId r) const {
  if (r >= relations_.size()) throw LookupError("unknown relation id " + std::to_string(r));
}

const std::string& KnowledgeGraph::entity_label(EntityId e) const {
  check_entity(e);
  return entities_.label(e);
}

const std::string& KnowledgeGraph::relation_label(RelationId r) const {
  check_relation(r);
  return relations_.label(r);
}

EntityId KnowledgeGraph::entity_id(std::string_view label) const {
  if (auto id = entities_.find(label)) return *id;
  throw LookupError("unknown entity '" + std::string(label) + "'");
}

RelationId KnowledgeGraph::relation_id(std::string_view label) const {
  if (auto id = relations_.find(label)) return *id;
  throw LookupError("unknown relation '" + std::string(label) + "'");
}

bool KnowledgeGraph::is_inverse(RelationId r) const {
  check_relation(r);
  return r >= forward_relations_;
}

RelationId KnowledgeGraph::partner(RelationId r) const {
  check_relation(r);
  if (!augmented_) throw PreconditionError("partner: graph has no inverse relations");
  const auto forward = static_cast<RelationId>(forward_relations_);
  return r < forward ? r + forward : r - forward;
}

std::span<const EntityId> KnowledgeGraph::candidate_set(EntityId e, RelationId r) const {
  check_entity(e);
  check_relation(r);
  const auto gs = groups(e);
  auto it = std::lower_bound(gs.begin(), gs.end(), r,
                             [](const RelationGroup& g, RelationId rel) { return g.relation < rel; });
  if (it == gs.end() || it->relation != r) return {};
  return group_objects(*it);
}

std::span<const RelationGroup> KnowledgeGraph::groups(EntityId e) const {
  check_entity(e);
  return {groups_.data() + group_offsets_[e], group_offsets_[e + 1] - group_offsets_[e]};
}

bool KnowledgeGraph::contains(const Triple& t) const {
  return std::binary_search(triples_.begin(), triples_.end(), t);
}

void KnowledgeGraph::write_triples(std::ostream& out) const {
  for (const Triple& t : triples_) {
    if (t.relation >= forward_relations_) continue;
    out << entities_.label(t.subject) << '\t' << relations_.label(t.relation) << '\t'
        << entities_.label(t.object) << '\n';
  }
}

}  // namespace kgfr
