#pragma once

// Independent reference implementations used by the unit and acceptance
// tests. Everything here is written for clarity over speed and shares no
// code paths with the library beyond the graph container.

#include <array>
#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "kgfr/kg_store.hpp"
#include "kgfr/params.hpp"
#include "kgfr/propagation.hpp"

namespace kgfr::testing {

// Forward graph from literal triples, inverse-augmented unless asked not to.
KnowledgeGraph make_graph(std::initializer_list<std::array<const char*, 3>> triples, bool augment = true);

// Random triples over entities "<prefix>e<i>" and relations "r<j>".
std::vector<KnowledgeGraph::LabeledTriple> random_triples(std::mt19937_64& rng, const std::string& prefix,
                                                          std::size_t entities, std::size_t relations,
                                                          std::size_t triples);
KnowledgeGraph random_graph(std::uint64_t seed, std::size_t entities, std::size_t relations, std::size_t triples);

// A few hub entities with large single-relation groups plus random noise.
KnowledgeGraph hub_graph(std::uint64_t seed, std::size_t hubs, std::size_t spokes, std::size_t noise_triples);

// Cumulative reach after every hop, straight from the case split on group
// size: S[0] = topics, N[0] = {}.
struct AppTrace {
  std::vector<std::set<EntityId>> reached;
  std::vector<std::set<Triple>> edges;
};
AppTrace app_oracle(const KnowledgeGraph& g, const std::vector<EntityId>& topics, std::int64_t lambda,
                    bool pruning, std::size_t hops);

// Entities within `hops` directed steps of the topics.
std::set<EntityId> bfs_closure(const KnowledgeGraph& g, const std::vector<EntityId>& topics, std::size_t hops);

Matrix<double> random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double scale);
ModelParams<double> random_params(const ModelDims& dims, std::uint64_t seed, double scale);

// Dense forward pass: every entity has a row (zero when unreached), every
// message is projected by W2 on its own.
struct DenseForward {
  Matrix<double> entities;              // entity_count x d
  std::map<Triple, double> alpha_max;
};
DenseForward dense_forward(const KnowledgeGraph& g, const std::vector<double>& q,
                           const std::vector<EntityId>& topics, const ModelParams<double>& params,
                           const Matrix<double>& rel_init, std::int64_t lambda);

// log sum exp over all scores minus log sum exp over the answers, by
// direct summation.
double naive_loss(const std::vector<double>& scores, const std::vector<EntityId>& answers);

// Every minimum-length directed path from -> to, lexicographically sorted.
std::vector<std::vector<Triple>> shortest_paths(const std::vector<Triple>& edges, EntityId from, EntityId to);

// Central finite differences of the question loss for every parameter
// entry, compared with the analytic gradient. The relative error of an
// entry is |a - n| / max(|a|, |n|, floor).
struct GradCheck {
  double max_rel_error = 0;
  std::string worst;  // "W4[1](2,3)"
  std::size_t checked = 0;
  double analytic_at_worst = 0;
  double numeric_at_worst = 0;
};
GradCheck finite_difference_check(const KnowledgeGraph& g, const std::vector<double>& q,
                                  const std::vector<EntityId>& topics, const std::vector<EntityId>& answers,
                                  const ModelParams<double>& params, const Matrix<double>& rel_init,
                                  const ExpansionPolicy& policy, double h, double floor);

// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace kgfr::testing
