#include "oracles.hpp"

#include <algorithm>
#include <cmath>

#include "kgfr/trainer.hpp"

namespace kgfr::testing {

KnowledgeGraph make_graph(std::initializer_list<std::array<const char*, 3>> triples, bool augment) {
  std::vector<KnowledgeGraph::LabeledTriple> rows;
  for (const auto& t : triples) rows.push_back({t[0], t[1], t[2]});
  auto g = KnowledgeGraph::from_labeled(rows);
  return augment ? g.augment_inverse() : g;
}

std::vector<KnowledgeGraph::LabeledTriple> random_triples(std::mt19937_64& rng, const std::string& prefix,
                                                          std::size_t entities, std::size_t relations,
                                                          std::size_t triples) {
  std::uniform_int_distribution<std::size_t> ent(0, entities - 1), rel(0, relations - 1);
  std::vector<KnowledgeGraph::LabeledTriple> rows;
  for (std::size_t i = 0; i < triples; ++i)
    rows.push_back({prefix + "e" + std::to_string(ent(rng)), "r" + std::to_string(rel(rng)),
                    prefix + "e" + std::to_string(ent(rng))});
  return rows;
}

KnowledgeGraph random_graph(std::uint64_t seed, std::size_t entities, std::size_t relations, std::size_t triples) {
  std::mt19937_64 rng(seed);
  return KnowledgeGraph::from_labeled(random_triples(rng, "", entities, relations, triples)).augment_inverse();
}

KnowledgeGraph hub_graph(std::uint64_t seed, std::size_t hubs, std::size_t spokes, std::size_t noise_triples) {
  std::mt19937_64 rng(seed);
  const std::size_t leaves = hubs * spokes;
  std::vector<KnowledgeGraph::LabeledTriple> rows;
  std::uniform_int_distribution<std::size_t> leaf(0, leaves - 1);
  for (std::size_t h = 0; h < hubs; ++h)
    for (std::size_t s = 0; s < spokes; ++s)
      rows.push_back({"hub" + std::to_string(h), "member", "e" + std::to_string(leaf(rng))});
  auto noise = random_triples(rng, "", leaves, 4, noise_triples);
  rows.insert(rows.end(), noise.begin(), noise.end());
  for (std::size_t h = 0; h + 1 < hubs; ++h)
    rows.push_back({"hub" + std::to_string(h), "linked", "hub" + std::to_string(h + 1)});
  return KnowledgeGraph::from_labeled(rows).augment_inverse();
}

AppTrace app_oracle(const KnowledgeGraph& g, const std::vector<EntityId>& topics, std::int64_t lambda,
                    bool pruning, std::size_t hops) {
  // Group sizes by a full scan rather than the adjacency index.
  std::map<std::pair<EntityId, RelationId>, std::int64_t> group_size;
  for (const Triple& t : g.triples()) ++group_size[{t.subject, t.relation}];

  AppTrace trace;
  trace.reached.push_back(std::set<EntityId>(topics.begin(), topics.end()));
  trace.edges.emplace_back();
  for (std::size_t i = 0; i < hops; ++i) {
    const auto& s = trace.reached.back();
    auto n = trace.edges.back();
    for (const Triple& t : g.triples()) {
      if (!s.count(t.subject)) continue;
      const bool small = !pruning || group_size[{t.subject, t.relation}] <= lambda;
      if (small || s.count(t.object)) n.insert(t);
    }
    auto next = s;
    for (const Triple& t : n) {
      next.insert(t.subject);
      next.insert(t.object);
    }
    trace.reached.push_back(std::move(next));
    trace.edges.push_back(std::move(n));
  }
  return trace;
}

std::set<EntityId> bfs_closure(const KnowledgeGraph& g, const std::vector<EntityId>& topics, std::size_t hops) {
  std::set<EntityId> seen(topics.begin(), topics.end());
  std::set<EntityId> frontier = seen;
  for (std::size_t i = 0; i < hops; ++i) {
    std::set<EntityId> next;
    for (const Triple& t : g.triples())
      if (frontier.count(t.subject) && !seen.count(t.object)) next.insert(t.object);
    seen.insert(next.begin(), next.end());
    frontier = std::move(next);
  }
  return seen;
}

Matrix<double> random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Matrix<double> m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = u(rng);
  return m;
}

ModelParams<double> random_params(const ModelDims& dims, std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  auto p = ModelParams<double>::zeros(dims);
  p.for_each([&](const std::string&, Matrix<double>& m) { m = random_matrix(rng, m.rows(), m.cols(), scale); });
  return p;
}

DenseForward dense_forward(const KnowledgeGraph& g, const std::vector<double>& q,
                           const std::vector<EntityId>& topics, const ModelParams<double>& params,
                           const Matrix<double>& rel_init, std::int64_t lambda) {
  const std::size_t d = params.dims.dim, a = params.dims.dim_attn, L = params.dims.layers;
  const std::size_t ne = g.entity_count(), nr = g.relation_count();
  const auto trace = app_oracle(g, topics, lambda, true, L);

  Matrix<double> h(ne, d);
  for (EntityId e : topics)
    for (std::size_t c = 0; c < d; ++c) h(e, c) = 1.0;
  Matrix<double> rel = rel_init;
  DenseForward out;

  for (std::size_t i = 0; i < L; ++i) {
    const auto& lp = params.layers[i];
    Matrix<double> next(ne, d);
    for (const Triple& t : trace.edges[i + 1]) {
      // alpha = sigmoid(W3 relu(W4 s + W5 r + W6 q))
      double logit = 0;
      for (std::size_t k = 0; k < a; ++k) {
        double z = 0;
        for (std::size_t c = 0; c < d; ++c)
          z += lp.w4(k, c) * h(t.subject, c) + lp.w5(k, c) * rel(t.relation, c) + lp.w6(k, c) * q[c];
        logit += lp.w3(0, k) * std::max(z, 0.0);
      }
      const double alpha = 1.0 / (1.0 + std::exp(-logit));
      auto [it, fresh] = out.alpha_max.emplace(t, alpha);
      if (!fresh) it->second = std::max(it->second, alpha);
      for (std::size_t row = 0; row < d; ++row) {
        double m = 0;
        for (std::size_t c = 0; c < d; ++c) m += lp.w2(row, c) * alpha * (h(t.subject, c) + rel(t.relation, c));
        next(t.object, row) += m;
      }
    }
    Matrix<double> rel_next(nr, d);
    for (std::size_t r = 0; r < nr; ++r)
      for (std::size_t row = 0; row < d; ++row) {
        double v = 0;
        for (std::size_t c = 0; c < d; ++c) v += lp.w1(row, c) * rel(r, c) + lp.w1(row, d + c) * q[c];
        rel_next(r, row) = v;
      }
    h = std::move(next);
    rel = std::move(rel_next);
  }
  out.entities = std::move(h);
  return out;
}

double naive_loss(const std::vector<double>& scores, const std::vector<EntityId>& answers) {
  double all = 0, ans = 0;
  for (double s : scores) all += std::exp(s);
  for (EntityId a : answers) ans += std::exp(scores[a]);
  return std::log(all) - std::log(ans);
}

std::vector<std::vector<Triple>> shortest_paths(const std::vector<Triple>& edges, EntityId from, EntityId to) {
  // Plain reachability first so the walk enumeration below terminates.
  std::set<EntityId> reach{from};
  for (bool grew = true; grew;) {
    grew = false;
    for (const Triple& t : edges)
      if (reach.count(t.subject) && reach.insert(t.object).second) grew = true;
  }
  if (!reach.count(to)) return {};

  std::vector<std::vector<Triple>> walks{{}};
  std::set<EntityId> nodes{from, to};
  for (const Triple& t : edges) {
    nodes.insert(t.subject);
    nodes.insert(t.object);
  }
  for (std::size_t len = 0; len <= nodes.size(); ++len) {
    std::vector<std::vector<Triple>> done;
    for (const auto& w : walks)
      if ((w.empty() ? from : w.back().object) == to) done.push_back(w);
    if (!done.empty()) {
      std::sort(done.begin(), done.end());
      return done;
    }
    std::vector<std::vector<Triple>> longer;
    for (const auto& w : walks) {
      const EntityId at = w.empty() ? from : w.back().object;
      for (const Triple& t : edges)
        if (t.subject == at) {
          longer.push_back(w);
          longer.back().push_back(t);
        }
    }
    walks = std::move(longer);
    if (walks.empty()) break;
  }
  return {};
}

GradCheck finite_difference_check(const KnowledgeGraph& g, const std::vector<double>& q,
                                  const std::vector<EntityId>& topics, const std::vector<EntityId>& answers,
                                  const ModelParams<double>& params, const Matrix<double>& rel_init,
                                  const ExpansionPolicy& policy, double h, double floor) {
  const auto analytic = backward<double>(g, q, topics, answers, params, rel_init, policy);
  std::vector<const Matrix<double>*> grads;
  analytic.grads.for_each([&](const std::string&, const Matrix<double>& m) { grads.push_back(&m); });

  GradCheck out;
  ModelParams<double> work = params;
  std::size_t index = 0;
  work.for_each([&](const std::string& name, Matrix<double>& m) {
    const Matrix<double>& gm = *grads[index++];
    for (std::size_t r = 0; r < m.rows(); ++r)
      for (std::size_t c = 0; c < m.cols(); ++c) {
        const double saved = m(r, c);
        m(r, c) = saved + h;
        const double up = question_loss<double>(g, q, topics, answers, work, rel_init, policy);
        m(r, c) = saved - h;
        const double down = question_loss<double>(g, q, topics, answers, work, rel_init, policy);
        m(r, c) = saved;
        const double numeric = (up - down) / (2 * h);
        const double a = gm(r, c);
        const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
        ++out.checked;
        if (err > out.max_rel_error || out.worst.empty()) {
          out.max_rel_error = err;
          out.worst = name + "(" + std::to_string(r) + "," + std::to_string(c) + ")";
          out.analytic_at_worst = a;
          out.numeric_at_worst = numeric;
        }
      }
  });
  return out;
}

TempDir::TempDir() {
  static std::mt19937_64 rng(std::random_device{}());
  path_ = std::filesystem::temp_directory_path() / ("kgfr-test-" + std::to_string(rng()));
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

}  // namespace kgfr::testing
