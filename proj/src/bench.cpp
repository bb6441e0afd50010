#include "kgfr/bench.hpp"

#include <chrono>
#include <ostream>

#include <fmt/format.h>

#include "kgfr/error.hpp"

namespace kgfr {

std::vector<BenchRow> bench_app(const KnowledgeGraph& g, std::span<const QuestionInstance> questions,
                                const BenchOptions& options) {
  if (questions.empty()) throw PreconditionError("bench_app: no questions");
  if (options.hops == 0) throw ConfigError("bench_app: hops must be at least 1");

  std::vector<ExpansionPolicy> policies;
  for (bool pe : {true, false}) {
    if (!pe && !options.with_pe_off) continue;
    for (std::int64_t lambda : options.lambdas) policies.push_back({pe, true, lambda, options.max_edges});
    if (options.with_ap_off) policies.push_back({pe, false, kUnboundedLambda, options.max_edges});
  }

  std::vector<BenchRow> rows;
  for (const auto& policy : policies) {
    BenchRow row;
    row.pe = policy.progressive;
    row.ap = policy.pruning;
    row.lambda = policy.lambda;
    row.variant = policy.progressive ? (policy.pruning ? "pe+ap" : "pe") : (policy.pruning ? "ap" : "none");
    row.questions = questions.size();
    const auto start = std::chrono::steady_clock::now();
    try {
      double entities = 0, facts = 0;
      for (const auto& q : questions) {
        SubgraphExpander ex(g, q.topics, policy);
        for (std::size_t h = 0; h < options.hops; ++h) ex.expand();
        entities += static_cast<double>(ex.subgraph().entities().size());
        facts += static_cast<double>(ex.subgraph().edges.size());
      }
      row.mean_entities = entities / static_cast<double>(questions.size());
      row.mean_facts = facts / static_cast<double>(questions.size());
    } catch (const CapacityError&) {
      row.status = "exceeded";
    }
    row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_bench_csv(std::ostream& out, std::span<const BenchRow> rows) {
  out << kBenchCsvHeader << '\n';
  for (const auto& r : rows) {
    const std::string lambda =
        !r.ap ? "-" : r.lambda == kUnboundedLambda ? "inf" : std::to_string(r.lambda);
    if (r.status == "ok")
      out << fmt::format("{},{},{},{},{},{:.3f},{:.3f},{:.3f},{}\n", r.variant, r.pe ? "on" : "off",
                         r.ap ? "on" : "off", lambda, r.questions, r.mean_entities, r.mean_facts, r.wall_ms,
                         r.status);
    else
      out << fmt::format("{},{},{},{},{},,,{:.3f},{}\n", r.variant, r.pe ? "on" : "off", r.ap ? "on" : "off",
                         lambda, r.questions, r.wall_ms, r.status);
  }
}

}  // namespace kgfr
