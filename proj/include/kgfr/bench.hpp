#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "kgfr/propagation.hpp"
#include "kgfr/questions.hpp"

namespace kgfr {

struct BenchOptions {
  std::size_t hops = 2;
  std::vector<std::int64_t> lambdas{10, 100, 1000};
  bool with_pe_off = true;  // also run with progressive expansion off
  bool with_ap_off = true;  // also run with pruning off
  std::size_t max_edges = 0;  // per question; 0 = unlimited
};

struct BenchRow {
  std::string variant;  // "pe+ap", "pe", "ap", "none"
  bool pe = true;
  bool ap = true;
  std::int64_t lambda = kUnboundedLambda;
  std::size_t questions = 0;
  double mean_entities = 0;
  double mean_facts = 0;
  double wall_ms = 0;
  std::string status = "ok";  // or "exceeded"
};

// Reach statistics of the expansion alone for every configuration:
// pe in {on, off?} x (ap on at each lambda, ap off?).
std::vector<BenchRow> bench_app(const KnowledgeGraph& g, std::span<const QuestionInstance> questions,
                                const BenchOptions& options);

inline constexpr const char* kBenchCsvHeader =
    "variant,pe,ap,lambda,questions,mean_entities,mean_facts,wall_ms,status";

void write_bench_csv(std::ostream& out, std::span<const BenchRow> rows);

}  // namespace kgfr
