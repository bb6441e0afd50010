// kgfr command-line entry point.
//
// Exit codes: 0 success, 1 other failure, 2 usage, 3 bad input file or
// unknown label, 4 configuration, 5 numeric failure, 6 LLM or encoder failure.

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "kgfr/bench.hpp"
#include "kgfr/embedding.hpp"
#include "kgfr/error.hpp"
#include "kgfr/kernels/kernels.hpp"
#include "kgfr/metrics.hpp"
#include "kgfr/orchestrator.hpp"
#include "kgfr/params.hpp"
#include "kgfr/questions.hpp"
#include "kgfr/retrieval.hpp"
#include "kgfr/trainer.hpp"

namespace {

using namespace kgfr;

struct Options {
  std::string graph;
  std::string questions;
  std::string dev;
  std::string checkpoint;
  std::string embeddings = "hash";
  std::string descriptions;
  std::string templates;
  std::string llm;
  std::string out;
  std::string transcript;
  std::string log;
  std::string question;
  std::string topics;
  std::size_t k = 20;
  std::size_t n = 20;
  std::size_t path_cap = 10;
  std::string lambda = "100";
  std::vector<std::string> lambdas;
  std::size_t layers = kDeskDims.layers;
  std::size_t dim = kDeskDims.dim;
  std::size_t dim_attn = kDeskDims.dim_attn;
  std::size_t max_steps = 3;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::size_t samples = 3;
  double lr = 1e-4;
  std::size_t epochs = 200;
  std::size_t patience = 5;
  std::size_t max_edges = 0;
  bool no_pe = false;
  bool no_ap = false;
  bool no_prune = false;
};

std::int64_t parse_lambda(const std::string& s) {
  if (s == "inf" || s == "∞") return kUnboundedLambda;
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty()) throw ConfigError("bad lambda '" + s + "'");
  if (v < 0) throw ConfigError("lambda must be non-negative");
  return v;
}

KnowledgeGraph load_graph(const Options& o) {
  if (o.graph.empty()) throw ConfigError("--graph is required");
  return KnowledgeGraph::load_triples(o.graph).augment_inverse();
}

ExpansionPolicy policy_of(const Options& o) {
  ExpansionPolicy p;
  p.lambda = parse_lambda(o.lambda);
  p.pruning = !o.no_prune;
  p.max_edges = o.max_edges;
  return p;
}

std::unique_ptr<LlmClient> make_llm(const std::string& spec) {
  if (spec.rfind("scripted:", 0) == 0)
    return std::make_unique<ScriptedLlm>(ScriptedLlm::load(spec.substr(9)));
  if (spec == "remote") return std::make_unique<RemoteLlm>(RemoteLlm::config_from_env());
  throw ConfigError("--llm must be scripted:<path> or remote, got '" + spec + "'");
}

Matrix<float> relation_init(const Options& o, const KnowledgeGraph& g, const EmbeddingProvider& provider) {
  const auto table = o.descriptions.empty() ? RelationDescriptionTable::from_labels(g)
                                            : RelationDescriptionTable::load(o.descriptions, g);
  return encode_relations(table, provider);
}

std::vector<EntityId> parse_topics(const std::string& csv, const KnowledgeGraph& g) {
  std::vector<EntityId> out;
  std::stringstream ss(csv);
  std::string label;
  while (std::getline(ss, label, ','))
    if (!label.empty()) out.push_back(g.entity_id(label));
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::ostream& output(const Options& o, std::ofstream& file) {
  if (o.out.empty() || o.out == "-") return std::cout;
  file.open(o.out);
  if (!file) throw ConfigError("cannot write '" + o.out + "'");
  return file;
}

// Model, provider and relation inputs shared by retrieve/ask/eval.
struct Loaded {
  KnowledgeGraph g;
  ModelParams<float> params;
  std::unique_ptr<EmbeddingProvider> provider;
  std::unique_ptr<Retriever> retriever;
};

Loaded load_model(const Options& o) {
  if (o.checkpoint.empty()) throw ConfigError("--checkpoint is required");
  Loaded l{load_graph(o), load_checkpoint(o.checkpoint), nullptr, nullptr};
  l.provider = make_provider(o.embeddings, l.params.dims.dim);
  auto rel = relation_init(o, l.g, *l.provider);
  l.retriever = std::make_unique<Retriever>(l.g, l.params, *l.provider, std::move(rel), policy_of(o));
  return l;
}

PipelineConfig pipeline_config(const Options& o) {
  PipelineConfig c;
  c.max_steps = o.max_steps;
  c.retrieval = {o.k, o.n, o.path_cap};
  return c;
}

TemplateTable templates_for(const Options& o, const KnowledgeGraph& g, LlmClient& llm) {
  if (!o.templates.empty()) return TemplateTable::load(o.templates, g);
  const auto table = o.descriptions.empty() ? RelationDescriptionTable::from_labels(g)
                                            : RelationDescriptionTable::load(o.descriptions, g);
  return build_templates(g, table, llm);
}

int cmd_build(const Options& o) {
  if (o.graph.empty()) throw ConfigError("--graph is required");
  const auto forward_graph = KnowledgeGraph::load_triples(o.graph);
  const auto forward = forward_graph.triple_count();
  if (!o.out.empty()) {
    std::ofstream f;
    forward_graph.write_triples(output(o, f));
  }
  const auto g = forward_graph.augment_inverse();
  std::cerr << fmt::format("entities {}  relations {} (+{} inverse)  triples {} ({} augmented)  max group {}\n",
                           g.entity_count(), g.forward_relation_count(), g.forward_relation_count(), forward,
                           g.triple_count(), g.max_group_size());
  return 0;
}

int cmd_describe(const Options& o) {
  const auto g = load_graph(o);
  auto llm = make_llm(o.llm);
  const auto table = describe_all_relations(g, *llm, o.samples);
  {
    std::ofstream f;
    table.write(output(o, f), g);
  }
  if (!o.templates.empty()) build_templates(g, table, *llm).save(o.templates, g);
  std::size_t fallbacks = 0;
  for (const auto& e : table.entries()) fallbacks += e.source == DescriptionSource::fallback_name;
  std::cerr << fmt::format("described {} relations ({} fell back to the label)\n", table.size(), fallbacks);
  return 0;
}

int cmd_train(const Options& o) {
  if (o.questions.empty()) throw ConfigError("--questions is required");
  if (o.out.empty()) throw ConfigError("--out (checkpoint path) is required");
  const auto g = load_graph(o);
  const auto train_set = load_questions(o.questions, g);
  const auto dev_set = o.dev.empty() ? std::vector<QuestionInstance>{} : load_questions(o.dev, g);
  const auto provider = make_provider(o.embeddings, o.dim);
  const auto rel = relation_init(o, g, *provider);

  TrainConfig cfg;
  cfg.learning_rate = o.lr;
  cfg.max_epochs = o.epochs;
  cfg.patience = o.patience;
  cfg.policy = policy_of(o);
  cfg.seed = o.seed;
  cfg.dims = {o.layers, o.dim, o.dim_attn};

  std::ofstream log;
  if (!o.log.empty()) {
    log.open(o.log);
    if (!log) throw ConfigError("cannot write '" + o.log + "'");
  }
  const auto result = train(train_set, dev_set, g, *provider, rel, cfg, nullptr, [&](const EpochLog& e) {
    std::cerr << fmt::format("epoch {:3}  loss {:.5f}  dev H@1 {:.4f}  {:.1f}s\n", e.epoch, e.mean_loss, e.dev_h1,
                             e.wall_seconds);
    if (log) write_epoch_log(log, e);
  });
  save_checkpoint(o.out, result.params);
  std::cerr << fmt::format("best epoch {} (dev H@1 {:.4f}); {} questions skipped; kernels: {}\n",
                           result.best_epoch, result.best_dev_h1, result.skipped_questions,
                           kernels::isa_name(kernels::active_isa()));
  return 0;
}

int cmd_retrieve(const Options& o) {
  if (o.question.empty() || o.topics.empty()) throw ConfigError("--question and --topics are required");
  const auto l = load_model(o);
  const auto topics = parse_topics(o.topics, l.g);
  const auto r = l.retriever->retrieve(o.question, topics, pipeline_config(o).retrieval);
  std::ofstream f;
  output(o, f) << bundle_to_json(r.bundle, l.g).dump(2) << '\n';
  return 0;
}

int cmd_ask(const Options& o) {
  if (o.question.empty() || o.topics.empty()) throw ConfigError("--question and --topics are required");
  if (o.llm.empty()) throw ConfigError("--llm is required");
  const auto l = load_model(o);
  auto llm = make_llm(o.llm);
  const auto templates = templates_for(o, l.g, *llm);
  QuestionInstance q{o.question, parse_topics(o.topics, l.g), {}, std::nullopt};

  auto write_transcript = [&](const Session& s) {
    if (o.transcript.empty()) return;
    std::ofstream t(o.transcript);
    if (!t) throw ConfigError("cannot write '" + o.transcript + "'");
    s.write_transcript(t, l.g);
  };
  try {
    const auto s = run_pipeline(q, *l.retriever, templates, *llm, pipeline_config(o));
    write_transcript(s);
    std::ofstream f;
    auto& out = output(o, f);
    out << "status: " << to_string(s.status) << " after " << s.step << " step(s)\n";
    for (const auto& a : s.answers) out << a.text << (a.entity ? "" : "  (not in graph)") << '\n';
    for (const auto& w : s.warnings) std::cerr << "warning: " << w << '\n';
  } catch (const PipelineError& e) {
    write_transcript(e.session());
    throw;
  }
  return 0;
}

int cmd_eval(const Options& o) {
  if (o.questions.empty()) throw ConfigError("--questions is required");
  if (o.llm.empty()) throw ConfigError("--llm is required");
  const auto l = load_model(o);
  const auto qs = load_questions(o.questions, l.g);
  auto llm = make_llm(o.llm);
  const auto templates = templates_for(o, l.g, *llm);
  const auto report = evaluate(qs, *l.retriever, templates, *llm, pipeline_config(o), o.workers);
  std::ofstream f;
  output(o, f) << report.to_json().dump(2) << '\n';
  std::cerr << fmt::format("questions {}  F1 {:.4f}  Hit {:.4f}  H@1 {:.4f}  errors {}\n", report.rows.size(),
                           report.mean_f1, report.hit_rate, report.h1_rate, report.errors);
  return 0;
}

int cmd_bench_app(const Options& o) {
  if (o.questions.empty()) throw ConfigError("--questions is required");
  const auto g = load_graph(o);
  const auto qs = load_questions(o.questions, g);
  BenchOptions b;
  b.hops = o.layers;
  b.with_pe_off = !o.no_pe;
  b.with_ap_off = !o.no_ap;
  b.max_edges = o.max_edges;
  if (!o.lambdas.empty()) {
    b.lambdas.clear();
    for (const auto& s : o.lambdas) b.lambdas.push_back(parse_lambda(s));
  }
  const auto rows = bench_app(g, qs, b);
  std::ofstream f;
  write_bench_csv(output(o, f), rows);
  return 0;
}

int exit_code(const std::exception& e) {
  if (dynamic_cast<const ParseError*>(&e) || dynamic_cast<const LookupError*>(&e) ||
      dynamic_cast<const PreconditionError*>(&e))
    return 3;
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ShapeError*>(&e)) return 4;
  if (dynamic_cast<const NumericError*>(&e)) return 5;
  if (dynamic_cast<const LlmError*>(&e) || dynamic_cast<const ProviderError*>(&e) ||
      dynamic_cast<const PipelineError*>(&e))
    return 6;
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"Knowledge-graph retriever with LLM collaboration"};
  app.require_subcommand(1);

  auto graph = [&](CLI::App* c) { c->add_option("--graph", o.graph, "Triple file (subject<TAB>relation<TAB>object)"); };
  auto model = [&](CLI::App* c) {
    c->add_option("--checkpoint", o.checkpoint, "Model checkpoint");
    c->add_option("--embeddings", o.embeddings, "Text encoder: hash[:seed], remote, or an embedding file")
        ->capture_default_str();
    c->add_option("--descriptions", o.descriptions, "Relation description file (default: relation labels)");
    c->add_option("--lambda", o.lambda, "Pruning threshold (integer or inf)")->capture_default_str();
    c->add_flag("--no-prune", o.no_prune, "Disable asymmetric pruning");
    c->add_option("--max-edges", o.max_edges, "Abort a propagation above this many edges (0 = no cap)");
    c->add_option("--k", o.k, "Candidate entities")->capture_default_str();
    c->add_option("--n", o.n, "Facts per entity")->capture_default_str();
    c->add_option("--path-cap", o.path_cap, "Shortest paths per (candidate, topic) pair")->capture_default_str();
  };
  auto pipeline = [&](CLI::App* c) {
    c->add_option("--llm", o.llm, "scripted:<transcript.jsonl> or remote");
    c->add_option("--templates", o.templates, "Verbalization template file (default: built with the LLM)");
    c->add_option("--max-steps", o.max_steps, "Answer/reflect cycles")->capture_default_str();
  };

  auto* build = app.add_subcommand("build", "Validate a triple file and print graph statistics");
  graph(build);
  build->add_option("--out", o.out, "Write the normalized triple file here");

  auto* describe = app.add_subcommand("describe", "Generate relation descriptions with the LLM");
  graph(describe);
  describe->add_option("--llm", o.llm, "scripted:<transcript.jsonl> or remote")->required();
  describe->add_option("--out", o.out, "Description file (default: stdout)");
  describe->add_option("--templates", o.templates, "Also build verbalization templates into this file");
  describe->add_option("--samples", o.samples, "Example triples per relation")->capture_default_str();

  auto* train_cmd = app.add_subcommand("train", "Train the retriever");
  graph(train_cmd);
  train_cmd->add_option("--questions", o.questions, "Training questions (JSONL)");
  train_cmd->add_option("--dev", o.dev, "Dev questions for early stopping (default: training set)");
  train_cmd->add_option("--embeddings", o.embeddings, "Text encoder")->capture_default_str();
  train_cmd->add_option("--descriptions", o.descriptions, "Relation description file");
  train_cmd->add_option("--layers", o.layers)->capture_default_str();
  train_cmd->add_option("--dim", o.dim)->capture_default_str();
  train_cmd->add_option("--dim-attn", o.dim_attn)->capture_default_str();
  train_cmd->add_option("--lr", o.lr)->capture_default_str();
  train_cmd->add_option("--epochs", o.epochs)->capture_default_str();
  train_cmd->add_option("--patience", o.patience)->capture_default_str();
  train_cmd->add_option("--lambda", o.lambda)->capture_default_str();
  train_cmd->add_flag("--no-prune", o.no_prune);
  train_cmd->add_option("--seed", o.seed)->capture_default_str();
  train_cmd->add_option("--out", o.out, "Checkpoint to write");
  train_cmd->add_option("--log", o.log, "Per-epoch JSONL log");

  auto* retrieve = app.add_subcommand("retrieve", "Print the retrieval bundle for one question as JSON");
  graph(retrieve);
  model(retrieve);
  retrieve->add_option("--question", o.question);
  retrieve->add_option("--topics", o.topics, "Comma-separated topic entity labels");
  retrieve->add_option("--out", o.out);

  auto* ask = app.add_subcommand("ask", "Answer one question with the retrieve/answer/reflect loop");
  graph(ask);
  model(ask);
  pipeline(ask);
  ask->add_option("--question", o.question);
  ask->add_option("--topics", o.topics, "Comma-separated topic entity labels");
  ask->add_option("--transcript", o.transcript, "Write the session transcript (JSONL)");
  ask->add_option("--seed", o.seed);
  ask->add_option("--out", o.out);

  auto* eval = app.add_subcommand("eval", "Run the pipeline over a question file and report F1/Hit/H@1");
  graph(eval);
  model(eval);
  pipeline(eval);
  eval->add_option("--questions", o.questions);
  eval->add_option("--workers", o.workers)->capture_default_str();
  eval->add_option("--seed", o.seed);
  eval->add_option("--out", o.out, "Report JSON (default: stdout)");

  auto* bench = app.add_subcommand("bench-app", "Reach statistics of the expansion across lambda and toggles");
  graph(bench);
  bench->add_option("--questions", o.questions);
  bench->add_option("--lambda", o.lambdas, "Lambda values to sweep (integer or inf)");
  bench->add_option("--layers", o.layers, "Hops")->capture_default_str();
  bench->add_flag("--no-pe", o.no_pe, "Skip the progressive-expansion-off rows");
  bench->add_flag("--no-ap", o.no_ap, "Skip the pruning-off rows");
  bench->add_option("--max-edges", o.max_edges, "Per-question edge cap; rows over it are marked exceeded");
  bench->add_option("--seed", o.seed);
  bench->add_option("--out", o.out, "CSV (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*build) return cmd_build(o);
    if (*describe) return cmd_describe(o);
    if (*train_cmd) return cmd_train(o);
    if (*retrieve) return cmd_retrieve(o);
    if (*ask) return cmd_ask(o);
    if (*eval) return cmd_eval(o);
    if (*bench) return cmd_bench_app(o);
  } catch (const std::exception& e) {
    std::cerr << "kgfr: " << e.what() << '\n';
    return exit_code(e);
  }
  return 2;
}
