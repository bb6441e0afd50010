#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kgfr/kg_store.hpp"
#include "kgfr/llm_client.hpp"
#include "kgfr/matrix.hpp"

namespace kgfr {

struct TextEmbedding {
  std::vector<float> vector;
  std::string source_tag;
};

// Text encoder backend. encode() enforces the dimension and finiteness
// contract for every backend.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::size_t dim() const = 0;
  virtual std::string tag() const = 0;

  TextEmbedding encode(std::string_view text) const;

 protected:
  virtual std::vector<float> encode_raw(std::string_view text) const = 0;
};

// Test backend: a pseudo-random unit vector seeded by the text bytes. Uses
// only integer mixing and IEEE sqrt, so vectors are identical on every
// platform. Carries no semantics.
class HashEmbedder : public EmbeddingProvider {
 public:
  HashEmbedder(std::size_t dim, std::uint64_t seed = 0);
  std::size_t dim() const override { return dim_; }
  std::string tag() const override;

 protected:
  std::vector<float> encode_raw(std::string_view text) const override;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

// Serves vectors loaded from a precomputed embedding file:
//   "KGFREMB\0" | u32 version=1 | u32 dim | u64 count |
//   count x ( u32 key_bytes | key (UTF-8) | dim x f32 )
// All integers and floats little-endian.
class PrecomputedEmbeddings : public EmbeddingProvider {
 public:
  static PrecomputedEmbeddings load(const std::filesystem::path& path, std::size_t expected_dim);
  static PrecomputedEmbeddings read(std::istream& in, std::size_t expected_dim);

  static void write(std::ostream& out, std::size_t dim,
                    const std::vector<std::pair<std::string, std::vector<float>>>& entries);
  static void save(const std::filesystem::path& path, std::size_t dim,
                   const std::vector<std::pair<std::string, std::vector<float>>>& entries);

  std::size_t dim() const override { return dim_; }
  std::string tag() const override { return "precomputed"; }
  std::size_t size() const noexcept { return table_.size(); }
  bool contains(std::string_view key) const { return table_.count(std::string(key)) > 0; }

 protected:
  std::vector<float> encode_raw(std::string_view text) const override;

 private:
  std::size_t dim_ = 0;
  std::unordered_map<std::string, std::vector<float>> table_;
};

// POSTs text to an OpenAI-style embeddings endpoint (docs/protocols.md).
class RemoteEncoder : public EmbeddingProvider {
 public:
  struct Config {
    std::string url;  // full endpoint, e.g. http://localhost:8080/v1/embeddings
    std::string model;
    std::string api_key;
    std::chrono::milliseconds timeout{30000};
    std::size_t max_in_flight = 4;
  };

  RemoteEncoder(Config config, std::size_t dim);
  // KGFR_ENCODER_URL, KGFR_ENCODER_MODEL, KGFR_ENCODER_API_KEY.
  static Config config_from_env();

  std::size_t dim() const override { return dim_; }
  std::string tag() const override { return "remote:" + config_.model; }

 protected:
  std::vector<float> encode_raw(std::string_view text) const override;

 private:
  Config config_;
  std::size_t dim_;
  mutable InFlightLimiter limiter_;
};

enum class DescriptionSource { llm_generated, file_loaded, fallback_name };

std::string_view to_string(DescriptionSource s);

// u_r for every relation id of an augmented graph (inverses included).
class RelationDescriptionTable {
 public:
  struct Entry {
    std::string text;
    DescriptionSource source = DescriptionSource::fallback_name;
  };

  RelationDescriptionTable() = default;
  explicit RelationDescriptionTable(std::vector<Entry> entries) : entries_(std::move(entries)) {}

  // Every relation described by its own label.
  static RelationDescriptionTable from_labels(const KnowledgeGraph& g);

  // TSV: relation-label \t source \t description. Loaded entries become
  // file_loaded; the file must cover exactly the relation vocabulary.
  static RelationDescriptionTable load(const std::filesystem::path& path, const KnowledgeGraph& g);
  void save(const std::filesystem::path& path, const KnowledgeGraph& g) const;
  void write(std::ostream& out, const KnowledgeGraph& g) const;

  std::size_t size() const noexcept { return entries_.size(); }
  const Entry& at(RelationId r) const;
  const std::vector<Entry>& entries() const noexcept { return entries_; }

 private:
  std::vector<Entry> entries_;
};

// Relation-description prompt: the relation name plus up to `samples`
// example triples of that relation.
std::string relation_description_prompt(const KnowledgeGraph& g, RelationId r,
                                         const std::vector<Triple>& examples);

// Per-relation example triples, first `samples` in triple order.
std::vector<std::vector<Triple>> relation_examples(const KnowledgeGraph& g, std::size_t samples);

RelationDescriptionTable describe_all_relations(const KnowledgeGraph& g, LlmClient& llm,
                                                std::size_t samples_per_relation = 3);

// r^(0) for every relation: one row per relation id.
Matrix<float> encode_relations(const RelationDescriptionTable& table,
                               const EmbeddingProvider& provider);

// Parses a provider spec: "hash[:seed]", "remote", or a path to a
// precomputed embedding file.
std::unique_ptr<EmbeddingProvider> make_provider(const std::string& spec, std::size_t dim);

}  // namespace kgfr
