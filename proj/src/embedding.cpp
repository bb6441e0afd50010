#include "kgfr/embedding.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "http_util.hpp"
#include "tsv.hpp"
#include "kgfr/binary_io.hpp"
#include "kgfr/error.hpp"

namespace kgfr {

TextEmbedding EmbeddingProvider::encode(std::string_view text) const {
  TextEmbedding out{encode_raw(text), tag()};
  if (out.vector.size() != dim())
    throw ConfigError(fmt::format("{} backend returned {} components, configured dimension is {}",
                                  tag(), out.vector.size(), dim()));
  for (float v : out.vector)
    if (!std::isfinite(v)) throw NumericError(tag() + " backend returned a non-finite component");
  return out;
}

// --- hash backend -----------------------------------------------------------

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

}  // namespace

HashEmbedder::HashEmbedder(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
  if (dim == 0) throw ConfigError("hash embedder: dimension must be positive");
}

std::string HashEmbedder::tag() const { return fmt::format("hash:{}", seed_); }

std::vector<float> HashEmbedder::encode_raw(std::string_view text) const {
  std::uint64_t mix = seed_;
  std::uint64_t state = fnv1a64(text) ^ splitmix64(mix);
  std::vector<double> v(dim_);
  double norm2 = 0.0;
  do {
    norm2 = 0.0;
    for (auto& x : v) {
      // 53 random bits -> uniform in [-1, 1)
      x = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-52 - 1.0;
      norm2 += x * x;
    }
  } while (norm2 == 0.0);
  const double inv = 1.0 / std::sqrt(norm2);
  std::vector<float> out(dim_);
  for (std::size_t i = 0; i < dim_; ++i) out[i] = static_cast<float>(v[i] * inv);
  return out;
}

// --- precomputed backend ----------------------------------------------------

namespace {
constexpr char kEmbMagic[9] = "KGFREMB\0";
constexpr std::uint32_t kEmbVersion = 1;
}  // namespace

PrecomputedEmbeddings PrecomputedEmbeddings::read(std::istream& in, std::size_t expected_dim) {
  io::expect_magic(in, kEmbMagic, "embedding file");
  const auto version = io::read_u32(in, "embedding version");
  if (version != kEmbVersion) throw ParseError(fmt::format("unsupported embedding file version {}", version));
  const auto dim = io::read_u32(in, "embedding dimension");
  if (dim != expected_dim)
    throw ConfigError(fmt::format("embedding file has dimension {}, engine is configured for {}", dim,
                                  expected_dim));
  const auto count = io::read_u64(in, "embedding count");
  PrecomputedEmbeddings p;
  p.dim_ = dim;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto key_len = io::read_u32(in, "embedding key length");
    std::string key(key_len, '\0');
    io::read_exact(in, key.data(), key_len, "embedding key");
    std::vector<float> vec(dim);
    for (auto& x : vec) x = io::read_f32(in, "embedding vector");
    p.table_[std::move(key)] = std::move(vec);
  }
  return p;
}

PrecomputedEmbeddings PrecomputedEmbeddings::load(const std::filesystem::path& path,
                                                  std::size_t expected_dim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open embedding file '" + path.string() + "'");
  return read(in, expected_dim);
}

void PrecomputedEmbeddings::write(std::ostream& out, std::size_t dim,
                                  const std::vector<std::pair<std::string, std::vector<float>>>& entries) {
  out.write(kEmbMagic, 8);
  io::write_u32(out, kEmbVersion);
  io::write_u32(out, static_cast<std::uint32_t>(dim));
  io::write_u64(out, entries.size());
  for (const auto& [key, vec] : entries) {
    if (vec.size() != dim) throw ShapeError("embedding '" + key + "' has the wrong length");
    io::write_u32(out, static_cast<std::uint32_t>(key.size()));
    out.write(key.data(), static_cast<std::streamsize>(key.size()));
    for (float x : vec) io::write_f32(out, x);
  }
}

void PrecomputedEmbeddings::save(const std::filesystem::path& path, std::size_t dim,
                                 const std::vector<std::pair<std::string, std::vector<float>>>& entries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write embedding file '" + path.string() + "'");
  write(out, dim, entries);
}

std::vector<float> PrecomputedEmbeddings::encode_raw(std::string_view text) const {
  auto it = table_.find(std::string(text));
  if (it == table_.end()) throw LookupError("no precomputed embedding for '" + std::string(text) + "'");
  return it->second;
}

// --- remote backend ---------------------------------------------------------

RemoteEncoder::RemoteEncoder(Config config, std::size_t dim)
    : config_(std::move(config)), dim_(dim), limiter_(config_.max_in_flight) {
  if (config_.url.empty()) throw ConfigError("remote encoder: URL is empty");
  if (dim == 0) throw ConfigError("remote encoder: dimension must be positive");
}

RemoteEncoder::Config RemoteEncoder::config_from_env() {
  Config c;
  if (const char* v = std::getenv("KGFR_ENCODER_URL")) c.url = v;
  if (const char* v = std::getenv("KGFR_ENCODER_MODEL")) c.model = v;
  if (const char* v = std::getenv("KGFR_ENCODER_API_KEY")) c.api_key = v;
  return c;
}

std::vector<float> RemoteEncoder::encode_raw(std::string_view text) const {
  const auto [host, path] = detail::split_url(config_.url);
  nlohmann::json body;
  body["model"] = config_.model;
  body["input"] = std::string(text);
  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

  InFlightLimiter::Slot slot(limiter_);
  httplib::Client client(host);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  auto res = client.Post(path, headers, body.dump(), "application/json");
  if (!res) throw ProviderError("encoder transport error: " + httplib::to_string(res.error()), true);
  if (res->status == 429 || res->status >= 500)
    throw ProviderError("encoder returned HTTP " + std::to_string(res->status), true);
  if (res->status != 200) throw ProviderError("encoder returned HTTP " + std::to_string(res->status), false);
  try {
    const auto j = nlohmann::json::parse(res->body);
    const auto& vec = j.contains("data") ? j.at("data").at(0).at("embedding") : j.at("embedding");
    return vec.get<std::vector<float>>();
  } catch (const nlohmann::json::exception& e) {
    throw ProviderError(std::string("malformed encoder response: ") + e.what(), false);
  }
}

// --- relation descriptions --------------------------------------------------

std::string_view to_string(DescriptionSource s) {
  switch (s) {
    case DescriptionSource::llm_generated: return "llm";
    case DescriptionSource::file_loaded: return "file";
    case DescriptionSource::fallback_name: return "fallback";
  }
  return "fallback";
}

RelationDescriptionTable RelationDescriptionTable::from_labels(const KnowledgeGraph& g) {
  std::vector<Entry> entries;
  for (RelationId r = 0; r < g.relation_count(); ++r)
    entries.push_back({g.relation_label(r), DescriptionSource::fallback_name});
  return RelationDescriptionTable(std::move(entries));
}

const RelationDescriptionTable::Entry& RelationDescriptionTable::at(RelationId r) const {
  if (r >= entries_.size()) throw LookupError(fmt::format("no description for relation id {}", r));
  return entries_[r];
}

using detail::escape_field;
using detail::unescape_field;

void RelationDescriptionTable::write(std::ostream& out, const KnowledgeGraph& g) const {
  for (RelationId r = 0; r < entries_.size(); ++r)
    out << escape_field(g.relation_label(r)) << '\t' << to_string(entries_[r].source) << '\t'
        << escape_field(entries_[r].text) << '\n';
}

void RelationDescriptionTable::save(const std::filesystem::path& path, const KnowledgeGraph& g) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write description file '" + path.string() + "'");
  write(out, g);
}

RelationDescriptionTable RelationDescriptionTable::load(const std::filesystem::path& path,
                                                        const KnowledgeGraph& g) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open description file '" + path.string() + "'");
  std::vector<std::optional<Entry>> slots(g.relation_count());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) throw ParseError("description file: expected 3 fields", line_no);
    const auto label = unescape_field(std::string_view(line).substr(0, t1));
    const auto r = g.find_relation(label);
    if (!r) throw ParseError("description file: unknown relation '" + label + "'", line_no);
    if (slots[*r]) throw ParseError("description file: duplicate relation '" + label + "'", line_no);
    slots[*r] = Entry{unescape_field(std::string_view(line).substr(t2 + 1)), DescriptionSource::file_loaded};
  }
  std::vector<Entry> entries;
  for (RelationId r = 0; r < slots.size(); ++r) {
    if (!slots[r]) throw ParseError("description file lacks relation '" + g.relation_label(r) + "'");
    entries.push_back(std::move(*slots[r]));
  }
  return RelationDescriptionTable(std::move(entries));
}

std::vector<std::vector<Triple>> relation_examples(const KnowledgeGraph& g, std::size_t samples) {
  std::vector<std::vector<Triple>> out(g.relation_count());
  for (const Triple& t : g.triples())
    if (out[t.relation].size() < samples) out[t.relation].push_back(t);
  return out;
}

std::string relation_description_prompt(const KnowledgeGraph& g, RelationId r,
                                         const std::vector<Triple>& examples) {
  std::string p = "Task: Generate a description of the given relation.\n";
  p += "Relation: " + g.relation_label(r) + "\n";
  p += "Examples:";
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const Triple& t = examples[i];
    p += fmt::format("{}({}, {}, {})", i == 0 ? " " : "; ", g.entity_label(t.subject),
                     g.relation_label(t.relation), g.entity_label(t.object));
  }
  if (examples.empty()) p += " (none)";
  p += "\nOutput: one sentence describing what the relation expresses, starting with the relation name.\n";
  return p;
}

RelationDescriptionTable describe_all_relations(const KnowledgeGraph& g, LlmClient& llm,
                                                std::size_t samples_per_relation) {
  const auto examples = relation_examples(g, samples_per_relation);
  std::vector<RelationDescriptionTable::Entry> entries;
  entries.reserve(g.relation_count());
  for (RelationId r = 0; r < g.relation_count(); ++r) {
    try {
      std::string text = llm.complete(relation_description_prompt(g, r, examples[r]));
      while (!text.empty() && (text.back() == '\n' || text.back() == ' ')) text.pop_back();
      if (text.empty()) throw LlmError("empty description");
      entries.push_back({std::move(text), DescriptionSource::llm_generated});
    } catch (const LlmError&) {
      entries.push_back({g.relation_label(r), DescriptionSource::fallback_name});
    }
  }
  return RelationDescriptionTable(std::move(entries));
}

Matrix<float> encode_relations(const RelationDescriptionTable& table, const EmbeddingProvider& provider) {
  Matrix<float> out(table.size(), provider.dim());
  for (RelationId r = 0; r < table.size(); ++r) {
    const auto emb = provider.encode(table.at(r).text);
    std::copy(emb.vector.begin(), emb.vector.end(), out.row(r).begin());
  }
  return out;
}

std::unique_ptr<EmbeddingProvider> make_provider(const std::string& spec, std::size_t dim) {
  if (spec == "hash" || spec.rfind("hash:", 0) == 0) {
    std::uint64_t seed = 0;
    if (spec.size() > 5) {
      const auto digits = spec.substr(5);
      if (digits.find_first_not_of("0123456789") != std::string::npos)
        throw ConfigError("bad hash embedder seed in '" + spec + "'");
      seed = std::stoull(digits);
    }
    return std::make_unique<HashEmbedder>(dim, seed);
  }
  if (spec == "remote") return std::make_unique<RemoteEncoder>(RemoteEncoder::config_from_env(), dim);
  return std::make_unique<PrecomputedEmbeddings>(PrecomputedEmbeddings::load(spec, dim));
}

}  // namespace kgfr
