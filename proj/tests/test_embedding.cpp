#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <random>
#include <set>
#include <fstream>
#include <sstream>

#include "kgfr/embedding.hpp"
#include "kgfr/error.hpp"
#include "oracles.hpp"

namespace kgfr {
namespace {

TEST(HashEmbedder, Deterministic) {
  const HashEmbedder h(16, 3);
  const auto a = h.encode("who founded the company");
  const auto b = h.encode("who founded the company");
  ASSERT_EQ(a.vector.size(), 16u);
  EXPECT_EQ(std::memcmp(a.vector.data(), b.vector.data(), 16 * sizeof(float)), 0);
  EXPECT_EQ(a.source_tag, "hash:3");
}

TEST(HashEmbedder, UnitNorm) {
  const HashEmbedder h(64);
  for (const char* text : {"", "a", "basketball team", "Ω unicode ✓"}) {
    const auto v = h.encode(text).vector;
    double n = 0;
    for (float x : v) n += static_cast<double>(x) * x;
    EXPECT_NEAR(std::sqrt(n), 1.0, 1e-6) << text;
  }
}

// Pinned output: any change to the mixing would silently alter every
// experiment that relies on the test backend.
TEST(HashEmbedder, StableAcrossBuilds) {
  const HashEmbedder h(4, 0);
  const auto v = h.encode("kgfr").vector;
  // Pinned bit patterns; a change here silently invalidates saved checkpoints.
  const std::vector<std::uint32_t> pinned{0x3f0ff5ae, 0xbf2c6539, 0xbeb1dfb4, 0x3ea97d45};
  ASSERT_EQ(v.size(), pinned.size());
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(std::bit_cast<std::uint32_t>(v[i]), pinned[i]) << i;
  const HashEmbedder again(4, 0);
  EXPECT_EQ(v, again.encode("kgfr").vector);
  const HashEmbedder other_seed(4, 1);
  EXPECT_NE(v, other_seed.encode("kgfr").vector);
}

TEST(HashEmbedder, DistinctTextsDistinctVectors) {
  const HashEmbedder h(8);
  std::mt19937_64 rng(1);
  std::set<std::vector<float>> seen;
  std::set<std::string> texts;
  for (int i = 0; i < 10000; ++i) {
    std::string s(1 + rng() % 12, ' ');
    for (auto& c : s) c = static_cast<char>('a' + rng() % 26);
    if (texts.insert(s).second) seen.insert(h.encode(s).vector);
  }
  EXPECT_EQ(seen.size(), texts.size());
}

TEST(Precomputed, RoundTripBitExact) {
  std::vector<std::pair<std::string, std::vector<float>>> entries{
      {"alpha", {1.5f, -0.0f, 3e-39f, 7.0f}},
      {"beta", {0.1f, 0.2f, 0.3f, 0.4f}},
  };
  std::ostringstream out;
  PrecomputedEmbeddings::write(out, 4, entries);
  std::istringstream in(out.str());
  const auto p = PrecomputedEmbeddings::read(in, 4);
  for (const auto& [key, vec] : entries) {
    const auto got = p.encode(key).vector;
    EXPECT_EQ(std::memcmp(got.data(), vec.data(), 4 * sizeof(float)), 0) << key;
  }
  std::ostringstream again;
  PrecomputedEmbeddings::write(again, 4, {{"alpha", p.encode("alpha").vector}, {"beta", p.encode("beta").vector}});
  EXPECT_EQ(out.str(), again.str());
}

TEST(Precomputed, DimensionMismatch) {
  std::ostringstream out;
  PrecomputedEmbeddings::write(out, 8, {{"k", std::vector<float>(8, 0.5f)}});
  std::istringstream ok(out.str());
  EXPECT_NO_THROW(PrecomputedEmbeddings::read(ok, 8));
  std::istringstream bad(out.str());
  EXPECT_THROW(PrecomputedEmbeddings::read(bad, 16), ConfigError);
}

TEST(Precomputed, MissingKey) {
  std::ostringstream out;
  PrecomputedEmbeddings::write(out, 2, {{"k", {1, 0}}});
  std::istringstream in(out.str());
  const auto p = PrecomputedEmbeddings::read(in, 2);
  EXPECT_THROW(p.encode("other"), LookupError);
}

TEST(Precomputed, FileRoundTrip) {
  testing::TempDir dir;
  PrecomputedEmbeddings::save(dir / "e.bin", 3, {{"x", {1, 2, 3}}});
  const auto p = PrecomputedEmbeddings::load(dir / "e.bin", 3);
  EXPECT_EQ(p.encode("x").vector, (std::vector<float>{1, 2, 3}));
  EXPECT_EQ(p.size(), 1u);
}

// A backend that reports one width and returns another.
class Liar : public EmbeddingProvider {
 public:
  std::size_t dim() const override { return 4; }
  std::string tag() const override { return "liar"; }

 protected:
  std::vector<float> encode_raw(std::string_view text) const override {
    if (text == "nan") return {0, std::nanf(""), 0, 0};
    return {1, 2, 3};
  }
};

TEST(Provider, BoundaryChecks) {
  Liar l;
  EXPECT_THROW(l.encode("x"), ConfigError);
  EXPECT_THROW(l.encode("nan"), NumericError);
}

TEST(Provider, FactorySpecs) {
  EXPECT_EQ(make_provider("hash", 8)->tag(), "hash:0");
  EXPECT_EQ(make_provider("hash:42", 8)->tag(), "hash:42");
  EXPECT_THROW(make_provider("hash:x", 8), ConfigError);
  EXPECT_THROW(make_provider("/no/such/file.bin", 8), Error);
}

const KnowledgeGraph& two_relation_graph() {
  static const auto g = testing::make_graph({{"A", "r", "B"}, {"B", "s", "C"}});
  return g;
}

TEST(Descriptions, ScriptedTextForEveryRelation) {
  const auto& g = two_relation_graph();
  ScriptedLlm llm({{"", "A fixed description.", "", true}});
  const auto t = describe_all_relations(g, llm);
  ASSERT_EQ(t.size(), 4u);
  for (const auto& e : t.entries()) {
    EXPECT_EQ(e.text, "A fixed description.");
    EXPECT_EQ(e.source, DescriptionSource::llm_generated);
  }
}

TEST(Descriptions, FallbackOnFailure) {
  const auto& g = two_relation_graph();
  ScriptedLlm llm({{"Relation: s\n", "", "boom", false}, {"", "ok", "", true}});
  const auto t = describe_all_relations(g, llm);
  const auto s = g.relation_id("s");
  EXPECT_EQ(t.at(s).text, "s");
  EXPECT_EQ(t.at(s).source, DescriptionSource::fallback_name);
  EXPECT_EQ(t.at(g.relation_id("r")).source, DescriptionSource::llm_generated);
}

TEST(Descriptions, PromptCarriesExamples) {
  const auto& g = two_relation_graph();
  const auto ex = relation_examples(g, 3);
  ASSERT_EQ(ex.size(), g.relation_count());
  const auto inv = g.relation_id("r^-1");
  ASSERT_EQ(ex[inv].size(), 1u);
  const auto p = relation_description_prompt(g, inv, ex[inv]);
  EXPECT_NE(p.find("Relation: r^-1"), std::string::npos);
  EXPECT_NE(p.find("(B, r^-1, A)"), std::string::npos);
}

TEST(Descriptions, FileRoundTrip) {
  const auto& g = two_relation_graph();
  testing::TempDir dir;
  ScriptedLlm llm({{"", "line one\twith tab\nand newline", "", true}});
  describe_all_relations(g, llm).save(dir / "d.tsv", g);
  const auto back = RelationDescriptionTable::load(dir / "d.tsv", g);
  ASSERT_EQ(back.size(), 4u);
  EXPECT_EQ(back.at(0).text, "line one\twith tab\nand newline");
  EXPECT_EQ(back.at(0).source, DescriptionSource::file_loaded);
}

TEST(Descriptions, FileMustCoverVocabulary) {
  const auto& g = two_relation_graph();
  testing::TempDir dir;
  {
    std::ofstream out(dir / "d.tsv");
    out << "r\tllm\tx\n";
  }
  EXPECT_THROW(RelationDescriptionTable::load(dir / "d.tsv", g), ParseError);
}

TEST(Descriptions, EncodeRelations) {
  const auto& g = two_relation_graph();
  const HashEmbedder h(8);
  const auto m = encode_relations(RelationDescriptionTable::from_labels(g), h);
  EXPECT_EQ(m.rows(), 4u);
  EXPECT_EQ(m.cols(), 8u);
  const auto v = h.encode("r^-1").vector;
  EXPECT_TRUE(std::equal(v.begin(), v.end(), m.row(g.relation_id("r^-1")).begin()));
}

}  // namespace
}  // namespace kgfr
