#include <gtest/gtest.h>

#include <sstream>

#include "kgfr/error.hpp"
#include "kgfr/params.hpp"
#include "oracles.hpp"

namespace kgfr {
namespace {

TEST(Params, ShapesFollowDims) {
  const ModelDims dims{3, 6, 2};
  const auto p = ModelParams<float>::zeros(dims);
  ASSERT_EQ(p.layers.size(), 3u);
  EXPECT_EQ(p.layers[0].w1.rows(), 6u);
  EXPECT_EQ(p.layers[0].w1.cols(), 12u);
  EXPECT_EQ(p.layers[0].w2.cols(), 6u);
  EXPECT_EQ(p.layers[0].w3.rows(), 1u);
  EXPECT_EQ(p.layers[0].w3.cols(), 2u);
  EXPECT_EQ(p.layers[0].w4.rows(), 2u);
  EXPECT_EQ(p.w7.cols(), 6u);
  EXPECT_EQ(p.parameter_count(), 3 * (72 + 36 + 2 + 3 * 12) + 6u);
}

TEST(Params, RejectsDegenerateDims) {
  EXPECT_THROW(ModelParams<float>::zeros({0, 4, 2}), ConfigError);
  EXPECT_THROW(ModelParams<float>::zeros({1, 0, 2}), ConfigError);
  EXPECT_THROW(ModelParams<float>::zeros({1, 4, 0}), ConfigError);
}

TEST(Params, XavierIsSeededAndBounded) {
  const ModelDims dims{2, 8, 4};
  const auto a = ModelParams<float>::xavier(dims, 5);
  const auto b = ModelParams<float>::xavier(dims, 5);
  const auto c = ModelParams<float>::xavier(dims, 6);
  EXPECT_TRUE(a == b);
  EXPECT_FALSE(a == c);
  a.for_each([](const std::string& name, const Matrix<float>& m) {
    const double bound = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
    for (float x : m.flat()) EXPECT_LE(std::abs(x), bound + 1e-6) << name;
  });
}

TEST(Params, ValidateCatchesNonFinite) {
  auto p = ModelParams<float>::zeros({1, 4, 2});
  p.layers[0].w2(1, 1) = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(p.validate(), NumericError);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  auto p = ModelParams<float>::xavier({2, 8, 4}, 1);
  p.w7(0, 3) = -0.0f;
  p.layers[1].w3(0, 0) = std::numeric_limits<float>::denorm_min();
  std::ostringstream out;
  write_checkpoint(out, p);
  std::istringstream in(out.str());
  const auto q = read_checkpoint(in);
  std::ostringstream again;
  write_checkpoint(again, q);
  EXPECT_EQ(out.str(), again.str());
  EXPECT_EQ(std::signbit(q.w7(0, 3)), true);
  EXPECT_EQ(q.layers[1].w3(0, 0), std::numeric_limits<float>::denorm_min());
}

TEST(Checkpoint, FileRoundTrip) {
  testing::TempDir dir;
  const auto p = ModelParams<float>::xavier({1, 4, 2}, 9);
  save_checkpoint(dir / "m.ckpt", p);
  EXPECT_TRUE(load_checkpoint(dir / "m.ckpt") == p);
  EXPECT_THROW(load_checkpoint(dir / "missing.ckpt"), ParseError);
}

TEST(Checkpoint, CorruptInputsRejected) {
  const auto p = ModelParams<float>::xavier({1, 4, 2}, 9);
  std::ostringstream out;
  write_checkpoint(out, p);
  const std::string bytes = out.str();

  std::istringstream truncated(bytes.substr(0, bytes.size() - 1));
  EXPECT_THROW(read_checkpoint(truncated), ParseError);
  std::istringstream trailing(bytes + "x");
  EXPECT_THROW(read_checkpoint(trailing), ParseError);
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  std::istringstream magic(bad_magic);
  EXPECT_THROW(read_checkpoint(magic), ParseError);
}

}  // namespace
}  // namespace kgfr
