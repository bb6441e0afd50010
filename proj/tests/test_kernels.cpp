#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "kgfr/error.hpp"
#include "kgfr/kernels/kernels.hpp"

namespace kgfr::kernels {
namespace {

template <class T>
std::vector<T> random_vec(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(u(rng));
  return v;
}

template <class T>
double tol() {
  return std::is_same_v<T, float> ? 1e-5 : 1e-13;
}

template <class T>
void expect_close(const std::vector<T>& a, const std::vector<T>& b, double scale) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol<T>() * scale) << "index " << i;
}

template <class T>
class KernelEquivalence : public ::testing::Test {};
using Types = ::testing::Types<float, double>;
TYPED_TEST_SUITE(KernelEquivalence, Types);

// Every available SIMD table agrees with the scalar reference on odd sizes
// that exercise both the vector body and the tail.
TYPED_TEST(KernelEquivalence, MatchesScalarReference) {
  using T = TypeParam;
  const auto& ref = table<T>(Isa::scalar);
  std::mt19937_64 rng(7);
  for (Isa isa : available_isas()) {
    const auto& k = table<T>(isa);
    for (std::size_t rows : {1u, 3u, 8u, 17u})
      for (std::size_t cols : {1u, 2u, 7u, 8u, 9u, 16u, 31u, 64u, 129u}) {
        SCOPED_TRACE(std::string(isa_name(isa)) + " " + std::to_string(rows) + "x" + std::to_string(cols));
        const auto w = random_vec<T>(rng, rows * cols);
        const auto x = random_vec<T>(rng, cols);
        const auto g = random_vec<T>(rng, rows);

        const double s = static_cast<double>(cols);
        EXPECT_NEAR(k.dot(x.data(), x.data(), cols), ref.dot(x.data(), x.data(), cols), tol<T>() * s);

        auto y1 = random_vec<T>(rng, cols), y2 = y1;
        k.axpy(T(0.37), x.data(), y1.data(), cols);
        ref.axpy(T(0.37), x.data(), y2.data(), cols);
        expect_close(y1, y2, 1);

        std::vector<T> o1(rows), o2(rows);
        k.gemv(w.data(), rows, cols, x.data(), o1.data());
        ref.gemv(w.data(), rows, cols, x.data(), o2.data());
        expect_close(o1, o2, s);

        auto a1 = random_vec<T>(rng, cols), a2 = a1;
        k.gemv_t_acc(w.data(), rows, cols, g.data(), a1.data());
        ref.gemv_t_acc(w.data(), rows, cols, g.data(), a2.data());
        expect_close(a1, a2, static_cast<double>(rows));

        auto m1 = w, m2 = w;
        k.ger_acc(m1.data(), rows, cols, g.data(), x.data());
        ref.ger_acc(m2.data(), rows, cols, g.data(), x.data());
        expect_close(m1, m2, 1);
      }
  }
}

TEST(Kernels, ScalarReferenceValues) {
  const auto& k = table<double>(Isa::scalar);
  const std::vector<double> w{1, 2, 3, 4, 5, 6};  // 2 x 3
  const std::vector<double> x{1, 0, -1};
  std::vector<double> y(2);
  k.gemv(w.data(), 2, 3, x.data(), y.data());
  EXPECT_EQ(y, (std::vector<double>{-2, -2}));
  std::vector<double> acc{1, 1, 1};
  const std::vector<double> g{1, 2};
  k.gemv_t_acc(w.data(), 2, 3, g.data(), acc.data());
  EXPECT_EQ(acc, (std::vector<double>{10, 13, 16}));
  EXPECT_EQ(k.dot(w.data(), w.data() + 3, 3), 4 + 10 + 18);
}

TEST(Kernels, ScalarAlwaysAvailable) {
  EXPECT_TRUE(isa_available(Isa::scalar));
  EXPECT_TRUE(isa_available(active_isa()));
}

TEST(Kernels, SpanWrappersCheckShapes) {
  std::vector<float> a(3), b(4);
  EXPECT_THROW(dot<float>(a, b), ShapeError);
  Matrix<float> w(2, 3);
  std::vector<float> y(3);
  EXPECT_THROW(gemv<float>(w, a, y), ShapeError);
}

}  // namespace
}  // namespace kgfr::kernels
