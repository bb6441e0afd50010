// Compiled with -mavx2 -mfma on x86-64. Only reached after a CPUID check.
#include "kgfr/kernels/kernels.hpp"

#if defined(__x86_64__) && defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>

namespace kgfr::kernels::detail {
namespace {

inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  __m128 shuf = _mm_movehdup_ps(lo);
  __m128 sums = _mm_add_ps(lo, shuf);
  shuf = _mm_movehl_ps(shuf, sums);
  sums = _mm_add_ss(sums, shuf);
  return _mm_cvtss_f32(sums);
}

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d high64 = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, high64));
}

float dot_f32(const float* a, const float* b, std::size_t n) {
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 8), _mm256_loadu_ps(b + i + 8), acc1);
  }
  for (; i + 8 <= n; i += 8)
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
  float acc = hsum(_mm256_add_ps(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double dot_f64(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4)
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_f32(float a, const float* x, float* y, std::size_t n) {
  const __m256 va = _mm256_set1_ps(a);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  for (; i < n; ++i) y[i] += a * x[i];
}

void axpy_f64(double a, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += a * x[i];
}

template <class T, T (*Dot)(const T*, const T*, std::size_t)>
void gemv(const T* w, std::size_t rows, std::size_t cols, const T* x, T* y) {
  for (std::size_t r = 0; r < rows; ++r) y[r] = Dot(w + r * cols, x, cols);
}

template <class T, void (*Axpy)(T, const T*, T*, std::size_t)>
void gemv_t_acc(const T* w, std::size_t rows, std::size_t cols, const T* g, T* x) {
  for (std::size_t r = 0; r < rows; ++r) Axpy(g[r], w + r * cols, x, cols);
}

template <class T, void (*Axpy)(T, const T*, T*, std::size_t)>
void ger_acc(T* w, std::size_t rows, std::size_t cols, const T* g, const T* x) {
  for (std::size_t r = 0; r < rows; ++r) Axpy(g[r], x, w + r * cols, cols);
}

const KernelTable<float> kF32{&dot_f32, &axpy_f32, &gemv<float, dot_f32>,
                              &gemv_t_acc<float, axpy_f32>, &ger_acc<float, axpy_f32>};
const KernelTable<double> kF64{&dot_f64, &axpy_f64, &gemv<double, dot_f64>,
                               &gemv_t_acc<double, axpy_f64>, &ger_acc<double, axpy_f64>};

}  // namespace

template <>
const KernelTable<float>* avx2_table<float>() { return &kF32; }
template <>
const KernelTable<double>* avx2_table<double>() { return &kF64; }

}  // namespace kgfr::kernels::detail

#else

namespace kgfr::kernels::detail {
template <>
const KernelTable<float>* avx2_table<float>() { return nullptr; }
template <>
const KernelTable<double>* avx2_table<double>() { return nullptr; }
}  // namespace kgfr::kernels::detail

#endif
