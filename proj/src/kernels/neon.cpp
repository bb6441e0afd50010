// NEON is baseline on aarch64, so no runtime probe is needed there.
#include "kgfr/kernels/kernels.hpp"

#if defined(__aarch64__)
#include <arm_neon.h>

namespace kgfr::kernels::detail {
namespace {

float dot_f32(const float* a, const float* b, std::size_t n) {
  float32x4_t acc0 = vdupq_n_f32(0.0f);
  float32x4_t acc1 = vdupq_n_f32(0.0f);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = vfmaq_f32(acc0, vld1q_f32(a + i), vld1q_f32(b + i));
    acc1 = vfmaq_f32(acc1, vld1q_f32(a + i + 4), vld1q_f32(b + i + 4));
  }
  for (; i + 4 <= n; i += 4) acc0 = vfmaq_f32(acc0, vld1q_f32(a + i), vld1q_f32(b + i));
  float acc = vaddvq_f32(vaddq_f32(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double dot_f64(const double* a, const double* b, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
  }
  for (; i + 2 <= n; i += 2) acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
  double acc = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_f32(float a, const float* x, float* y, std::size_t n) {
  const float32x4_t va = vdupq_n_f32(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) vst1q_f32(y + i, vfmaq_f32(vld1q_f32(y + i), va, vld1q_f32(x + i)));
  for (; i < n; ++i) y[i] += a * x[i];
}

void axpy_f64(double a, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(a);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
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
const KernelTable<float>* neon_table<float>() { return &kF32; }
template <>
const KernelTable<double>* neon_table<double>() { return &kF64; }

}  // namespace kgfr::kernels::detail

#else

namespace kgfr::kernels::detail {
template <>
const KernelTable<float>* neon_table<float>() { return nullptr; }
template <>
const KernelTable<double>* neon_table<double>() { return nullptr; }
}  // namespace kgfr::kernels::detail

#endif
