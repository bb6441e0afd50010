#include "kgfr/kernels/kernels.hpp"

namespace kgfr::kernels::detail {
namespace {

template <class T>
T dot_scalar(const T* a, const T* b, std::size_t n) {
  T acc{0};
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <class T>
void axpy_scalar(T a, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <class T>
void gemv_scalar(const T* w, std::size_t rows, std::size_t cols, const T* x, T* y) {
  for (std::size_t r = 0; r < rows; ++r) y[r] = dot_scalar(w + r * cols, x, cols);
}

template <class T>
void gemv_t_acc_scalar(const T* w, std::size_t rows, std::size_t cols, const T* g, T* x) {
  for (std::size_t r = 0; r < rows; ++r) axpy_scalar(g[r], w + r * cols, x, cols);
}

template <class T>
void ger_acc_scalar(T* w, std::size_t rows, std::size_t cols, const T* g, const T* x) {
  for (std::size_t r = 0; r < rows; ++r) axpy_scalar(g[r], x, w + r * cols, cols);
}

}  // namespace

template <class T>
const KernelTable<T>& scalar_table() {
  static const KernelTable<T> t{&dot_scalar<T>, &axpy_scalar<T>, &gemv_scalar<T>,
                                &gemv_t_acc_scalar<T>, &ger_acc_scalar<T>};
  return t;
}

template const KernelTable<float>& scalar_table<float>();
template const KernelTable<double>& scalar_table<double>();

}  // namespace kgfr::kernels::detail
