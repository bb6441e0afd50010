#pragma once

// Dense vector kernels used by the propagation engine and the trainer.
//
// Every kernel has a portable scalar reference implementation plus SIMD
// variants (AVX2+FMA on x86-64, NEON on aarch64). The variant is chosen once
// per process from CPUID, or forced with KGFR_SIMD=scalar|avx2|neon.
// SIMD variants reassociate sums, so they agree with the scalar reference
// to rounding, not bitwise; within one process the choice is fixed, which
// keeps every run reproducible.

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "kgfr/matrix.hpp"

namespace kgfr::kernels {

enum class Isa { scalar, avx2, neon };

template <class T>
struct KernelTable {
  T (*dot)(const T* a, const T* b, std::size_t n);
  // y += a * x
  void (*axpy)(T a, const T* x, T* y, std::size_t n);
  // y = W x, W is rows x cols row-major.
  void (*gemv)(const T* w, std::size_t rows, std::size_t cols, const T* x, T* y);
  // x += W^T g
  void (*gemv_t_acc)(const T* w, std::size_t rows, std::size_t cols, const T* g, T* x);
  // W += g x^T
  void (*ger_acc)(T* w, std::size_t rows, std::size_t cols, const T* g, const T* x);
};

std::string_view isa_name(Isa isa);
bool isa_available(Isa isa);
std::vector<Isa> available_isas();

// The ISA selected for this process.
Isa active_isa();

template <class T>
const KernelTable<T>& table(Isa isa);

template <class T>
const KernelTable<T>& active() {
  static const KernelTable<T>& t = table<T>(active_isa());
  return t;
}

// Span conveniences over the active table. Sizes are checked.

template <class T>
T dot(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
  return active<T>().dot(a.data(), b.data(), a.size());
}

template <class T>
void axpy(T a, std::span<const T> x, std::span<T> y) {
  if (x.size() != y.size()) throw ShapeError("axpy: length mismatch");
  active<T>().axpy(a, x.data(), y.data(), x.size());
}

template <class T>
void gemv(const Matrix<T>& w, std::span<const T> x, std::span<T> y) {
  if (x.size() != w.cols() || y.size() != w.rows()) throw ShapeError("gemv: shape mismatch");
  active<T>().gemv(w.data(), w.rows(), w.cols(), x.data(), y.data());
}

template <class T>
void gemv_t_acc(const Matrix<T>& w, std::span<const T> g, std::span<T> x) {
  if (g.size() != w.rows() || x.size() != w.cols()) throw ShapeError("gemv_t_acc: shape mismatch");
  active<T>().gemv_t_acc(w.data(), w.rows(), w.cols(), g.data(), x.data());
}

template <class T>
void ger_acc(Matrix<T>& w, std::span<const T> g, std::span<const T> x) {
  if (g.size() != w.rows() || x.size() != w.cols()) throw ShapeError("ger_acc: shape mismatch");
  active<T>().ger_acc(w.data(), w.rows(), w.cols(), g.data(), x.data());
}

namespace detail {
template <class T>
const KernelTable<T>& scalar_table();
template <class T>
const KernelTable<T>* avx2_table();  // nullptr when not compiled in
template <class T>
const KernelTable<T>* neon_table();  // nullptr when not compiled in
}  // namespace detail

}  // namespace kgfr::kernels
