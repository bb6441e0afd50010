#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "kgfr/matrix.hpp"

namespace kgfr {

struct ModelDims {
  std::size_t layers = 2;
  std::size_t dim = 64;
  std::size_t dim_attn = 8;

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

// Desk-scale default and the large preset (3 layers, d = 1024, d_attn = 4).
inline constexpr ModelDims kDeskDims{2, 64, 8};
inline constexpr ModelDims kLargeDims{3, 1024, 4};

template <class T>
struct LayerParams {
  Matrix<T> w1;  // d x 2d   relation update over [r ; q]
  Matrix<T> w2;  // d x d    message projection
  Matrix<T> w3;  // 1 x d_attn
  Matrix<T> w4;  // d_attn x d  subject
  Matrix<T> w5;  // d_attn x d  relation
  Matrix<T> w6;  // d_attn x d  question

  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

// All learnable state of the retriever. W7 (1 x d) turns final entity
// embeddings into scores.
template <class T>
struct ModelParams {
  ModelDims dims;
  std::vector<LayerParams<T>> layers;
  Matrix<T> w7;

  static ModelParams zeros(const ModelDims& dims);
  // Xavier-uniform per matrix from one seeded stream.
  static ModelParams xavier(const ModelDims& dims, std::uint64_t seed);

  // Visits every matrix in checkpoint order: per layer W1..W6, then W7.
  template <class F>
  void for_each(F&& f) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      auto& l = layers[i];
      f(name(1, i), l.w1);
      f(name(2, i), l.w2);
      f(name(3, i), l.w3);
      f(name(4, i), l.w4);
      f(name(5, i), l.w5);
      f(name(6, i), l.w6);
    }
    f(std::string("W7"), w7);
  }
  template <class F>
  void for_each(F&& f) const {
    const_cast<ModelParams*>(this)->for_each(
        [&](const std::string& n, Matrix<T>& m) { f(n, static_cast<const Matrix<T>&>(m)); });
  }

  // Shapes match dims and every entry is finite.
  void validate() const;
  std::size_t parameter_count() const;

  template <class U>
  ModelParams<U> cast() const {
    ModelParams<U> out;
    out.dims = dims;
    for (const auto& l : layers)
      out.layers.push_back({l.w1.template cast<U>(), l.w2.template cast<U>(), l.w3.template cast<U>(),
                            l.w4.template cast<U>(), l.w5.template cast<U>(), l.w6.template cast<U>()});
    out.w7 = w7.template cast<U>();
    return out;
  }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;

 private:
  static std::string name(int which, std::size_t layer) {
    return "W" + std::to_string(which) + "[" + std::to_string(layer) + "]";
  }
};

// Checkpoint: "KGFRCKPT" | u32 version=1 | u32 L | u32 d | u32 d_attn |
// matrices in for_each order as row-major little-endian f32.
void write_checkpoint(std::ostream& out, const ModelParams<float>& params);
ModelParams<float> read_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const ModelParams<float>& params);
ModelParams<float> load_checkpoint(const std::filesystem::path& path);

}  // namespace kgfr
