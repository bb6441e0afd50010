#include "kgfr/params.hpp"

#include <fstream>
#include <random>

#include "kgfr/binary_io.hpp"
#include "kgfr/error.hpp"

namespace kgfr {

template <class T>
ModelParams<T> ModelParams<T>::zeros(const ModelDims& dims) {
  if (dims.layers < 1 || dims.dim < 1 || dims.dim_attn < 1)
    throw ConfigError("model dimensions must all be at least 1");
  ModelParams p;
  p.dims = dims;
  const auto d = dims.dim, a = dims.dim_attn;
  for (std::size_t i = 0; i < dims.layers; ++i)
    p.layers.push_back({Matrix<T>(d, 2 * d), Matrix<T>(d, d), Matrix<T>(1, a), Matrix<T>(a, d),
                        Matrix<T>(a, d), Matrix<T>(a, d)});
  p.w7 = Matrix<T>(1, d);
  return p;
}

template <class T>
ModelParams<T> ModelParams<T>::xavier(const ModelDims& dims, std::uint64_t seed) {
  ModelParams p = zeros(dims);
  std::mt19937_64 rng(seed);
  p.for_each([&](const std::string&, Matrix<T>& m) {
    const double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
    for (auto& x : m.flat()) {
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;  // [0, 1)
      x = static_cast<T>((2.0 * u - 1.0) * limit);
    }
  });
  return p;
}

template <class T>
void ModelParams<T>::validate() const {
  if (dims.layers < 1 || dims.dim < 1 || dims.dim_attn < 1)
    throw ConfigError("model dimensions must all be at least 1");
  if (layers.size() != dims.layers) throw ShapeError("layer count does not match dims");
  const auto d = dims.dim, a = dims.dim_attn;
  auto expect = [](const Matrix<T>& m, std::size_t r, std::size_t c, const std::string& n) {
    if (m.rows() != r || m.cols() != c)
      throw ShapeError(n + " has shape " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                       ", expected " + std::to_string(r) + "x" + std::to_string(c));
    for (T x : m.flat())
      if (!std::isfinite(x)) throw NumericError(n + " has a non-finite entry");
  };
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const auto tag = "[" + std::to_string(i) + "]";
    expect(l.w1, d, 2 * d, "W1" + tag);
    expect(l.w2, d, d, "W2" + tag);
    expect(l.w3, 1, a, "W3" + tag);
    expect(l.w4, a, d, "W4" + tag);
    expect(l.w5, a, d, "W5" + tag);
    expect(l.w6, a, d, "W6" + tag);
  }
  expect(w7, 1, d, "W7");
}

template <class T>
std::size_t ModelParams<T>::parameter_count() const {
  std::size_t n = 0;
  for_each([&](const std::string&, const Matrix<T>& m) { n += m.size(); });
  return n;
}

template struct ModelParams<float>;
template struct ModelParams<double>;

namespace {
constexpr char kCkptMagic[9] = "KGFRCKPT";
constexpr std::uint32_t kCkptVersion = 1;
}  // namespace

void write_checkpoint(std::ostream& out, const ModelParams<float>& params) {
  params.validate();
  out.write(kCkptMagic, 8);
  io::write_u32(out, kCkptVersion);
  io::write_u32(out, static_cast<std::uint32_t>(params.dims.layers));
  io::write_u32(out, static_cast<std::uint32_t>(params.dims.dim));
  io::write_u32(out, static_cast<std::uint32_t>(params.dims.dim_attn));
  params.for_each([&](const std::string&, const Matrix<float>& m) {
    for (float x : m.flat()) io::write_f32(out, x);
  });
}

ModelParams<float> read_checkpoint(std::istream& in) {
  io::expect_magic(in, kCkptMagic, "checkpoint");
  const auto version = io::read_u32(in, "checkpoint version");
  if (version != kCkptVersion) throw ParseError("unsupported checkpoint version " + std::to_string(version));
  ModelDims dims;
  dims.layers = io::read_u32(in, "checkpoint dims");
  dims.dim = io::read_u32(in, "checkpoint dims");
  dims.dim_attn = io::read_u32(in, "checkpoint dims");
  auto params = ModelParams<float>::zeros(dims);
  params.for_each([&](const std::string&, Matrix<float>& m) {
    for (auto& x : m.flat()) x = io::read_f32(in, "checkpoint matrices");
  });
  if (in.peek() != std::char_traits<char>::eof()) throw ParseError("trailing bytes after checkpoint");
  params.validate();
  return params;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams<float>& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write checkpoint '" + path.string() + "'");
  write_checkpoint(out, params);
}

ModelParams<float> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open checkpoint '" + path.string() + "'");
  return read_checkpoint(in);
}

}  // namespace kgfr
