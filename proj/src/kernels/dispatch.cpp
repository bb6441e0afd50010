#include <cstdlib>
#include <string>

#include "kgfr/kernels/kernels.hpp"

namespace kgfr::kernels {

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
    case Isa::neon: return "neon";
  }
  return "unknown";
}

bool isa_available(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
      if (detail::avx2_table<float>() == nullptr) return false;
      __builtin_cpu_init();
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::neon:
      return detail::neon_table<float>() != nullptr;
  }
  return false;
}

std::vector<Isa> available_isas() {
  std::vector<Isa> out;
  for (Isa isa : {Isa::scalar, Isa::avx2, Isa::neon})
    if (isa_available(isa)) out.push_back(isa);
  return out;
}

namespace {

Isa select_isa() {
  if (const char* env = std::getenv("KGFR_SIMD")) {
    const std::string want = env;
    for (Isa isa : {Isa::scalar, Isa::avx2, Isa::neon})
      if (want == isa_name(isa)) {
        if (!isa_available(isa))
          throw ConfigError("KGFR_SIMD=" + want + " is not available on this machine");
        return isa;
      }
    throw ConfigError("unknown KGFR_SIMD value '" + want + "'");
  }
  if (isa_available(Isa::avx2)) return Isa::avx2;
  if (isa_available(Isa::neon)) return Isa::neon;
  return Isa::scalar;
}

}  // namespace

Isa active_isa() {
  static const Isa isa = select_isa();
  return isa;
}

template <class T>
const KernelTable<T>& table(Isa isa) {
  const KernelTable<T>* t = nullptr;
  switch (isa) {
    case Isa::scalar: return detail::scalar_table<T>();
    case Isa::avx2: t = isa_available(isa) ? detail::avx2_table<T>() : nullptr; break;
    case Isa::neon: t = detail::neon_table<T>(); break;
  }
  if (t == nullptr) throw ConfigError("kernel set '" + std::string(isa_name(isa)) + "' unavailable");
  return *t;
}

template const KernelTable<float>& table<float>(Isa);
template const KernelTable<double>& table<double>(Isa);

}  // namespace kgfr::kernels
