#include <atomic>
#include <cstdlib>
#include <string_view>

#include "nnf/simd/kernels.hpp"

namespace nnf::simd {

#if defined(NNF_HAVE_AVX2_TU)
const KernelTable& avx2_table_unchecked();
#endif
#if defined(NNF_HAVE_NEON_TU)
const KernelTable& neon_table_unchecked();
#endif

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
    case Isa::neon: return "neon";
  }
  return "unknown";
}

const KernelTable* avx2_table() {
#if defined(NNF_HAVE_AVX2_TU)
  static const bool supported = [] {
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  }();
  return supported ? &avx2_table_unchecked() : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable* neon_table() {
#if defined(NNF_HAVE_NEON_TU)
  return &neon_table_unchecked();
#else
  return nullptr;
#endif
}

namespace {

const KernelTable& choose() {
  if (const char* env = std::getenv("NNF_SIMD"); env != nullptr && std::string_view(env) == "scalar") {
    return scalar_table();
  }
  if (const KernelTable* t = avx2_table()) return *t;
  if (const KernelTable* t = neon_table()) return *t;
  return scalar_table();
}

std::atomic<const KernelTable*> g_override{nullptr};

}  // namespace

const KernelTable& active() {
  if (const KernelTable* o = g_override.load(std::memory_order_acquire)) return *o;
  static const KernelTable& chosen = choose();
  return chosen;
}

void override_table(const KernelTable* table) { g_override.store(table, std::memory_order_release); }

}  // namespace nnf::simd
