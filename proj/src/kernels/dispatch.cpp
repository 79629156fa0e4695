#include <atomic>
#include <cstdlib>
#include <string>

#include "quann/errors.hpp"
#include "quann/kernels.hpp"

namespace quann::kernels {

#ifndef QUANN_HAVE_AVX2_KERNELS
const KernelTable* avx2_table() { return nullptr; }
#endif

namespace {

bool cpu_has_avx2() {
#if defined(QUANN_HAVE_AVX2_KERNELS) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* initial_table() {
  if (const char* env = std::getenv("QUANN_SIMD")) {
    const std::string want(env);
    if (want == "scalar") return &scalar_table();
    if (want == "avx2" && cpu_has_avx2()) return avx2_table();
  }
  if (cpu_has_avx2()) return avx2_table();
  return &scalar_table();
}

std::atomic<const KernelTable*>& slot() {
  static std::atomic<const KernelTable*> current{initial_table()};
  return current;
}

}  // namespace

bool isa_supported(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
      return avx2_table() != nullptr && cpu_has_avx2();
  }
  return false;
}

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
  }
  return "unknown";
}

const KernelTable& table(Isa isa) {
  if (!isa_supported(isa)) {
    throw ConfigError("kernel ISA '" + std::string(isa_name(isa)) + "' is not supported here");
  }
  return isa == Isa::avx2 ? *avx2_table() : scalar_table();
}

Isa active_isa() { return active().isa; }

void set_isa(Isa isa) { slot().store(&table(isa)); }

const KernelTable& active() { return *slot().load(std::memory_order_relaxed); }

}  // namespace quann::kernels
