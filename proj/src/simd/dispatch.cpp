#include <atomic>
#include <cstdlib>
#include <string>

#include "statekit/error.hpp"
#include "statekit/simd/kernels.hpp"

namespace statekit::simd {

const KernelTable& scalar_kernels();
#if defined(STATEKIT_HAVE_AVX2)
const KernelTable& avx2_kernels();
#endif

namespace {

Isa detect() {
  if (const char* env = std::getenv("STATEKIT_ISA")) {
    const std::string v(env);
    if (v == "scalar") return Isa::Scalar;
    if (v == "avx2" && isa_available(Isa::Avx2)) return Isa::Avx2;
  }
  return isa_available(Isa::Avx2) ? Isa::Avx2 : Isa::Scalar;
}

std::atomic<Isa>& active() {
  static std::atomic<Isa> isa{detect()};
  return isa;
}

}  // namespace

std::string_view to_string(Isa isa) noexcept {
  return isa == Isa::Avx2 ? "avx2" : "scalar";
}

bool isa_available(Isa isa) noexcept {
  switch (isa) {
    case Isa::Scalar:
      return true;
    case Isa::Avx2:
#if defined(STATEKIT_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& kernels(Isa isa) {
  if (!isa_available(isa)) {
    throw Error(ErrorCode::InvalidConfig,
                "instruction set unavailable: " + std::string(to_string(isa)));
  }
#if defined(STATEKIT_HAVE_AVX2)
  if (isa == Isa::Avx2) return avx2_kernels();
#endif
  return scalar_kernels();
}

const KernelTable& kernels() { return kernels(active().load()); }

Isa active_isa() noexcept { return active().load(); }

void set_active_isa(Isa isa) {
  kernels(isa);
  active().store(isa);
}

double sum(std::span<const double> x) { return kernels().sum(x.data(), x.size()); }

double sum_sq_dev(std::span<const double> x, double center) {
  return kernels().sum_sq_dev(x.data(), x.size(), center);
}

}  // namespace statekit::simd
