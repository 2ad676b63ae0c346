#pragma once

// Data-parallel inner loops of the estimators. Each kernel has a scalar
// reference and an AVX2 variant; the variant is chosen once at startup from
// CPU features and can be pinned with STATEKIT_ISA=scalar|avx2.
//
// Reductions are blocked: fixed-size blocks are summed locally and block
// totals are folded with a pairwise cascade, so results depend only on the
// input length and the selected ISA, never on scheduling.

#include <cstddef>
#include <span>
#include <string_view>

namespace statekit::simd {

enum class Isa { Scalar, Avx2 };

std::string_view to_string(Isa isa) noexcept;

/// Weighted moments of the design (1, t, g) against target y.
struct Gram3 {
  double sw = 0, swt = 0, swg = 0;
  double swtt = 0, swtg = 0, swgg = 0;
  double swy = 0, swty = 0, swgy = 0;
};

struct EStepSums {
  double sum_log_zeta = 0;
  double sum_w = 0;
  double sum_w_r2 = 0;
};

struct KernelTable {
  Isa isa;
  double (*sum)(const double* x, std::size_t n);
  double (*sum_sq_dev)(const double* x, std::size_t n, double center);
  void (*residuals)(const double* t, const double* g, const double* y,
                    std::size_t n, double a0, double a1, double a2,
                    double* r);
  EStepSums (*e_step)(const double* r, std::size_t n, double half_v,
                      double inv_two_sigma2, double xi, double* zeta,
                      double* w);
  Gram3 (*weighted_gram)(const double* t, const double* g, const double* y,
                         const double* w, std::size_t n);
  double (*weighted_sq_sum)(const double* r, const double* w, std::size_t n);
};

bool isa_available(Isa isa) noexcept;
const KernelTable& kernels(Isa isa);

/// Table for the active ISA.
const KernelTable& kernels();
Isa active_isa() noexcept;

/// Overrides the dispatch decision; throws if the ISA is unavailable.
void set_active_isa(Isa isa);

// Span conveniences over the active table.

double sum(std::span<const double> x);
double sum_sq_dev(std::span<const double> x, double center);

}  // namespace statekit::simd
