#include <algorithm>
#include <cmath>

#include "cascade.hpp"
#include "statekit/simd/kernels.hpp"

namespace statekit::simd {
namespace {

using detail::Cascade;
using detail::kBlock;

double sum_scalar(const double* x, std::size_t n) {
  Cascade c;
  for (std::size_t b = 0; b < n; b += kBlock) {
    const std::size_t e = std::min(n, b + kBlock);
    double acc = 0.0;
    for (std::size_t i = b; i < e; ++i) acc += x[i];
    c.push(acc);
  }
  return c.total();
}

double sum_sq_dev_scalar(const double* x, std::size_t n, double center) {
  Cascade c;
  for (std::size_t b = 0; b < n; b += kBlock) {
    const std::size_t e = std::min(n, b + kBlock);
    double acc = 0.0;
    for (std::size_t i = b; i < e; ++i) {
      const double d = x[i] - center;
      acc += d * d;
    }
    c.push(acc);
  }
  return c.total();
}

void residuals_scalar(const double* t, const double* g, const double* y,
                      std::size_t n, double a0, double a1, double a2,
                      double* r) {
  for (std::size_t i = 0; i < n; ++i) r[i] = y[i] - (a0 + a1 * t[i] + a2 * g[i]);
}

EStepSums e_step_scalar(const double* r, std::size_t n, double half_v,
                        double inv_two_sigma2, double xi, double* zeta,
                        double* w) {
  Cascade c_log, c_w, c_wr2;
  for (std::size_t b = 0; b < n; b += kBlock) {
    const std::size_t e = std::min(n, b + kBlock);
    double s_log = 0.0, s_w = 0.0, s_wr2 = 0.0;
    for (std::size_t i = b; i < e; ++i) {
      const double r2 = r[i] * r[i];
      const double z = half_v + r2 * inv_two_sigma2;
      const double wi = xi / z;
      zeta[i] = z;
      w[i] = wi;
      s_log += std::log(z);
      s_w += wi;
      s_wr2 += wi * r2;
    }
    c_log.push(s_log);
    c_w.push(s_w);
    c_wr2.push(s_wr2);
  }
  return {c_log.total(), c_w.total(), c_wr2.total()};
}

Gram3 weighted_gram_scalar(const double* t, const double* g, const double* y,
                           const double* w, std::size_t n) {
  Cascade c[9];
  for (std::size_t b = 0; b < n; b += kBlock) {
    const std::size_t e = std::min(n, b + kBlock);
    double s[9] = {};
    for (std::size_t i = b; i < e; ++i) {
      const double wi = w[i];
      const double wt = wi * t[i];
      const double wg = wi * g[i];
      s[0] += wi;
      s[1] += wt;
      s[2] += wg;
      s[3] += wt * t[i];
      s[4] += wt * g[i];
      s[5] += wg * g[i];
      s[6] += wi * y[i];
      s[7] += wt * y[i];
      s[8] += wg * y[i];
    }
    for (int k = 0; k < 9; ++k) c[k].push(s[k]);
  }
  return {c[0].total(), c[1].total(), c[2].total(), c[3].total(), c[4].total(),
          c[5].total(), c[6].total(), c[7].total(), c[8].total()};
}

double weighted_sq_sum_scalar(const double* r, const double* w, std::size_t n) {
  Cascade c;
  for (std::size_t b = 0; b < n; b += kBlock) {
    const std::size_t e = std::min(n, b + kBlock);
    double acc = 0.0;
    for (std::size_t i = b; i < e; ++i) acc += w[i] * r[i] * r[i];
    c.push(acc);
  }
  return c.total();
}

}  // namespace

const KernelTable& scalar_kernels() {
  static const KernelTable table{
      Isa::Scalar,          sum_scalar,           sum_sq_dev_scalar,
      residuals_scalar,     e_step_scalar,        weighted_gram_scalar,
      weighted_sq_sum_scalar,
  };
  return table;
}

}  // namespace statekit::simd
