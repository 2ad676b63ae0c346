// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "cascade.hpp"
#include "statekit/simd/kernels.hpp"

namespace statekit::simd {
namespace {

using detail::Cascade;
using detail::kBlock;

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

// Natural log for positive normal inputs: frexp-style split, then the
// Cephes rational approximation of log1p on [sqrt(1/2)-1, sqrt(2)-1].
inline __m256d log_pd(__m256d x) {
  const __m256i bits = _mm256_castpd_si256(x);
  const __m256i exp_field = _mm256_srli_epi64(bits, 52);
  // 2^52 + k reinterpreted, minus 2^52, gives k as a double.
  const __m256d magic = _mm256_castsi256_pd(_mm256_set1_epi64x(0x4330000000000000LL));
  __m256d e = _mm256_sub_pd(
      _mm256_castsi256_pd(_mm256_or_si256(exp_field, _mm256_castpd_si256(magic))),
      magic);
  e = _mm256_sub_pd(e, _mm256_set1_pd(1022.0));

  const __m256i mant_mask = _mm256_set1_epi64x(0x000fffffffffffffLL);
  const __m256i half_bits = _mm256_set1_epi64x(0x3fe0000000000000LL);
  __m256d m = _mm256_castsi256_pd(
      _mm256_or_si256(_mm256_and_si256(bits, mant_mask), half_bits));

  // m in [0.5, 1). Shift to [sqrt(1/2), sqrt(2)).
  const __m256d sqrth = _mm256_set1_pd(0.70710678118654752440);
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d small = _mm256_cmp_pd(m, sqrth, _CMP_LT_OQ);
  e = _mm256_sub_pd(e, _mm256_and_pd(small, one));
  const __m256d xm = _mm256_sub_pd(_mm256_add_pd(m, _mm256_and_pd(small, m)), one);

  __m256d p = _mm256_set1_pd(1.01875663804580931796E-4);
  p = _mm256_fmadd_pd(p, xm, _mm256_set1_pd(4.97494994976747001425E-1));
  p = _mm256_fmadd_pd(p, xm, _mm256_set1_pd(4.70579119878881725854E0));
  p = _mm256_fmadd_pd(p, xm, _mm256_set1_pd(1.44989225341610930846E1));
  p = _mm256_fmadd_pd(p, xm, _mm256_set1_pd(1.79368678507819816313E1));
  p = _mm256_fmadd_pd(p, xm, _mm256_set1_pd(7.70838733755885391666E0));

  __m256d q = _mm256_add_pd(xm, _mm256_set1_pd(1.12873587189167450590E1));
  q = _mm256_fmadd_pd(q, xm, _mm256_set1_pd(4.52279145837532221105E1));
  q = _mm256_fmadd_pd(q, xm, _mm256_set1_pd(8.29875266912776603211E1));
  q = _mm256_fmadd_pd(q, xm, _mm256_set1_pd(7.11544750618563894466E1));
  q = _mm256_fmadd_pd(q, xm, _mm256_set1_pd(2.31251620126765340583E1));

  const __m256d z = _mm256_mul_pd(xm, xm);
  __m256d y = _mm256_mul_pd(xm, _mm256_mul_pd(z, _mm256_div_pd(p, q)));
  y = _mm256_fnmadd_pd(e, _mm256_set1_pd(2.121944400546905827679e-4), y);
  y = _mm256_fnmadd_pd(z, _mm256_set1_pd(0.5), y);
  __m256d out = _mm256_add_pd(xm, y);
  out = _mm256_fmadd_pd(e, _mm256_set1_pd(0.693359375), out);
  return out;
}

double sum_avx2(const double* x, std::size_t n) {
  Cascade c;
  for (std::size_t b = 0; b < n; b += kBlock) {
    const std::size_t e = std::min(n, b + kBlock);
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = b;
    for (; i + 4 <= e; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
    double tail = 0.0;
    for (; i < e; ++i) tail += x[i];
    c.push(hsum(acc) + tail);
  }
  return c.total();
}

double sum_sq_dev_avx2(const double* x, std::size_t n, double center) {
  Cascade c;
  const __m256d mu = _mm256_set1_pd(center);
  for (std::size_t b = 0; b < n; b += kBlock) {
    const std::size_t e = std::min(n, b + kBlock);
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = b;
    for (; i + 4 <= e; i += 4) {
      const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x + i), mu);
      acc = _mm256_fmadd_pd(d, d, acc);
    }
    double tail = 0.0;
    for (; i < e; ++i) {
      const double d = x[i] - center;
      tail += d * d;
    }
    c.push(hsum(acc) + tail);
  }
  return c.total();
}

void residuals_avx2(const double* t, const double* g, const double* y,
                    std::size_t n, double a0, double a1, double a2,
                    double* r) {
  const __m256d c0 = _mm256_set1_pd(a0);
  const __m256d c1 = _mm256_set1_pd(a1);
  const __m256d c2 = _mm256_set1_pd(a2);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d fit = _mm256_fmadd_pd(c1, _mm256_loadu_pd(t + i), c0);
    fit = _mm256_fmadd_pd(c2, _mm256_loadu_pd(g + i), fit);
    _mm256_storeu_pd(r + i, _mm256_sub_pd(_mm256_loadu_pd(y + i), fit));
  }
  for (; i < n; ++i) r[i] = y[i] - (a0 + a1 * t[i] + a2 * g[i]);
}

EStepSums e_step_avx2(const double* r, std::size_t n, double half_v,
                      double inv_two_sigma2, double xi, double* zeta,
                      double* w) {
  Cascade c_log, c_w, c_wr2;
  const __m256d hv = _mm256_set1_pd(half_v);
  const __m256d k = _mm256_set1_pd(inv_two_sigma2);
  const __m256d x = _mm256_set1_pd(xi);
  for (std::size_t b = 0; b < n; b += kBlock) {
    const std::size_t e = std::min(n, b + kBlock);
    __m256d s_log = _mm256_setzero_pd();
    __m256d s_w = _mm256_setzero_pd();
    __m256d s_wr2 = _mm256_setzero_pd();
    std::size_t i = b;
    for (; i + 4 <= e; i += 4) {
      const __m256d ri = _mm256_loadu_pd(r + i);
      const __m256d r2 = _mm256_mul_pd(ri, ri);
      const __m256d z = _mm256_fmadd_pd(r2, k, hv);
      const __m256d wi = _mm256_div_pd(x, z);
      _mm256_storeu_pd(zeta + i, z);
      _mm256_storeu_pd(w + i, wi);
      s_log = _mm256_add_pd(s_log, log_pd(z));
      s_w = _mm256_add_pd(s_w, wi);
      s_wr2 = _mm256_fmadd_pd(wi, r2, s_wr2);
    }
    double t_log = 0.0, t_w = 0.0, t_wr2 = 0.0;
    for (; i < e; ++i) {
      const double r2 = r[i] * r[i];
      const double z = half_v + r2 * inv_two_sigma2;
      const double wi = xi / z;
      zeta[i] = z;
      w[i] = wi;
      t_log += std::log(z);
      t_w += wi;
      t_wr2 += wi * r2;
    }
    c_log.push(hsum(s_log) + t_log);
    c_w.push(hsum(s_w) + t_w);
    c_wr2.push(hsum(s_wr2) + t_wr2);
  }
  return {c_log.total(), c_w.total(), c_wr2.total()};
}

Gram3 weighted_gram_avx2(const double* t, const double* g, const double* y,
                         const double* w, std::size_t n) {
  Cascade c[9];
  for (std::size_t b = 0; b < n; b += kBlock) {
    const std::size_t e = std::min(n, b + kBlock);
    __m256d s[9];
    for (auto& v : s) v = _mm256_setzero_pd();
    std::size_t i = b;
    for (; i + 4 <= e; i += 4) {
      const __m256d wi = _mm256_loadu_pd(w + i);
      const __m256d ti = _mm256_loadu_pd(t + i);
      const __m256d gi = _mm256_loadu_pd(g + i);
      const __m256d yi = _mm256_loadu_pd(y + i);
      const __m256d wt = _mm256_mul_pd(wi, ti);
      const __m256d wg = _mm256_mul_pd(wi, gi);
      s[0] = _mm256_add_pd(s[0], wi);
      s[1] = _mm256_add_pd(s[1], wt);
      s[2] = _mm256_add_pd(s[2], wg);
      s[3] = _mm256_fmadd_pd(wt, ti, s[3]);
      s[4] = _mm256_fmadd_pd(wt, gi, s[4]);
      s[5] = _mm256_fmadd_pd(wg, gi, s[5]);
      s[6] = _mm256_fmadd_pd(wi, yi, s[6]);
      s[7] = _mm256_fmadd_pd(wt, yi, s[7]);
      s[8] = _mm256_fmadd_pd(wg, yi, s[8]);
    }
    double tail[9] = {};
    for (; i < e; ++i) {
      const double wi = w[i];
      const double wt = wi * t[i];
      const double wg = wi * g[i];
      tail[0] += wi;
      tail[1] += wt;
      tail[2] += wg;
      tail[3] += wt * t[i];
      tail[4] += wt * g[i];
      tail[5] += wg * g[i];
      tail[6] += wi * y[i];
      tail[7] += wt * y[i];
      tail[8] += wg * y[i];
    }
    for (int q = 0; q < 9; ++q) c[q].push(hsum(s[q]) + tail[q]);
  }
  return {c[0].total(), c[1].total(), c[2].total(), c[3].total(), c[4].total(),
          c[5].total(), c[6].total(), c[7].total(), c[8].total()};
}

double weighted_sq_sum_avx2(const double* r, const double* w, std::size_t n) {
  Cascade c;
  for (std::size_t b = 0; b < n; b += kBlock) {
    const std::size_t e = std::min(n, b + kBlock);
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = b;
    for (; i + 4 <= e; i += 4) {
      const __m256d ri = _mm256_loadu_pd(r + i);
      acc = _mm256_fmadd_pd(_mm256_mul_pd(_mm256_loadu_pd(w + i), ri), ri, acc);
    }
    double tail = 0.0;
    for (; i < e; ++i) tail += w[i] * r[i] * r[i];
    c.push(hsum(acc) + tail);
  }
  return c.total();
}

}  // namespace

const KernelTable& avx2_kernels() {
  static const KernelTable table{
      Isa::Avx2,          sum_avx2,           sum_sq_dev_avx2,
      residuals_avx2,     e_step_avx2,        weighted_gram_avx2,
      weighted_sq_sum_avx2,
  };
  return table;
}

}  // namespace statekit::simd
