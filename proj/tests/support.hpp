#pragma once

// Independent reference computations for the tests. Everything here uses
// long double accumulation and hand-written elimination, sharing no code
// with the library kernels.

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "statekit/data_model.hpp"

namespace testsupport {

using Matrix = std::vector<std::vector<long double>>;

inline long double ref_sum(const std::vector<double>& v) {
  long double s = 0;
  for (double x : v) s += x;
  return s;
}

inline long double ref_mean(const std::vector<double>& v) {
  return ref_sum(v) / static_cast<long double>(v.size());
}

inline long double ref_var(const std::vector<double>& v) {
  const long double m = ref_mean(v);
  long double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<long double>(v.size() - 1);
}

/// Gauss-Jordan with partial pivoting; returns A^-1 b.
inline std::vector<long double> ref_solve(Matrix a, std::vector<long double> b) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    for (std::size_t r = c + 1; r < n; ++r) {
      if (std::fabs(a[r][c]) > std::fabs(a[p][c])) p = r;
    }
    std::swap(a[c], a[p]);
    std::swap(b[c], b[p]);
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c) continue;
      const long double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
      b[r] -= f * b[c];
    }
  }
  for (std::size_t c = 0; c < n; ++c) b[c] /= a[c][c];
  return b;
}

inline Matrix ref_inverse(const Matrix& a) {
  const std::size_t n = a.size();
  Matrix inv(n, std::vector<long double>(n));
  for (std::size_t j = 0; j < n; ++j) {
    std::vector<long double> e(n, 0);
    e[j] = 1;
    const auto col = ref_solve(a, e);
    for (std::size_t i = 0; i < n; ++i) inv[i][j] = col[i];
  }
  return inv;
}

/// Weighted least squares of y on the rows of x.
inline std::vector<long double> ref_wls(const std::vector<std::vector<double>>& x,
                                        const std::vector<double>& y,
                                        const std::vector<double>& w) {
  const std::size_t p = x.front().size();
  Matrix a(p, std::vector<long double>(p, 0));
  std::vector<long double> b(p, 0);
  for (std::size_t i = 0; i < y.size(); ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      b[j] += w[i] * x[i][j] * y[i];
      for (std::size_t k = 0; k < p; ++k) a[j][k] += w[i] * x[i][j] * x[i][k];
    }
  }
  return ref_solve(a, b);
}

/// OLS coefficients and HC1 covariance diagonal.
struct RefOls {
  std::vector<long double> coef;
  std::vector<long double> se;
};

inline RefOls ref_ols_hc1(const std::vector<std::vector<double>>& x, const std::vector<double>& y) {
  const std::size_t n = y.size(), p = x.front().size();
  RefOls out;
  out.coef = ref_wls(x, y, std::vector<double>(n, 1.0));
  Matrix xtx(p, std::vector<long double>(p, 0)), meat(p, std::vector<long double>(p, 0));
  for (std::size_t i = 0; i < n; ++i) {
    long double r = y[i];
    for (std::size_t j = 0; j < p; ++j) r -= out.coef[j] * x[i][j];
    for (std::size_t j = 0; j < p; ++j) {
      for (std::size_t k = 0; k < p; ++k) {
        xtx[j][k] += x[i][j] * x[i][k];
        meat[j][k] += r * r * x[i][j] * x[i][k];
      }
    }
  }
  const Matrix inv = ref_inverse(xtx);
  for (std::size_t j = 0; j < p; ++j) {
    long double v = 0;
    for (std::size_t a = 0; a < p; ++a) {
      for (std::size_t b = 0; b < p; ++b) v += inv[j][a] * meat[a][b] * inv[b][j];
    }
    out.se.push_back(std::sqrt(v * n / static_cast<long double>(n - p)));
  }
  return out;
}

/// Random frame: alternating treatment, Gaussian covariates, y linear in x.
inline statekit::ExperimentFrame random_frame(std::size_t n, std::size_t dim, std::uint64_t seed,
                                              bool with_z = false, double effect = 0.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  std::vector<double> cov(n * dim), t(n), y(n), z;
  if (with_z) z.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    t[i] = (i % 2 == 0) ? 1.0 : 0.0;
    double lin = 0;
    for (std::size_t j = 0; j < dim; ++j) {
      cov[i * dim + j] = nd(rng);
      lin += cov[i * dim + j] * static_cast<double>(j + 1);
    }
    y[i] = 10.0 + lin + effect * t[i] + nd(rng);
    if (with_z) z[i] = 5.0 + 0.5 * lin + 0.3 * nd(rng) + 2.0 * std::fabs(nd(rng));
  }
  std::optional<std::vector<double>> zopt;
  if (with_z) zopt = std::move(z);
  return statekit::ExperimentFrame::from_columns(dim, std::move(cov), std::move(t), std::move(y),
                                                 std::move(zopt));
}

inline std::vector<double> to_vec(std::span<const double> s) { return {s.begin(), s.end()}; }

}  // namespace testsupport
