#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "statekit/estimators.hpp"
#include "statekit/numeric/special.hpp"
#include "statekit/state_em.hpp"
#include "support.hpp"

using namespace statekit;

namespace {

struct Data {
  std::vector<double> t, g, y;
  EmData view() const { return {t, g, y}; }
};

Data linear_data(std::size_t n, std::uint64_t seed, double dof, double a0 = 1.0, double a1 = 2.0,
                 double a2 = 3.0, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  std::student_t_distribution<double> td(dof > 0 ? dof : 5.0);
  Data d;
  for (std::size_t i = 0; i < n; ++i) {
    d.t.push_back(i % 2 ? 1.0 : 0.0);
    d.g.push_back(nd(rng) * 2.0);
    const double e = dof > 0 ? td(rng) : nd(rng);
    d.y.push_back(a0 + a1 * d.t.back() + a2 * d.g.back() + scale * e);
  }
  return d;
}

TRegressionFit state_at(const std::array<double, 3>& a, double sigma2, double v, std::size_t n) {
  TRegressionFit f;
  f.a = a;
  f.sigma2 = sigma2;
  f.v = v;
  f.xi.assign(n, 0.0);
  f.zeta.assign(n, 0.0);
  f.weights.assign(n, 1.0);
  return f;
}

}  // namespace

TEST_CASE("e-step closed forms") {
  // v = 1, residual 0, sigma2 = 1 -> xi = 1, zeta = 0.5, weight 2
  Data d{{1.0, 0.0}, {0.0, 0.0}, {0.0, 0.0}};
  auto f = state_at({0, 0, 0}, 1.0, 1.0, 2);
  e_step(d.view(), f);
  CHECK(f.xi[0] == doctest::Approx(1.0));
  CHECK(f.zeta[0] == doctest::Approx(0.5));
  CHECK(f.weights[0] == doctest::Approx(2.0));
  // v = 4, r^2 = 2 sigma2 -> zeta = 3, xi = 2.5, weight 5/6
  const double s2 = 1.7;
  Data e{{1.0, 0.0}, {0.0, 0.0}, {std::sqrt(2 * s2), 0.0}};
  auto g = state_at({0, 0, 0}, s2, 4.0, 2);
  e_step(e.view(), g);
  CHECK(g.zeta[0] == doctest::Approx(3.0));
  CHECK(g.xi[0] == doctest::Approx(2.5));
  CHECK(g.weights[0] == doctest::Approx(5.0 / 6.0));
}

TEST_CASE("weights fall with the residual size") {
  Data d;
  for (int i = 0; i < 40; ++i) {
    d.t.push_back(i % 2);
    d.g.push_back(0.0);
    d.y.push_back(0.25 * i);
  }
  auto f = state_at({0, 0, 0}, 1.0, 3.0, d.y.size());
  e_step(d.view(), f);
  for (std::size_t i = 1; i < d.y.size(); ++i) CHECK(f.weights[i] < f.weights[i - 1]);
  d.y.back() = 1e9;
  e_step(d.view(), f);
  CHECK(f.weights.back() < 1e-15);
}

TEST_CASE("coefficient step with unit weights is OLS") {
  const Data d = linear_data(500, 3, 4.0);
  std::vector<std::vector<double>> x;
  for (std::size_t i = 0; i < d.y.size(); ++i) x.push_back({1.0, d.t[i], d.g[i]});
  const auto ref = testsupport::ref_wls(x, d.y, std::vector<double>(d.y.size(), 1.0));
  const auto a = m_step_coeffs(d.view(), std::vector<double>(d.y.size(), 1.0));
  for (int j = 0; j < 3; ++j) CHECK(a[j] == doctest::Approx(static_cast<double>(ref[j])).epsilon(1e-10));
}

TEST_CASE("a near-zero weight deletes the unit") {
  Data d = linear_data(300, 5, 4.0);
  d.y[7] += 50.0;
  std::vector<double> w(d.y.size(), 1.0);
  w[7] = 1e-12;
  std::vector<std::vector<double>> x;
  std::vector<double> y;
  for (std::size_t i = 0; i < d.y.size(); ++i) {
    if (i == 7) continue;
    x.push_back({1.0, d.t[i], d.g[i]});
    y.push_back(d.y[i]);
  }
  const auto ref = testsupport::ref_wls(x, y, std::vector<double>(y.size(), 1.0));
  const auto a = m_step_coeffs(d.view(), w);
  for (int j = 0; j < 3; ++j) CHECK(a[j] == doctest::Approx(static_cast<double>(ref[j])).epsilon(1e-6));
}

TEST_CASE("exact linear data is recovered under any positive weights") {
  Data d = linear_data(200, 9, 4.0);
  for (std::size_t i = 0; i < d.y.size(); ++i) d.y[i] = 1.0 + 2.0 * d.t[i] + 3.0 * d.g[i];
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.01, 5.0);
  std::vector<double> w(d.y.size());
  for (double& x : w) x = u(rng);
  const auto a = m_step_coeffs(d.view(), w);
  CHECK(a[0] == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(a[1] == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(a[2] == doctest::Approx(3.0).epsilon(1e-8));
}

TEST_CASE("coefficient step rejects a constant treatment") {
  Data d = linear_data(50, 2, 4.0);
  std::fill(d.t.begin(), d.t.end(), 1.0);
  CHECK_THROWS_AS(m_step_coeffs(d.view(), std::vector<double>(50, 1.0)), Error);
  try {
    fit_state(d.view());
    FAIL("expected SingularDesign");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SingularDesign);
  }
}

TEST_CASE("scale step") {
  Data d{{1, 0}, {0, 0}, {1.0, -1.0}};
  CHECK(m_step_scale(d.view(), std::vector<double>{2.0, 2.0}, {0, 0, 0}, 0.0) == doctest::Approx(2.0));
  const Data e = linear_data(100, 4, 4.0);
  std::vector<double> r(100);
  long double ms = 0;
  for (std::size_t i = 0; i < 100; ++i) {
    const double ri = e.y[i] - (0.5 + 1.0 * e.t[i] + 2.0 * e.g[i]);
    ms += ri * ri;
  }
  CHECK(m_step_scale(e.view(), std::vector<double>(100, 1.0), {0.5, 1.0, 2.0}, 0.0) ==
        doctest::Approx(static_cast<double>(ms / 100)).epsilon(1e-13));
  try {
    m_step_scale(d.view(), std::vector<double>{1.0, 1.0}, {0.0, 0.0, 0.0}, 5.0);
    FAIL("expected ScaleUnderflow");
  } catch (const Error& err) {
    CHECK(err.code() == ErrorCode::ScaleUnderflow);
  }
}

TEST_CASE("exact fit underflows the scale") {
  Data d = linear_data(100, 6, 4.0);
  for (std::size_t i = 0; i < d.y.size(); ++i) d.y[i] = 1.0 + 2.0 * d.t[i] + 3.0 * d.g[i];
  try {
    fit_state(d.view());
    FAIL("expected ScaleUnderflow");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ScaleUnderflow);
  }
}

TEST_CASE("dof equation: root solves the stationarity condition") {
  for (double vstar : {0.8, 2.0, 3.0, 7.5, 40.0, 900.0}) {
    // constant chosen so vstar is the root
    const double c = -numeric::log_minus_digamma(vstar / 2.0);
    const auto s = solve_dof(c, 0.5, 1e6);
    CHECK_FALSE(s.clamped);
    CHECK(s.v == doctest::Approx(vstar).epsilon(1e-9));
    const double h = std::log(s.v / 2) - numeric::digamma(s.v / 2) + c;
    CHECK(std::fabs(h) < 1e-12);
  }
}

TEST_CASE("dof equation from per-unit expectations with a sign change") {
  // <eta> = 1 and <ln eta> = psi(v*/2) - ln(v*/2) plus a small perturbation
  const double vstar = 6.0;
  const double base = numeric::digamma(vstar / 2) - std::log(vstar / 2);
  std::vector<double> w(101, 1.0), lw(101);
  for (std::size_t i = 0; i < lw.size(); ++i) lw[i] = base + 1e-3 * (static_cast<double>(i) - 50.0) / 50.0;
  const auto s = m_step_dof(w, lw);
  long double total = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    total += std::log(s.v / 2) + 1 + lw[i] - w[i] - numeric::digamma(s.v / 2);
  }
  CHECK(std::fabs(static_cast<double>(total)) / w.size() < 1e-8);
  // the equation changes sign around the root on a grid
  auto eq = [&](double v) { return std::log(v / 2) - numeric::digamma(v / 2) + 1 + base - 1; };
  CHECK(eq(s.v * 0.9) > 0.0);
  CHECK(eq(s.v * 1.1) < 0.0);
}

TEST_CASE("dof clamps at the bounds") {
  auto hi = solve_dof(0.0, 0.5, 1e6);
  CHECK(hi.clamped);
  CHECK(hi.v == 1e6);
  auto lo = solve_dof(-50.0, 0.5, 1e6);
  CHECK(lo.clamped);
  CHECK(lo.v == 0.5);
}

TEST_CASE("single-unit free energy term by term") {
  // r = 0, sigma2 = 1, v = 2, posterior at its optimum: xi = 1.5, zeta = 1.
  Data d{{1.0}, {0.0}, {0.0}};
  auto f = state_at({0, 0, 0}, 1.0, 2.0, 1);
  f.xi = {1.5};
  f.zeta = {1.0};
  // high-precision evaluation of the three expectation terms
  const double expected = -1.03972077083991796412584818219;
  CHECK(free_energy(d.view(), f) == doctest::Approx(expected).epsilon(1e-13));
  // and it equals the Student-t log density at the optimum
  CHECK(free_energy(d.view(), f) == doctest::Approx(t_log_likelihood(d.view(), f)).epsilon(1e-13));
}

TEST_CASE("free energy is a lower bound tight after the E-step") {
  const Data d = linear_data(400, 8, 3.0);
  auto f = state_at({0.8, 2.1, 2.9}, 1.3, 3.5, d.y.size());
  e_step(d.view(), f);
  const double tight = free_energy(d.view(), f);
  CHECK(tight == doctest::Approx(t_log_likelihood(d.view(), f)).epsilon(1e-12));
  // perturb posteriors: bound must not exceed the log-likelihood
  for (double s : {0.99, 1.01}) {
    auto g = f;
    for (auto& z : g.zeta) z *= s;
    CHECK(free_energy(d.view(), g) <= tight + 1e-9 * std::fabs(tight));
    auto h = f;
    for (auto& x : h.xi) x *= s;
    CHECK(free_energy(d.view(), h) <= tight + 1e-9 * std::fabs(tight));
  }
}

TEST_CASE("E-step optimality per unit") {
  const Data d = linear_data(30, 12, 3.0);
  auto f = state_at({1.0, 2.0, 3.0}, 1.0, 3.0, d.y.size());
  e_step(d.view(), f);
  const double base = free_energy(d.view(), f);
  for (std::size_t i = 0; i < d.y.size(); i += 7) {
    for (double s : {0.99, 1.01}) {
      auto g = f;
      g.zeta[i] *= s;
      CHECK(free_energy(d.view(), g) <= base + 1e-12 * std::fabs(base));
      auto h = f;
      h.xi[i] *= s;
      CHECK(free_energy(d.view(), h) <= base + 1e-12 * std::fabs(base));
    }
  }
}

TEST_CASE("free energy doubles when every unit is duplicated") {
  const Data d = linear_data(200, 14, 3.0);
  Data dd = d;
  dd.t.insert(dd.t.end(), d.t.begin(), d.t.end());
  dd.g.insert(dd.g.end(), d.g.begin(), d.g.end());
  dd.y.insert(dd.y.end(), d.y.begin(), d.y.end());
  auto f = state_at({1.0, 2.0, 3.0}, 1.1, 4.0, d.y.size());
  e_step(d.view(), f);
  auto ff = state_at({1.0, 2.0, 3.0}, 1.1, 4.0, dd.y.size());
  e_step(dd.view(), ff);
  CHECK(free_energy(dd.view(), ff) == doctest::Approx(2.0 * free_energy(d.view(), f)).epsilon(1e-12));
}

TEST_CASE("free energy trace never decreases") {
  for (auto mode : {DofUpdate::Profile, DofUpdate::Variational})
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    Data d = linear_data(3000, seed, 2.5);
    for (std::size_t i = 0; i < 30; ++i) d.y[i * 97] += 200.0;
    EmConfig cfg;
    cfg.dof_update = mode;
    const auto fit = fit_state(d.view(), cfg);
    CHECK(fit.iterations >= 2);
    for (std::size_t k = 1; k < fit.free_energy_trace.size(); ++k) {
      const double prev = fit.free_energy_trace[k - 1];
      CHECK(fit.free_energy_trace[k] >= prev - 1e-8 * std::fabs(prev));
    }
    CHECK(fit.sigma2 > 0.0);
    CHECK(fit.v > 0.0);
    for (double w : fit.weights) CHECK(w > 0.0);
    for (double x : fit.xi) CHECK(x == doctest::Approx(fit.v / 2 + 0.5));
  }
}

TEST_CASE("both dof updates reach the same fixed point") {
  const Data d = linear_data(5000, 70, 4.0);
  EmConfig a, b;
  a.tol = b.tol = 1e-13;
  a.max_iter = b.max_iter = 5000;
  b.dof_update = DofUpdate::Variational;
  const auto fa = fit_state(d.view(), a);
  const auto fb = fit_state(d.view(), b);
  CHECK(fa.v == doctest::Approx(fb.v).epsilon(1e-4));
  CHECK(fa.a[1] == doctest::Approx(fb.a[1]).epsilon(1e-6));
  CHECK(fa.iterations < fb.iterations);
}

TEST_CASE("profile dof maximizes the likelihood in v") {
  const Data d = linear_data(4000, 71, 5.0);
  auto fit = fit_state(d.view());
  const auto r = [&] {
    std::vector<double> out;
    for (std::size_t i = 0; i < d.y.size(); ++i)
      out.push_back(d.y[i] - fit.a[0] - fit.a[1] * d.t[i] - fit.a[2] * d.g[i]);
    return out;
  }();
  const auto s = profile_dof(r, fit.sigma2, 50.0, 0.5, 1e6);
  CHECK_FALSE(s.clamped);
  auto ll = [&](double v) {
    auto f = fit;
    f.v = v;
    return t_log_likelihood(d.view(), f);
  };
  CHECK(ll(s.v) >= ll(s.v * 1.01));
  CHECK(ll(s.v) >= ll(s.v * 0.99));
  CHECK(profile_dof(r, fit.sigma2, 0.6, 0.5, 1e6).v == doctest::Approx(s.v).epsilon(1e-8));
}

TEST_CASE("degrees of freedom are recovered from t(3) errors") {
  const Data d = linear_data(50000, 77, 3.0, 1.0, 2.0, 3.0, 2.0);
  const auto fit = fit_state(d.view());
  CHECK(fit.converged);
  CHECK(fit.v > 2.5);
  CHECK(fit.v < 3.6);
  const auto se = state_std_errors(fit, d.view());
  CHECK(std::fabs(fit.a[1] - 2.0) < 3.0 * se[1]);
  CHECK(std::fabs(fit.a[2] - 3.0) < 3.0 * se[2]);
}

TEST_CASE("Gaussian errors push the degrees of freedom to the clamp") {
  // residuals at exact normal quantiles: an empirical distribution with no excess kurtosis
  Data d = linear_data(20000, 78, -1.0);
  std::vector<double> e(d.y.size());
  for (std::size_t i = 0; i < e.size(); ++i) {
    e[i] = numeric::normal_quantile((static_cast<double>(i) + 0.5) / static_cast<double>(e.size()));
  }
  std::mt19937_64 rng(4);
  std::shuffle(e.begin(), e.end(), rng);
  for (std::size_t i = 0; i < e.size(); ++i) d.y[i] = 1.0 + 2.0 * d.t[i] + 3.0 * d.g[i] + e[i];
  EmConfig cfg;
  const auto fit = fit_state(d.view(), cfg);
  CHECK(fit.dof_clamped);
  CHECK(fit.v == cfg.v_max);
}

TEST_CASE("random Gaussian errors give large degrees of freedom") {
  for (std::uint64_t seed : {81, 82, 83}) {
    const auto fit = fit_state(linear_data(20000, seed, -1.0).view());
    CHECK(fit.v > 20.0);
  }
}

TEST_CASE("frozen large dof reproduces OLS") {
  const Data d = linear_data(5000, 79, -1.0);
  EmConfig cfg;
  cfg.freeze_v = true;
  cfg.v_init = 1e6;
  const auto fit = fit_state(d.view(), cfg);
  std::vector<std::vector<double>> x;
  for (std::size_t i = 0; i < d.y.size(); ++i) x.push_back({1.0, d.t[i], d.g[i]});
  const auto ref = testsupport::ref_wls(x, d.y, std::vector<double>(d.y.size(), 1.0));
  for (int j = 0; j < 3; ++j) {
    CHECK(fit.a[j] == doctest::Approx(static_cast<double>(ref[j])).epsilon(1e-6));
  }
}

TEST_CASE("standard error with unit weights equals the OLS sandwich") {
  const Data d = linear_data(800, 80, -1.0);
  std::vector<std::vector<double>> x;
  for (std::size_t i = 0; i < d.y.size(); ++i) x.push_back({1.0, d.t[i], d.g[i]});
  const auto ref = testsupport::ref_ols_hc1(x, d.y);
  TRegressionFit f = state_at({static_cast<double>(ref.coef[0]), static_cast<double>(ref.coef[1]),
                               static_cast<double>(ref.coef[2])},
                              1.0, 1e20, d.y.size());
  const auto se = state_std_errors(f, d.view());
  for (int j = 0; j < 3; ++j) {
    CHECK(se[j] == doctest::Approx(static_cast<double>(ref.se[j])).epsilon(1e-10));
  }
}

TEST_CASE("state estimate is antisymmetric under label swap") {
  auto f = testsupport::random_frame(2000, 1, 90, false, 1.0);
  ProxyColumn p;
  p.yhat = f.covariate_column(0);
  const auto a = state_estimate(f, p);
  std::vector<double> flipped(f.treatment().begin(), f.treatment().end());
  for (double& t : flipped) t = 1.0 - t;
  const auto b = state_estimate(f.with_treatment(flipped), p);
  CHECK(b.estimate == doctest::Approx(-a.estimate).epsilon(1e-6));
}

TEST_CASE("em configuration validation") {
  EmConfig c;
  c.max_iter = 0;
  CHECK_THROWS_AS(c.check(), Error);
  c = {};
  c.v_min = 10;
  c.v_max = 5;
  CHECK_THROWS_AS(c.check(), Error);
  c = {};
  c.tol = 0;
  CHECK_THROWS_AS(c.check(), Error);
}
