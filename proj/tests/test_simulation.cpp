#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "statekit/simulation.hpp"
#include "support.hpp"

using namespace statekit;

namespace {

DgpConfig small_dgp() {
  DgpConfig d;
  d.pool_size = 4000;
  d.draw_size = 800;
  return d;
}

MonteCarloConfig small_mc(MetricKind metric, std::vector<std::string> est) {
  MonteCarloConfig c;
  c.metric = metric;
  c.reps = 12;
  c.seed = 5;
  c.estimators = std::move(est);
  c.predictor.trees.n_trees = 20;
  c.keep_estimates = true;
  return c;
}

}  // namespace

TEST_CASE("generator functions at the origin") {
  const double x[5] = {0, 0, 0, 0, 0};
  CHECK(dgp::baseline_y(x) == doctest::Approx(50.0));
  CHECK(dgp::baseline_z(x) == doctest::Approx(30.0));
  CHECK(dgp::effect_y(x) == doctest::Approx(std::numbers::ln2));
  CHECK(dgp::effect_z(x) == doctest::Approx(3.0 * std::numbers::ln2));
}

TEST_CASE("generator functions at a hand-evaluated point") {
  const double x[5] = {0.5, 1.0, -2.0, 0.25, -3.0};
  CHECK(dgp::baseline_y(x) == doctest::Approx(10.0 + 24.0 + 2.5 + 15.0 + 50.0));
  const double sz = 10.0 * std::sin(std::numbers::pi * 0.25) * -3.0 + 15.0 * 1.0 + 2.5 + 30.0;
  CHECK(dgp::baseline_z(x) == doctest::Approx(sz));
  CHECK(dgp::effect_y(x) == doctest::Approx(-1.0 + std::log(1.0 + std::exp(1.0))));
  CHECK(dgp::effect_z(x) == doctest::Approx(1.0 + 3.0 * std::log(1.0 + std::exp(0.25) + 3.0)));
}

TEST_CASE("pool generation is deterministic and seed sensitive") {
  const auto d = small_dgp();
  const auto a = generate_pool(d);
  const auto b = generate_pool(d);
  CHECK(a.y0 == b.y0);
  CHECK(a.covariates == b.covariates);
  auto e = d;
  e.seed = d.seed + 1;
  CHECK(generate_pool(e).y0 != a.y0);
  REQUIRE(a.u.size() == d.d);
  for (double u : a.u) CHECK((u >= 0.0 && u <= 10.0));
  CHECK(a.size() == d.pool_size);
}

TEST_CASE("pool means agree with an independent noise-free evaluation") {
  auto d = small_dgp();
  d.pool_size = 60000;
  const auto pool = generate_pool(d);
  const auto m = dgp_moments(d, pool.u, 400000, 99);
  auto mean = [](const std::vector<double>& v) { return static_cast<double>(testsupport::ref_mean(v)); };
  auto sd = [](const std::vector<double>& v) { return std::sqrt(static_cast<double>(testsupport::ref_var(v))); };
  const double n = static_cast<double>(pool.size());
  CHECK(std::fabs(mean(pool.y0) - m.ey0) < 5.0 * sd(pool.y0) / std::sqrt(n));
  CHECK(std::fabs(mean(pool.z0) - m.ez0) < 5.0 * sd(pool.z0) / std::sqrt(n));
  std::vector<double> ty(pool.size());
  for (std::size_t i = 0; i < ty.size(); ++i) ty[i] = pool.y1[i] - pool.y0[i];
  CHECK(std::fabs(mean(ty) - m.tau_y()) < 5.0 * sd(ty) / std::sqrt(n));
}

TEST_CASE("effect scale zero gives identical potential outcomes") {
  auto d = small_dgp();
  d.effect_scale = 0.0;
  const auto p = generate_pool(d);
  CHECK(p.y0 == p.y1);
  CHECK(p.z0 == p.z1);
}

TEST_CASE("outlier injection: count, support and nesting") {
  const auto clean = generate_pool(small_dgp());
  const auto a = inject_outliers(clean, 0.01, 7);
  const auto b = inject_outliers(clean, 0.05, 7);
  const auto count = [](const Pool& p) { return std::count(p.outlier.begin(), p.outlier.end(), 1); };
  CHECK(count(a) == 40);
  CHECK(count(b) == 200);
  for (std::size_t i = 0; i < clean.size(); ++i) {
    if (a.outlier[i]) {
      CHECK(b.outlier[i]);
      CHECK(a.y0[i] == a.y1[i]);
      CHECK(a.z0[i] == a.z1[i]);
      CHECK(a.y0[i] >= clean.mean_y + 4.0 * clean.sd_y);
      CHECK(a.y0[i] <= clean.mean_y + 20.0 * clean.sd_y);
      CHECK(a.z0[i] >= clean.mean_z + 4.0 * clean.sd_z);
      CHECK(a.z0[i] <= clean.mean_z + 20.0 * clean.sd_z);
    } else {
      CHECK(a.y0[i] == clean.y0[i]);
      CHECK(a.y1[i] == clean.y1[i]);
    }
  }
  CHECK(count(inject_outliers(clean, 0.0, 7)) == 0);
  CHECK_THROWS_AS(inject_outliers(clean, 1.5, 7), Error);
}

TEST_CASE("most correlated covariate") {
  const auto p = generate_pool(small_dgp());
  const std::size_t j = most_correlated_covariate(p);
  auto corr = [&](std::size_t k) {
    std::vector<double> x(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) x[i] = p.covariates[i * p.dim + k];
    const long double mx = testsupport::ref_mean(x), my = testsupport::ref_mean(p.y0);
    long double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      sxy += (x[i] - mx) * (p.y0[i] - my);
      sxx += (x[i] - mx) * (x[i] - mx);
      syy += (p.y0[i] - my) * (p.y0[i] - my);
    }
    return std::fabs(static_cast<double>(sxy / std::sqrt(sxx * syy)));
  };
  for (std::size_t k = 0; k < p.dim; ++k) CHECK(corr(j) >= corr(k));
}

TEST_CASE("small Monte Carlo run is reproducible and thread independent") {
  const auto d = small_dgp();
  auto c = small_mc(MetricKind::Count, {"dim", "cuped", "state"});
  const auto a = simulate(d, c);
  const auto b = simulate(d, c);
  c.threads = 3;
  const auto t = simulate(d, c);
  REQUIRE(a.rows.size() == 3);
  CHECK(a.estimates == b.estimates);
  CHECK(a.estimates == t.estimates);
  CHECK(a.row("dim").var_reduction == doctest::Approx(0.0));
  CHECK(a.row("state").replications == 12);
  CHECK(a.row("state").var_reduction > 0.0);
  for (const auto& r : a.rows) CHECK((r.coverage >= 0.0 && r.coverage <= 1.0));
}

TEST_CASE("aa truth is zero and ab truth is positive") {
  const auto d = small_dgp();
  auto c = small_mc(MetricKind::Count, {"dim"});
  CHECK(simulate(d, c).mean_truth == 0.0);
  c.mode = SimMode::AB;
  CHECK(simulate(d, c).mean_truth > 0.0);
}

TEST_CASE("baseline is computed but not reported when not requested") {
  const auto c = small_mc(MetricKind::Count, {"cuped"});
  const auto s = simulate(small_dgp(), c);
  REQUIRE(s.rows.size() == 1);
  CHECK(s.rows[0].tag == "cuped");
  CHECK(s.estimates.front().size() == 1);
}

TEST_CASE("ratio Monte Carlo runs every ratio estimator") {
  auto c = small_mc(MetricKind::Ratio,
                    {"ratio_dim", "ratio_transformed_dim", "ratio_state", "ratio_cuped_delta"});
  c.mode = SimMode::AB;
  const auto s = simulate(small_dgp(), c);
  CHECK(s.rows.size() == 4);
  for (const auto& r : s.rows) CHECK(r.failures == 0);
}

TEST_CASE("sweep shares the clean pool across fractions") {
  const std::vector<double> fr = {0.0, 0.02};
  auto c = small_mc(MetricKind::Count, {"dim", "state"});
  c.reps = 6;
  const auto s = sweep_outlier_fraction(small_dgp(), fr, c);
  REQUIRE(s.size() == 2);
  CHECK(s[0].outlier_fraction == 0.0);
  CHECK(s[1].outlier_fraction == 0.02);
  CHECK(s[1].row("dim").mean_std_error > 1.5 * s[0].row("dim").mean_std_error);
  // the clean entry matches a standalone run on the same seeds
  const auto alone = simulate(small_dgp(), c);
  CHECK(alone.estimates == s[0].estimates);
}

TEST_CASE("monte carlo configuration validation") {
  MonteCarloConfig c;
  c.estimators = {"dim"};
  c.reps = 0;
  CHECK_THROWS_AS(c.check(), Error);
  c.reps = 10;
  c.estimators = {"nope"};
  CHECK_THROWS_AS(c.check(), Error);
  c.estimators = {"state"};
  c.metric = MetricKind::Ratio;
  CHECK_THROWS_AS(c.check(), Error);
  DgpConfig d;
  d.draw_size = d.pool_size + 1;
  CHECK_THROWS_AS(d.check(), Error);
  d = {};
  d.d = 3;
  CHECK_THROWS_AS(d.check(), Error);
}
