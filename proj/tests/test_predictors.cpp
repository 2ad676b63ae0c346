#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "statekit/predictors.hpp"
#include "support.hpp"

using namespace statekit;

namespace {

struct Table {
  std::vector<double> x;
  std::vector<double> y;
  std::size_t dim = 0;
};

Table nonlinear(std::size_t n, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::normal_distribution<double> nd;
  Table t;
  t.dim = dim;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      const double v = u(rng);
      t.x.push_back(v);
      s += (j == 0 ? 3.0 * std::sin(v) : 0.5 * v * v);
    }
    t.y.push_back(s + 0.3 * nd(rng));
  }
  return t;
}

PredictorConfig small_trees() {
  PredictorConfig c;
  c.trees.n_trees = 40;
  c.trees.min_samples_leaf = 5;
  return c;
}

double mse(const std::vector<double>& a, const std::vector<double>& b) {
  long double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return static_cast<double>(s / a.size());
}

}  // namespace

TEST_CASE("folds are balanced and deterministic") {
  for (std::size_t n : {10, 11, 99, 1000}) {
    for (std::uint32_t k : {2u, 3u, 5u}) {
      const auto f = assign_folds(n, k, 17);
      std::size_t lo = n, hi = 0, total = 0;
      for (std::uint32_t j = 0; j < k; ++j) {
        lo = std::min(lo, f.fold_size(j));
        hi = std::max(hi, f.fold_size(j));
        total += f.fold_size(j);
      }
      CHECK(total == n);
      CHECK(hi - lo <= 1);
      CHECK(assign_folds(n, k, 17).fold_of_unit == f.fold_of_unit);
    }
  }
  CHECK(assign_folds(1000, 5, 1).fold_of_unit != assign_folds(1000, 5, 2).fold_of_unit);
}

TEST_CASE("invalid fold counts are rejected") {
  CHECK_THROWS_AS(assign_folds(10, 1, 0), Error);
  CHECK_THROWS_AS(assign_folds(3, 5, 0), Error);
}

TEST_CASE("a unit's prediction never depends on its own outcome") {
  for (auto family : {PredictorFamily::BoostedTrees, PredictorFamily::BasisRidge}) {
    Table t = nonlinear(400, 2, 5);
    auto cfg = small_trees();
    cfg.family = family;
    const auto folds = assign_folds(400, 5, 1);
    const auto base = cross_fit(t.x, t.dim, t.y, cfg, folds);
    for (std::size_t i : {0u, 57u, 399u}) {
      auto y = t.y;
      y[i] += 1e4;
      const auto pert = cross_fit(t.x, t.dim, y, cfg, folds);
      CHECK(pert.yhat[i] == base.yhat[i]);
    }
  }
}

TEST_CASE("untrainable rows are ignored during training") {
  Table t = nonlinear(300, 2, 6);
  const auto folds = assign_folds(300, 3, 2);
  std::vector<std::uint8_t> mask(300, 1);
  for (std::size_t i = 0; i < 300; i += 2) mask[i] = 0;
  const auto cfg = small_trees();
  const auto a = cross_fit(t.x, t.dim, t.y, cfg, folds, mask);
  auto y = t.y;
  for (std::size_t i = 0; i < 300; i += 2) y[i] = -1e6;
  const auto b = cross_fit(t.x, t.dim, y, cfg, folds, mask);
  CHECK(a.yhat == b.yhat);
}

TEST_CASE("ridge recovers an exact linear target") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> nd;
  Table t;
  t.dim = 3;
  for (int i = 0; i < 500; ++i) {
    double s = 1.5;
    for (int j = 0; j < 3; ++j) {
      t.x.push_back(nd(rng));
      s += (j + 1) * t.x.back();
    }
    t.y.push_back(s);
  }
  PredictorConfig cfg;
  cfg.family = PredictorFamily::BasisRidge;
  cfg.ridge.lambda = 1e-10;
  const auto p = cross_fit(t.x, t.dim, t.y, cfg, assign_folds(500, 5, 3));
  for (std::size_t i = 0; i < t.y.size(); ++i) CHECK(p.yhat[i] == doctest::Approx(t.y[i]).epsilon(1e-6));
}

TEST_CASE("boosted trees beat the mean on a nonlinear target") {
  Table t = nonlinear(2000, 3, 8);
  const auto p = cross_fit(t.x, t.dim, t.y, small_trees(), assign_folds(2000, 5, 4));
  const double m = static_cast<double>(testsupport::ref_mean(t.y));
  const std::vector<double> flat(t.y.size(), m);
  CHECK(mse(p.yhat, t.y) < 0.3 * mse(flat, t.y));
}

TEST_CASE("cross fitting is deterministic and thread-count independent") {
  Table t = nonlinear(600, 2, 10);
  auto cfg = small_trees();
  const auto folds = assign_folds(600, 5, 7);
  const auto a = cross_fit(t.x, t.dim, t.y, cfg, folds);
  const auto b = cross_fit(t.x, t.dim, t.y, cfg, folds);
  cfg.threads = 4;
  const auto c = cross_fit(t.x, t.dim, t.y, cfg, folds);
  CHECK(a.yhat == b.yhat);
  CHECK(a.yhat == c.yhat);
}

TEST_CASE("proxy for a frame only trains on control units when asked") {
  const auto f = testsupport::random_frame(400, 2, 12, false, 100.0);
  PredictorConfig cfg = small_trees();
  cfg.pool = TrainingPool::ControlOnly;
  const auto a = fit_proxy(f, cfg);
  std::vector<double> y = testsupport::to_vec(f.y());
  for (std::size_t i = 0; i < y.size(); ++i)
    if (f.treatment()[i] == 1.0) y[i] += 1e3;
  const auto b = fit_proxy(f.with_outcomes(y, std::nullopt), cfg);
  CHECK(a.yhat == b.yhat);
  CHECK(a.model_tag == model_tag(cfg));
}

TEST_CASE("predictor configuration validation") {
  PredictorConfig c;
  c.k = 1;
  CHECK_THROWS_AS(c.check(), Error);
  c = {};
  c.trees.learning_rate = 0.0;
  CHECK_THROWS_AS(c.check(), Error);
  c = {};
  c.trees.subsample = 1.5;
  CHECK_THROWS_AS(c.check(), Error);
  c = {};
  c.family = PredictorFamily::BasisRidge;
  c.ridge.lambda = -1.0;
  CHECK_THROWS_AS(c.check(), Error);
}

TEST_CASE("model tags distinguish families") {
  PredictorConfig a, b;
  b.family = PredictorFamily::BasisRidge;
  CHECK(model_tag(a) != model_tag(b));
}
