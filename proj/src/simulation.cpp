#include "statekit/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "statekit/parallel.hpp"
#include "statekit/random.hpp"
#include "statekit/simd/kernels.hpp"

namespace statekit {

namespace dgp {

double baseline_y(const double* x) {
  return 10.0 * std::sin(std::numbers::pi * x[0] * x[1]) + 6.0 * x[2] * x[2] +
         10.0 * std::fabs(x[3]) + 5.0 * std::fabs(x[4]) + 50.0;
}

double baseline_z(const double* x) {
  const double s = x[1] + x[2];
  return 10.0 * std::sin(std::numbers::pi * x[3]) * x[4] + 15.0 * s * s + 5.0 * std::fabs(x[0]) +
         30.0;
}

double effect_y(const double* x) { return x[0] * x[2] + std::log1p(std::exp(x[1])); }

double effect_z(const double* x) {
  return x[1] * x[1] + 3.0 * std::log(1.0 + std::exp(x[3]) + std::fabs(x[4]));
}

}  // namespace dgp

namespace {

constexpr std::uint64_t kDgpUnits = 0x756e697473ULL;
constexpr std::uint64_t kOracle = 0x6f7261636cULL;

std::vector<double> draw_u(std::uint64_t seed, std::size_t d) {
  Rng rng = make_rng(seed, {stream::kPool});
  std::uniform_real_distribution<double> unif(0.0, 10.0);
  std::vector<double> u(d);
  for (double& v : u) v = unif(rng);
  return u;
}

void mean_sd(const std::vector<double>& v, double& mean, double& sd) {
  const Moments m = column_moments(v);
  mean = m.mean;
  sd = std::sqrt(m.variance);
}

std::vector<double> gather(const std::vector<double>& src, std::span<const std::size_t> idx) {
  std::vector<double> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = src[idx[i]];
  return out;
}

ProxyColumn gather_proxy(const ProxyColumn& src, std::span<const std::size_t> idx) {
  ProxyColumn out;
  out.yhat = gather(src.yhat, idx);
  out.model_tag = src.model_tag;
  return out;
}

double mean_of(std::span<const double> v) {
  return column_moments(v).mean;
}

}  // namespace

void DgpConfig::check() const {
  if (d < 5) throw Error(ErrorCode::InvalidConfig, "dgp needs d >= 5");
  if (!(noise_sd_y >= 0.0) || !(noise_sd_z >= 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "noise sd must be non-negative");
  }
  if (!(outlier_fraction >= 0.0 && outlier_fraction <= 0.05)) {
    throw Error(ErrorCode::InvalidConfig, "outlier fraction must lie in [0, 0.05]");
  }
  if (draw_size < 8 || draw_size > pool_size) {
    throw Error(ErrorCode::InvalidConfig, "need 8 <= draw_size <= pool_size");
  }
  if (!(treatment_prob > 0.0 && treatment_prob < 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "treatment probability must lie in (0, 1)");
  }
  if (!std::isfinite(effect_scale)) throw Error(ErrorCode::InvalidConfig, "effect scale not finite");
}

namespace {

Pool pool_from(const DgpConfig& config, Rng rng) {
  config.check();
  Pool pool;
  pool.dim = config.d;
  pool.u = draw_u(config.seed, config.d);
  const std::size_t n = config.pool_size, d = config.d;
  pool.covariates.resize(n * d);
  pool.y0.resize(n);
  pool.y1.resize(n);
  pool.z0.resize(n);
  pool.z1.resize(n);
  pool.outlier.assign(n, 0);

  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    double* x = &pool.covariates[i * d];
    for (std::size_t j = 0; j < d; ++j) x[j] = pool.u[j] + normal(rng);
    const double eps = config.noise_sd_y * normal(rng);
    const double eta = config.noise_sd_z * normal(rng);
    pool.y0[i] = dgp::baseline_y(x) + eps;
    pool.z0[i] = dgp::baseline_z(x) + eta;
    pool.y1[i] = pool.y0[i] + config.effect_scale * dgp::effect_y(x);
    pool.z1[i] = pool.z0[i] + config.effect_scale * dgp::effect_z(x);
  }
  mean_sd(pool.y0, pool.mean_y, pool.sd_y);
  mean_sd(pool.z0, pool.mean_z, pool.sd_z);
  return pool;
}

}  // namespace

Pool generate_pool(const DgpConfig& config) {
  return pool_from(config, make_rng(config.seed, {stream::kPool, kDgpUnits}));
}

Pool generate_pool(const DgpConfig& config, std::uint64_t unit_stream) {
  return pool_from(config, make_rng(config.seed, {stream::kPool, kDgpUnits, unit_stream + 1}));
}

Pool inject_outliers(const Pool& clean, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 0.05)) {
    throw Error(ErrorCode::InvalidConfig, "outlier fraction must lie in [0, 0.05]");
  }
  Pool out = clean;
  out.outlier_fraction = fraction;
  const std::size_t n = clean.size();
  const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  if (k == 0) return out;

  Rng order_rng = make_rng(seed, {stream::kOutliers, 0});
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), order_rng);

  Rng value_rng = make_rng(seed, {stream::kOutliers, 1});
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (std::size_t j = 0; j < k; ++j) {
    const std::size_t i = order[j];
    const double y = clean.mean_y + clean.sd_y * (4.0 + 16.0 * unif(value_rng));
    const double z = clean.mean_z + clean.sd_z * (4.0 + 16.0 * unif(value_rng));
    out.y0[i] = out.y1[i] = y;
    out.z0[i] = out.z1[i] = z;
    out.outlier[i] = 1;
  }
  return out;
}

std::size_t most_correlated_covariate(const Pool& pool) {
  const std::size_t n = pool.size(), d = pool.dim;
  std::size_t best = 0;
  double best_corr = -1.0;
  const Moments my = column_moments(pool.y0);
  for (std::size_t j = 0; j < d; ++j) {
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = pool.covariates[i * d + j];
    const Moments mx = column_moments(x);
    std::vector<double> prod(n);
    for (std::size_t i = 0; i < n; ++i) prod[i] = (x[i] - mx.mean) * (pool.y0[i] - my.mean);
    const double corr = std::fabs(simd::sum(prod) / static_cast<double>(n - 1)) /
                        std::sqrt(mx.variance * my.variance);
    if (corr > best_corr) {
      best_corr = corr;
      best = j;
    }
  }
  return best;
}

DgpMoments dgp_moments(const DgpConfig& config, const std::vector<double>& u, std::size_t n,
                       std::uint64_t seed) {
  if (u.size() < 5 || n == 0) throw Error(ErrorCode::InvalidConfig, "bad oracle request");
  Rng rng = make_rng(seed, {kOracle});
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> x(u.size());
  std::vector<double> by(n), ty(n), bz(n), tz(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < u.size(); ++j) x[j] = u[j] + normal(rng);
    by[i] = dgp::baseline_y(x.data());
    bz[i] = dgp::baseline_z(x.data());
    ty[i] = config.effect_scale * dgp::effect_y(x.data());
    tz[i] = config.effect_scale * dgp::effect_z(x.data());
  }
  DgpMoments m;
  m.ey0 = mean_of(by);
  m.ez0 = mean_of(bz);
  m.ey1 = m.ey0 + mean_of(ty);
  m.ez1 = m.ez0 + mean_of(tz);
  return m;
}

void MonteCarloConfig::check() const {
  if (reps < 2) throw Error(ErrorCode::InvalidConfig, "need at least 2 replications");
  check_estimators(estimators, metric);
  predictor.check();
  options.em.check();
  if (!(max_failure_rate >= 0.0 && max_failure_rate < 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "failure rate threshold must lie in [0, 1)");
  }
}

const EstimatorSummary& SimulationSummary::row(std::string_view tag) const {
  for (const auto& r : rows) {
    if (r.tag == tag) return r;
  }
  throw Error(ErrorCode::InvalidConfig, "no summary row for '" + std::string(tag) + "'");
}

PreparedPool prepare_pool(Pool pool, std::size_t cuped_covariate, const MonteCarloConfig& config) {
  PreparedPool prep;
  prep.cuped_covariate = cuped_covariate;
  if (config.proxy_mode == ProxyMode::Pool) {
    bool want_y = false, want_p = false;
    for (const auto& tag : config.estimators) {
      const auto needs = needs_of(tag);
      want_y = want_y || needs.proxy_y;
      want_p = want_p || needs.proxy_p;
    }
    const FoldAssignment folds = assign_folds(pool.size(), config.predictor.k, config.predictor.seed);
    if (want_y) {
      prep.proxy_y = cross_fit(pool.covariates, pool.dim, pool.y0, config.predictor, folds);
    }
    if (want_p) {
      const double k1 = mean_of(pool.z0), k2 = mean_of(pool.y0);
      std::vector<double> p(pool.size());
      for (std::size_t i = 0; i < p.size(); ++i) p[i] = k1 * pool.y0[i] - k2 * pool.z0[i];
      prep.proxy_p = cross_fit(pool.covariates, pool.dim, p, config.predictor, folds);
    }
  }
  prep.pool = std::move(pool);
  return prep;
}

SimulationSummary run_monte_carlo(const PreparedPool& prepared, const DgpConfig& dgp,
                                  const MonteCarloConfig& config) {
  config.check();
  const Pool& pool = prepared.pool;
  const std::size_t n = dgp.draw_size, d = pool.dim;
  if (n > pool.size()) throw Error(ErrorCode::InvalidConfig, "draw larger than pool");

  std::vector<std::string> tags = config.estimators;
  const std::string baseline(baseline_for(config.metric));
  if (std::find(tags.begin(), tags.end(), baseline) == tags.end()) tags.insert(tags.begin(), baseline);
  const std::size_t m = tags.size();
  const bool ratio = config.metric == MetricKind::Ratio;
  const double nan = std::numeric_limits<double>::quiet_NaN();

  std::vector<std::vector<double>> est(config.reps, std::vector<double>(m, nan));
  std::vector<std::vector<double>> se(config.reps, std::vector<double>(m, nan));
  std::vector<std::vector<std::uint8_t>> covers(config.reps, std::vector<std::uint8_t>(m, 0));
  std::vector<double> truth(config.reps, 0.0);

  parallel_for(config.reps, config.threads, [&](std::size_t rep) {
    Rng rng = make_rng(config.seed, {stream::kReplication, rep});
    std::vector<std::size_t> perm(pool.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    for (std::size_t i = 0; i < n; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, perm.size() - 1);
      std::swap(perm[i], perm[pick(rng)]);
    }
    const std::span<const std::size_t> idx(perm.data(), n);

    std::bernoulli_distribution coin(dgp.treatment_prob);
    std::vector<double> t(n);
    std::size_t treated = 0;
    do {
      treated = 0;
      for (double& ti : t) treated += (ti = coin(rng) ? 1.0 : 0.0) == 1.0;
    } while (treated < 2 || n - treated < 2);

    std::vector<double> cov(n * d), y(n), z;
    if (ratio) z.resize(n);
    double sy0 = 0, sy1 = 0, sz0 = 0, sz1 = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t u = idx[i];
      std::copy_n(&pool.covariates[u * d], d, &cov[i * d]);
      const bool on = config.mode == SimMode::AB && t[i] == 1.0;
      y[i] = on ? pool.y1[u] : pool.y0[u];
      if (ratio) z[i] = on ? pool.z1[u] : pool.z0[u];
      sy0 += pool.y0[u];
      sy1 += pool.y1[u];
      sz0 += pool.z0[u];
      sz1 += pool.z1[u];
    }
    if (config.mode == SimMode::AB) {
      truth[rep] = ratio ? sy1 / sz1 - sy0 / sz0 : (sy1 - sy0) / static_cast<double>(n);
    }
    std::optional<std::vector<double>> zcol;
    if (ratio) zcol = std::move(z);
    const ExperimentFrame frame =
        ExperimentFrame::from_columns(d, std::move(cov), std::move(t), std::move(y), std::move(zcol));

    ProxyColumn proxy_y, proxy_p;
    std::optional<RatioTransform> transform;
    if (ratio) transform = build_transform(frame);
    if (config.proxy_mode == ProxyMode::Pool) {
      if (!prepared.proxy_y.yhat.empty()) proxy_y = gather_proxy(prepared.proxy_y, idx);
      if (!prepared.proxy_p.yhat.empty()) proxy_p = gather_proxy(prepared.proxy_p, idx);
    } else {
      PredictorConfig pc = config.predictor;
      pc.seed = config.predictor.seed ^ (0x9e3779b97f4a7c15ULL * (rep + 1));
      pc.threads = 1;
      for (const auto& tag : tags) {
        const auto needs = needs_of(tag);
        if (needs.proxy_y && proxy_y.yhat.empty()) proxy_y = fit_proxy(frame, pc);
        if (needs.proxy_p && proxy_p.yhat.empty()) proxy_p = proxy_for_p(frame, transform->p, pc);
      }
    }
    const std::vector<double> covariate = frame.covariate_column(prepared.cuped_covariate);

    EstimatorInputs in;
    in.frame = &frame;
    in.proxy_y = proxy_y.yhat.empty() ? nullptr : &proxy_y;
    in.proxy_p = proxy_p.yhat.empty() ? nullptr : &proxy_p;
    in.transform = transform ? &*transform : nullptr;
    in.covariate = covariate;
    in.options = &config.options;
    for (std::size_t j = 0; j < m; ++j) {
      try {
        const AteReport r = run_estimator(tags[j], in);
        est[rep][j] = r.estimate;
        se[rep][j] = r.std_error;
        covers[rep][j] = r.covers(truth[rep]);
      } catch (const Error&) {
        // recorded as NaN; counted below
      }
    }
  });

  SimulationSummary s;
  s.metric = config.metric;
  s.mode = config.mode;
  s.outlier_fraction = pool.outlier_fraction;
  s.reps = config.reps;
  s.mean_truth = mean_of(truth);
  for (std::size_t j = 0; j < m; ++j) {
    EstimatorSummary row;
    row.tag = tags[j];
    std::vector<double> e, sev;
    std::size_t covered = 0;
    for (std::size_t rep = 0; rep < config.reps; ++rep) {
      if (std::isnan(est[rep][j])) {
        ++row.failures;
        continue;
      }
      e.push_back(est[rep][j]);
      sev.push_back(se[rep][j]);
      covered += covers[rep][j];
    }
    if (static_cast<double>(row.failures) > config.max_failure_rate * static_cast<double>(config.reps)) {
      throw Error(ErrorCode::TooManyFailures,
                  tags[j] + " failed in " + std::to_string(row.failures) + " of " +
                      std::to_string(config.reps) + " replications");
    }
    row.replications = e.size();
    const Moments me = column_moments(e);
    row.mean_estimate = me.mean;
    row.variance = me.variance;
    row.mean_std_error = mean_of(sev);
    row.coverage = static_cast<double>(covered) / static_cast<double>(e.size());
    s.rows.push_back(std::move(row));
  }
  const double base_var = s.rows.front().variance;
  for (auto& row : s.rows) row.var_reduction = base_var > 0.0 ? 1.0 - row.variance / base_var : 0.0;

  // Drop the baseline row again if it was not requested.
  const bool requested = std::find(config.estimators.begin(), config.estimators.end(), baseline) !=
                         config.estimators.end();
  std::size_t first = requested ? 0 : 1;
  if (!requested) s.rows.erase(s.rows.begin());
  if (config.keep_estimates) {
    s.estimates.resize(config.reps);
    for (std::size_t rep = 0; rep < config.reps; ++rep) {
      s.estimates[rep].assign(est[rep].begin() + static_cast<std::ptrdiff_t>(first), est[rep].end());
    }
  }
  return s;
}

SimulationSummary simulate(const DgpConfig& dgp, const MonteCarloConfig& config) {
  config.check();
  Pool clean = generate_pool(dgp);
  const std::size_t cov = most_correlated_covariate(clean);
  Pool pool = inject_outliers(clean, dgp.outlier_fraction, dgp.seed);
  const PreparedPool prep = prepare_pool(std::move(pool), cov, config);
  return run_monte_carlo(prep, dgp, config);
}

std::vector<SimulationSummary> sweep_outlier_fraction(const DgpConfig& dgp,
                                                      std::span<const double> fractions,
                                                      const MonteCarloConfig& config) {
  config.check();
  if (fractions.empty()) throw Error(ErrorCode::InvalidConfig, "no outlier fractions given");
  for (double f : fractions) {
    if (!(f >= 0.0 && f <= 0.05)) {
      throw Error(ErrorCode::InvalidConfig, "outlier fractions must lie in [0, 0.05]");
    }
  }
  const Pool clean = generate_pool(dgp);
  const std::size_t cov = most_correlated_covariate(clean);
  std::vector<SimulationSummary> out;
  for (double f : fractions) {
    PreparedPool prep = prepare_pool(inject_outliers(clean, f, dgp.seed), cov, config);
    out.push_back(run_monte_carlo(prep, dgp, config));
  }
  return out;
}

}  // namespace statekit
