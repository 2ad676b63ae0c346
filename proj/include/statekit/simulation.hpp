#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "statekit/data_model.hpp"
#include "statekit/predictors.hpp"
#include "statekit/registry.hpp"

namespace statekit {

/// Synthetic data generator: X ~ N(u, I) with u ~ U(0, 10) per coordinate,
/// nonlinear baselines b, c and heterogeneous effects tau_y, tau_z.
struct DgpConfig {
  std::size_t d = 5;
  double noise_sd_y = 25.0;
  double noise_sd_z = 10.0;
  double outlier_fraction = 0.0;
  std::size_t pool_size = 200000;
  std::size_t draw_size = 20000;
  double treatment_prob = 0.5;
  std::uint64_t seed = 268;
  double effect_scale = 1.0;  // multiplies tau_y and tau_z

  void check() const;
};

namespace dgp {
/// x points at d >= 5 covariates; only the first five enter.
double baseline_y(const double* x);
double baseline_z(const double* x);
double effect_y(const double* x);
double effect_z(const double* x);
}  // namespace dgp

/// Pre-generated units with both potential outcomes.
struct Pool {
  std::size_t dim = 0;
  std::vector<double> covariates;  // row-major
  std::vector<double> y0, y1, z0, z1;
  std::vector<double> u;
  std::vector<std::uint8_t> outlier;
  double outlier_fraction = 0.0;
  // Moments of the clean control outcomes, used for outlier support.
  double mean_y = 0.0, sd_y = 0.0, mean_z = 0.0, sd_z = 0.0;

  std::size_t size() const noexcept { return y0.size(); }
};

Pool generate_pool(const DgpConfig& config);
/// Same covariate means u (from config.seed) but an independent set of units
/// for each `unit_stream`.
Pool generate_pool(const DgpConfig& config, std::uint64_t unit_stream);

/// Replaces Y and Z (both potential outcomes) of round(fraction * N) units
/// with draws from U(mean + 4 sd, mean + 20 sd). Units are taken as a prefix
/// of a fixed permutation, so larger fractions contaminate supersets.
Pool inject_outliers(const Pool& clean, double fraction, std::uint64_t seed);

/// Index of the covariate most correlated (in absolute value) with y0.
std::size_t most_correlated_covariate(const Pool& pool);

/// Population means of the potential outcomes from `n` noise-free units.
struct DgpMoments {
  double ey0 = 0, ey1 = 0, ez0 = 0, ez1 = 0;
  double tau_y() const { return ey1 - ey0; }
  double tau_r() const { return ey1 / ez1 - ey0 / ez0; }
};
DgpMoments dgp_moments(const DgpConfig& config, const std::vector<double>& u, std::size_t n,
                       std::uint64_t seed);

enum class SimMode { AA, AB };
enum class ProxyMode { Pool, PerReplication };

struct MonteCarloConfig {
  MetricKind metric = MetricKind::Count;
  SimMode mode = SimMode::AA;
  std::size_t reps = 1000;
  std::uint64_t seed = 1;
  std::vector<std::string> estimators;
  PredictorConfig predictor;
  ProxyMode proxy_mode = ProxyMode::Pool;
  EstimatorOptions options;
  unsigned threads = 1;
  bool keep_estimates = false;
  double max_failure_rate = 0.01;

  void check() const;
};

struct EstimatorSummary {
  std::string tag;
  double coverage = 0.0;       // fraction of reps whose CI covers the truth
  double variance = 0.0;       // across-replication variance of estimates
  double var_reduction = 0.0;  // 1 - variance / baseline variance
  double mean_estimate = 0.0;
  double mean_std_error = 0.0;
  std::size_t replications = 0;
  std::size_t failures = 0;
};

struct SimulationSummary {
  MetricKind metric = MetricKind::Count;
  SimMode mode = SimMode::AA;
  double outlier_fraction = 0.0;
  std::size_t reps = 0;
  double mean_truth = 0.0;
  std::vector<EstimatorSummary> rows;
  // estimates[rep][j] for rows[j], NaN for failed replications.
  std::vector<std::vector<double>> estimates;

  const EstimatorSummary& row(std::string_view tag) const;
};

/// Pool-level inputs shared by every replication.
struct PreparedPool {
  Pool pool;
  std::size_t cuped_covariate = 0;
  ProxyColumn proxy_y;  // cross-fitted on y0 across the pool (Pool mode)
  ProxyColumn proxy_p;  // cross-fitted on pool-level P labels (Pool mode, ratio)
};

PreparedPool prepare_pool(Pool pool, std::size_t cuped_covariate, const MonteCarloConfig& config);

SimulationSummary run_monte_carlo(const PreparedPool& prepared, const DgpConfig& dgp,
                                  const MonteCarloConfig& config);

/// Convenience: generate, contaminate, prepare and run.
SimulationSummary simulate(const DgpConfig& dgp, const MonteCarloConfig& config);

/// One summary per fraction over a common clean pool and common replication
/// seeds; the proxy is refit on each contaminated pool.
std::vector<SimulationSummary> sweep_outlier_fraction(const DgpConfig& dgp,
                                                      std::span<const double> fractions,
                                                      const MonteCarloConfig& config);

}  // namespace statekit
