#pragma once

#include <span>

#include "statekit/data_model.hpp"
#include "statekit/inference.hpp"
#include "statekit/predictors.hpp"

namespace statekit {

/// Difference in group means with variance s_t^2/N_t + s_c^2/N_c.
AteReport dim_count(const ExperimentFrame& frame, double alpha = kDefaultAlpha);

/// Difference of group ratios sum(Y)/sum(Z) with delta-method variance.
AteReport dim_ratio(const ExperimentFrame& frame, double alpha = kDefaultAlpha);

/// CUPED: DIM on Y - theta (X - mean X), theta = cov(Y, X) / var(X) pooled
/// over both groups. `covariate` must be a pre-treatment column.
AteReport cuped(const ExperimentFrame& frame, std::span<const double> covariate,
                double alpha = kDefaultAlpha);

enum class AdjustmentFlavor { Cupac, Mlrate };

/// Regression adjustment with a cross-fitted proxy.
///   Cupac:  CUPED with the proxy as covariate.
///   Mlrate: OLS of Y on {1, T, g_c, T g_c} (g_c the centered proxy), HC1
///           standard error on the T coefficient.
/// A constant proxy reduces both to the difference in means.
AteReport regression_adjusted(const ExperimentFrame& frame, const ProxyColumn& proxy,
                              AdjustmentFlavor flavor, double alpha = kDefaultAlpha);

/// Linear-interpolation (type 7) empirical quantile.
double empirical_quantile(std::span<const double> values, double p);

/// Clips Y (and Z when present) at the pooled empirical `percentile`.
/// Upper tail only unless `two_sided`, which also clips below 1 - percentile.
ExperimentFrame winsorize(const ExperimentFrame& frame, double percentile,
                          bool two_sided = false);

struct HuberConfig {
  double tuning = 1.345;  // threshold in units of the MAD scale
  int max_iter = 500;
  double tol = 1e-9;      // max absolute weight change at convergence
};

/// Huber M-regression of Y on {1, T, proxy} by IRLS with MAD scale
/// re-estimated every iteration; M-estimator sandwich (HC1) standard error.
AteReport huber_regression(const ExperimentFrame& frame, const ProxyColumn& proxy,
                           const HuberConfig& config = {}, double alpha = kDefaultAlpha);

/// CUPED for ratio metrics on delta-method linearized units:
/// l_i = (Y_i - R_g Z_i) / mean(Z)_g, adjusted by a pre-treatment covariate.
AteReport ratio_cuped_delta(const ExperimentFrame& frame, std::span<const double> covariate,
                            double alpha = kDefaultAlpha);

}  // namespace statekit
