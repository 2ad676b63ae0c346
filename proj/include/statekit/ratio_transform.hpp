#pragma once

#include <vector>

#include "statekit/data_model.hpp"
#include "statekit/inference.hpp"
#include "statekit/predictors.hpp"
#include "statekit/state_em.hpp"

namespace statekit {

/// Linear label P_i = kappa1 Y_i - kappa2 Z_i with kappa1, kappa2 the control
/// means of Z and Y. The treated-minus-control difference of P equals
/// mean(Z_t) mean(Z_c) times the difference of group ratios.
struct RatioTransform {
  double kappa1 = 1.0;
  double kappa2 = 0.0;
  std::vector<double> p;
  double scale = 1.0;  // plug-in mean(Z_t) * mean(Z_c)
};

/// Throws InvalidConfig without a denominator column, ZeroDenominator when
/// either group's mean denominator is not positive.
RatioTransform build_transform(const ExperimentFrame& frame);

/// Difference in means of P; inference on the P scale, estimate and interval
/// reported divided by `scale`.
AteReport dim_on_p(const ExperimentFrame& frame, const RatioTransform& transform,
                   double alpha = kDefaultAlpha);

/// STATE fit with target P and a proxy trained on P.
AteReport state_on_ratio(const ExperimentFrame& frame, const RatioTransform& transform,
                         const ProxyColumn& proxy_p, const EmConfig& config = {},
                         double alpha = kDefaultAlpha);

/// Rescales a P-scale estimate and standard error into a ratio-scale report.
AteReport ratio_scale_report(std::string tag, double delta_p, double delta_p_se, double scale,
                             std::size_t n, double alpha = kDefaultAlpha);

/// Plug-in delta-method variance of the group ratio difference.
double delta_var_ratio(const ExperimentFrame& frame);

}  // namespace statekit
