#include "statekit/ratio_transform.hpp"

#include <cmath>

namespace statekit {
namespace {

GroupSplit ratio_groups(const ExperimentFrame& frame) {
  if (!frame.has_z()) throw Error(ErrorCode::InvalidConfig, "ratio metric needs a denominator");
  GroupSplit g = group_means(frame, MetricSpec::ratio());
  if (!(g.control.z->mean > 0.0) || !(g.treated.z->mean > 0.0)) {
    throw Error(ErrorCode::ZeroDenominator, "group denominator mean must be positive");
  }
  return g;
}

double group_delta_var(const GroupStats& g) {
  const double zbar = g.z->mean;
  const double ratio = g.y.mean / zbar;
  const double v = g.y.variance - 2.0 * ratio * g.cov_yz + ratio * ratio * g.z->variance;
  return v / (static_cast<double>(g.y.n) * zbar * zbar);
}

}  // namespace

RatioTransform build_transform(const ExperimentFrame& frame) {
  const GroupSplit g = ratio_groups(frame);
  RatioTransform tr;
  tr.kappa1 = g.control.z->mean;
  tr.kappa2 = g.control.y.mean;
  tr.scale = g.treated.z->mean * g.control.z->mean;
  tr.p.resize(frame.size());
  const auto y = frame.y();
  const auto z = frame.z();
  for (std::size_t i = 0; i < frame.size(); ++i) tr.p[i] = tr.kappa1 * y[i] - tr.kappa2 * z[i];
  return tr;
}

AteReport ratio_scale_report(std::string tag, double delta_p, double delta_p_se, double scale,
                             std::size_t n, double alpha) {
  if (!(scale > 0.0)) throw Error(ErrorCode::ZeroDenominator, "ratio scale must be positive");
  AteReport rep = make_report(std::move(tag), delta_p / scale, delta_p_se / scale, n, alpha);
  rep.transformed = TransformedScale{delta_p, delta_p_se, scale};
  return rep;
}

AteReport dim_on_p(const ExperimentFrame& frame, const RatioTransform& transform, double alpha) {
  if (transform.p.size() != frame.size()) {
    throw Error(ErrorCode::InvalidConfig, "transform was built on a different frame");
  }
  const Moments t = arm_moments(transform.p, frame.treatment(), true);
  const Moments c = arm_moments(transform.p, frame.treatment(), false);
  const double se = std::sqrt(t.variance / static_cast<double>(t.n) +
                              c.variance / static_cast<double>(c.n));
  return ratio_scale_report("ratio_transformed_dim", t.mean - c.mean, se, transform.scale,
                            frame.size(), alpha);
}

AteReport state_on_ratio(const ExperimentFrame& frame, const RatioTransform& transform,
                         const ProxyColumn& proxy_p, const EmConfig& config, double alpha) {
  if (transform.p.size() != frame.size() || proxy_p.yhat.size() != frame.size()) {
    throw Error(ErrorCode::InvalidConfig, "transform or proxy length does not match frame");
  }
  const EmData data{frame.treatment(), proxy_p.yhat, transform.p};
  const auto fit = fit_state(data, config);
  return ratio_scale_report("ratio_state", fit.a[1], state_std_error(fit, data), transform.scale,
                            frame.size(), alpha);
}

double delta_var_ratio(const ExperimentFrame& frame) {
  const GroupSplit g = ratio_groups(frame);
  return group_delta_var(g.treated) + group_delta_var(g.control);
}

}  // namespace statekit
