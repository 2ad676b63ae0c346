#include "statekit/inference.hpp"

#include <cmath>
#include <limits>

#include "statekit/error.hpp"
#include "statekit/numeric/special.hpp"

namespace statekit {

namespace {

double z_statistic(double estimate, double se) {
  if (se > 0.0) return estimate / se;
  if (estimate == 0.0) return 0.0;
  return estimate > 0.0 ? std::numeric_limits<double>::infinity()
                        : -std::numeric_limits<double>::infinity();
}

void check_args(double se, double alpha) {
  if (!(se >= 0.0)) throw Error(ErrorCode::DomainError, "standard error must be >= 0");
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::DomainError, "alpha must be in (0, 1)");
}

}  // namespace

Interval z_interval(double estimate, double se, double alpha) {
  check_args(se, alpha);
  const double half = numeric::normal_quantile(1.0 - alpha / 2.0) * se;
  return {estimate - half, estimate + half, numeric::two_sided_p(z_statistic(estimate, se))};
}

TestResult z_test(double estimate, double se, double alpha) {
  check_args(se, alpha);
  const double z = z_statistic(estimate, se);
  const double p = numeric::two_sided_p(z);
  return {z, p, alpha, p < alpha};
}

AteReport make_report(std::string tag, double estimate, double std_error, std::size_t n_used,
                      double alpha) {
  if (!std::isfinite(estimate) || !std::isfinite(std_error)) {
    throw Error(ErrorCode::NonFiniteValue, tag + ": non-finite estimate or standard error");
  }
  const Interval ci = z_interval(estimate, std_error, alpha);
  AteReport r;
  r.estimator_tag = std::move(tag);
  r.estimate = estimate;
  r.std_error = std_error;
  r.ci_low = ci.low;
  r.ci_high = ci.high;
  r.p_value = ci.p_value;
  r.alpha = alpha;
  r.n_used = n_used;
  return r;
}

}  // namespace statekit
