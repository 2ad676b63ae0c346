#pragma once

#include <cstddef>
#include <optional>
#include <string>

namespace statekit {

inline constexpr double kDefaultAlpha = 0.05;

struct Interval {
  double low = 0.0;
  double high = 0.0;
  double p_value = 1.0;
};

/// Normal-reference interval estimate +- z_(alpha/2) * se and the two-sided
/// p-value for a zero effect. se == 0 yields a degenerate interval.
Interval z_interval(double estimate, double se, double alpha = kDefaultAlpha);

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  double alpha = kDefaultAlpha;
  bool reject = false;
};

TestResult z_test(double estimate, double se, double alpha = kDefaultAlpha);

/// Values on the transformed-label scale reported alongside ratio estimates.
struct TransformedScale {
  double delta_p = 0.0;
  double delta_p_std_error = 0.0;
  double scale = 1.0;  // plug-in Z_t * Z_c dividing delta_p
};

struct AteReport {
  std::string estimator_tag;
  double estimate = 0.0;
  double std_error = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double p_value = 1.0;
  double alpha = kDefaultAlpha;
  std::size_t n_used = 0;
  std::optional<TransformedScale> transformed;

  bool covers(double truth) const { return ci_low <= truth && truth <= ci_high; }
};

AteReport make_report(std::string tag, double estimate, double std_error, std::size_t n_used,
                      double alpha = kDefaultAlpha);

}  // namespace statekit
