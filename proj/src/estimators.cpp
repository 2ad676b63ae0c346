#include "statekit/estimators.hpp"

#include <algorithm>
#include <cmath>

#include "statekit/numeric/linalg.hpp"
#include "statekit/ratio_transform.hpp"
#include "statekit/simd/kernels.hpp"

namespace statekit {
namespace {

double dim_variance(const Moments& t, const Moments& c) {
  return t.variance / static_cast<double>(t.n) + c.variance / static_cast<double>(c.n);
}

AteReport dim_on(std::string tag, std::span<const double> values,
                 std::span<const double> treatment, double alpha) {
  const Moments t = arm_moments(values, treatment, true);
  const Moments c = arm_moments(values, treatment, false);
  return make_report(std::move(tag), t.mean - c.mean, std::sqrt(dim_variance(t, c)),
                     values.size(), alpha);
}

double pooled_covariance(std::span<const double> a, double mean_a, std::span<const double> b,
                         double mean_b) {
  std::vector<double> prod(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) prod[i] = (a[i] - mean_a) * (b[i] - mean_b);
  return simd::sum(prod) / static_cast<double>(a.size() - 1);
}

// Returns theta for the adjustment, or nullopt when the covariate is constant.
std::optional<double> cuped_theta(std::span<const double> y, std::span<const double> x) {
  const Moments mx = column_moments(x);
  const double scale = std::max(1.0, mx.mean * mx.mean);
  if (!(mx.variance > 1e-24 * scale)) return std::nullopt;
  const Moments my = column_moments(y);
  return pooled_covariance(y, my.mean, x, mx.mean) / mx.variance;
}

AteReport cuped_on(std::string tag, const ExperimentFrame& frame,
                   std::span<const double> covariate, double alpha, bool allow_constant) {
  if (covariate.size() != frame.size()) {
    throw Error(ErrorCode::InvalidConfig, "covariate length does not match frame");
  }
  const auto theta = cuped_theta(frame.y(), covariate);
  if (!theta) {
    if (!allow_constant) {
      throw Error(ErrorCode::ZeroVarianceCovariate, "CUPED covariate has zero variance");
    }
    return dim_on(std::move(tag), frame.y(), frame.treatment(), alpha);
  }
  const double mean_x = column_moments(covariate).mean;
  std::vector<double> adjusted(frame.size());
  for (std::size_t i = 0; i < frame.size(); ++i) {
    adjusted[i] = frame.y()[i] - *theta * (covariate[i] - mean_x);
  }
  return dim_on(std::move(tag), adjusted, frame.treatment(), alpha);
}

void check_proxy(const ExperimentFrame& frame, const ProxyColumn& proxy) {
  if (proxy.yhat.size() != frame.size()) {
    throw Error(ErrorCode::InvalidConfig, "proxy length does not match frame");
  }
}

double median_of(std::vector<double> v) {
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  double m = *mid;
  if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), mid));
  return m;
}

}  // namespace

AteReport dim_count(const ExperimentFrame& frame, double alpha) {
  return dim_on("dim", frame.y(), frame.treatment(), alpha);
}

AteReport dim_ratio(const ExperimentFrame& frame, double alpha) {
  const GroupSplit g = group_means(frame, MetricSpec::ratio());
  if (!(g.treated.z->mean > 0.0) || !(g.control.z->mean > 0.0)) {
    throw Error(ErrorCode::ZeroDenominator, "group denominator sum must be positive");
  }
  const double est = g.treated.y.mean / g.treated.z->mean - g.control.y.mean / g.control.z->mean;
  return make_report("ratio_dim", est, std::sqrt(std::max(0.0, delta_var_ratio(frame))),
                     frame.size(), alpha);
}

AteReport cuped(const ExperimentFrame& frame, std::span<const double> covariate, double alpha) {
  return cuped_on("cuped", frame, covariate, alpha, false);
}

AteReport regression_adjusted(const ExperimentFrame& frame, const ProxyColumn& proxy,
                              AdjustmentFlavor flavor, double alpha) {
  check_proxy(frame, proxy);
  if (flavor == AdjustmentFlavor::Cupac) return cuped_on("cupac", frame, proxy.yhat, alpha, true);

  const std::size_t n = frame.size();
  const Moments mg = column_moments(proxy.yhat);
  const bool informative = mg.variance > 1e-24 * std::max(1.0, mg.mean * mg.mean);
  const Eigen::Index p = informative ? 4 : 2;
  Eigen::MatrixXd design(static_cast<Eigen::Index>(n), p);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const double t = frame.treatment()[i];
    design(r, 0) = 1.0;
    design(r, 1) = t;
    if (informative) {
      const double gc = proxy.yhat[i] - mg.mean;
      design(r, 2) = gc;
      design(r, 3) = t * gc;
    }
  }
  const auto fit = numeric::ols_hc1(design, frame.y());
  return make_report("mlrate", fit.coef(1), std::sqrt(fit.cov(1, 1)), n, alpha);
}

double empirical_quantile(std::span<const double> values, double p) {
  if (values.empty()) throw Error(ErrorCode::DomainError, "quantile of empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::DomainError, "quantile level outside [0, 1]");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const double h = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

ExperimentFrame winsorize(const ExperimentFrame& frame, double percentile, bool two_sided) {
  if (!(percentile > 0.0 && percentile < 1.0)) {
    throw Error(ErrorCode::DomainError, "winsorization percentile must be in (0, 1)");
  }
  auto clip = [&](std::span<const double> col) {
    const double upper = empirical_quantile(col, percentile);
    const double lower = two_sided ? empirical_quantile(col, 1.0 - percentile)
                                   : -std::numeric_limits<double>::infinity();
    std::vector<double> out(col.begin(), col.end());
    for (double& v : out) v = std::clamp(v, std::min(lower, upper), upper);
    return out;
  };
  std::optional<std::vector<double>> z;
  if (frame.has_z()) z = clip(frame.z());
  return frame.with_outcomes(clip(frame.y()), std::move(z));
}

AteReport huber_regression(const ExperimentFrame& frame, const ProxyColumn& proxy,
                           const HuberConfig& config, double alpha) {
  check_proxy(frame, proxy);
  if (!(config.tuning > 0.0) || config.max_iter < 1 || !(config.tol > 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "invalid Huber configuration");
  }
  const std::size_t n = frame.size();
  const auto rows = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd design(rows, 3);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    design(r, 0) = 1.0;
    design(r, 1) = frame.treatment()[i];
    design(r, 2) = proxy.yhat[i];
  }
  const Eigen::Map<const Eigen::VectorXd> y(frame.y().data(), rows);

  Eigen::VectorXd beta = numeric::ols_hc1(design, frame.y()).coef;
  Eigen::VectorXd w = Eigen::VectorXd::Ones(rows);
  Eigen::VectorXd r = y - design * beta;
  double delta = 0.0;
  bool converged = false;
  for (int it = 0; it < config.max_iter; ++it) {
    std::vector<double> abs_dev(n);
    const double med = median_of(std::vector<double>(r.data(), r.data() + n));
    for (std::size_t i = 0; i < n; ++i) abs_dev[i] = std::fabs(r(static_cast<Eigen::Index>(i)) - med);
    double scale = median_of(abs_dev) / 0.6744897501960817;
    if (!(scale > 0.0)) scale = r.cwiseAbs().mean();
    if (!(scale > 0.0)) {
      converged = true;  // exact fit
      delta = std::numeric_limits<double>::infinity();
      break;
    }
    delta = config.tuning * scale;
    Eigen::VectorXd w_new(rows);
    for (Eigen::Index i = 0; i < rows; ++i) {
      const double a = std::fabs(r(i));
      w_new(i) = a <= delta ? 1.0 : delta / a;
    }
    const double change = (w_new - w).cwiseAbs().maxCoeff();
    w = w_new;
    const Eigen::MatrixXd xw = w.asDiagonal() * design;
    beta = numeric::solve_spd(design.transpose() * xw, xw.transpose() * y, 1e-10);
    r = y - design * beta;
    if (change < config.tol && it > 0) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    throw Error(ErrorCode::IrlsNonConvergence,
                "Huber weights still moving after " + std::to_string(config.max_iter) + " iterations");
  }

  // psi(r) = clip(r, -delta, delta); psi'(r) = 1{|r| <= delta}.
  std::vector<double> score(n);
  Eigen::VectorXd slope(rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    score[static_cast<std::size_t>(i)] = std::clamp(r(i), -delta, delta);
    slope(i) = std::fabs(r(i)) <= delta ? 1.0 : 0.0;
  }
  Eigen::MatrixXd bread = design.transpose() * slope.asDiagonal() * design;
  Eigen::MatrixXd cov;
  try {
    cov = numeric::sandwich_hc1(bread, design, score);
  } catch (const Error&) {
    bread = design.transpose() * w.asDiagonal() * design;
    cov = numeric::sandwich_hc1(bread, design, score);
  }
  return make_report("huber", beta(1), std::sqrt(cov(1, 1)), n, alpha);
}

AteReport ratio_cuped_delta(const ExperimentFrame& frame, std::span<const double> covariate,
                            double alpha) {
  if (covariate.size() != frame.size()) {
    throw Error(ErrorCode::InvalidConfig, "covariate length does not match frame");
  }
  const GroupSplit g = group_means(frame, MetricSpec::ratio());
  const double zt = g.treated.z->mean, zc = g.control.z->mean;
  if (!(zt > 0.0) || !(zc > 0.0)) {
    throw Error(ErrorCode::ZeroDenominator, "group denominator sum must be positive");
  }
  const double rt = g.treated.y.mean / zt, rc = g.control.y.mean / zc;
  const auto t = frame.treatment();
  std::vector<double> lin(frame.size());
  for (std::size_t i = 0; i < frame.size(); ++i) {
    const bool treated = t[i] == 1.0;
    lin[i] = (frame.y()[i] - (treated ? rt : rc) * frame.z()[i]) / (treated ? zt : zc);
  }
  const auto theta = cuped_theta(lin, covariate);
  if (!theta) throw Error(ErrorCode::ZeroVarianceCovariate, "CUPED covariate has zero variance");
  std::vector<double> adjusted(frame.size());
  for (std::size_t i = 0; i < frame.size(); ++i) adjusted[i] = lin[i] - *theta * covariate[i];
  const Moments at = arm_moments(adjusted, t, true);
  const Moments ac = arm_moments(adjusted, t, false);
  const Moments xt = arm_moments(covariate, t, true);
  const Moments xc = arm_moments(covariate, t, false);
  const double est = (rt - rc) - *theta * (xt.mean - xc.mean);
  return make_report("ratio_cuped_delta", est, std::sqrt(dim_variance(at, ac)), frame.size(), alpha);
}

}  // namespace statekit
