#include "statekit/state_em.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "statekit/numeric/linalg.hpp"
#include "statekit/numeric/special.hpp"
#include "statekit/simd/kernels.hpp"

namespace statekit {
namespace {

using numeric::digamma;

std::vector<double> residuals_of(const EmData& d, const std::array<double, 3>& a) {
  std::vector<double> r(d.size());
  simd::kernels().residuals(d.treatment.data(), d.proxy.data(), d.target.data(), d.size(), a[0],
                            a[1], a[2], r.data());
  return r;
}

// Free energy for equal xi across units from the three unit sums.
double energy_from_sums(double n, double xi, double v, double sigma2, double sum_log_zeta,
                        double sum_w, double sum_w_r2) {
  const double hv = 0.5 * v;
  const double psi_xi = digamma(xi);
  const double sum_ln_eta = n * psi_xi - sum_log_zeta;
  const double gauss = 0.5 * sum_ln_eta - 0.5 * n * std::log(2.0 * std::numbers::pi * sigma2) -
                       sum_w_r2 / (2.0 * sigma2);
  const double prior = n * (hv * std::log(hv) - std::lgamma(hv)) + (hv - 1.0) * sum_ln_eta -
                       hv * sum_w;
  const double entropy = n * (xi + std::lgamma(xi) + (1.0 - xi) * psi_xi) - sum_log_zeta;
  return gauss + prior + entropy;
}

double checked_energy(double f) {
  if (!std::isfinite(f)) throw Error(ErrorCode::NonFiniteEnergy, "free energy is not finite");
  return f;
}

double variance_of(std::span<const double> y) {
  return column_moments(y).variance;
}

}  // namespace

EmData EmData::of(const ExperimentFrame& frame, const ProxyColumn& proxy) {
  return {frame.treatment(), proxy.yhat, frame.y()};
}

void EmData::check() const {
  if (treatment.size() != target.size() || proxy.size() != target.size()) {
    throw Error(ErrorCode::InvalidConfig, "treatment, proxy and target lengths differ");
  }
  if (target.size() < 4) throw Error(ErrorCode::TooFewUnits, "need at least 4 units");
  const bool mixed = std::any_of(treatment.begin(), treatment.end(),
                                 [&](double t) { return t != treatment[0]; });
  if (!mixed) throw Error(ErrorCode::SingularDesign, "all units share one treatment value");
}

void EmConfig::check() const {
  if (max_iter < 1) throw Error(ErrorCode::InvalidConfig, "em max_iter must be >= 1");
  if (!(tol > 0.0)) throw Error(ErrorCode::InvalidConfig, "em tol must be positive");
  if (!(v_min > 0.0) || !(v_min < v_max)) {
    throw Error(ErrorCode::InvalidConfig, "em dof bounds must satisfy 0 < v_min < v_max");
  }
  if (!(v_init > 0.0)) throw Error(ErrorCode::InvalidConfig, "em v_init must be positive");
  if (!(sigma2_floor >= 0.0)) throw Error(ErrorCode::InvalidConfig, "em sigma2 floor negative");
}

double free_energy(const EmData& data, const TRegressionFit& fit) {
  const std::size_t n = data.size();
  if (fit.xi.size() != n || fit.zeta.size() != n) {
    throw Error(ErrorCode::InvalidConfig, "fit posteriors do not match data length");
  }
  if (!(fit.sigma2 > 0.0) || !(fit.v > 0.0)) {
    throw Error(ErrorCode::NonFiniteEnergy, "sigma2 and v must be positive");
  }
  const auto r = residuals_of(data, fit.a);
  const bool shared_xi = std::all_of(fit.xi.begin(), fit.xi.end(),
                                     [&](double x) { return x == fit.xi[0]; });
  if (shared_xi) {
    std::vector<double> w(n), log_zeta(n);
    for (std::size_t i = 0; i < n; ++i) {
      w[i] = fit.xi[0] / fit.zeta[i];
      log_zeta[i] = std::log(fit.zeta[i]);
    }
    const auto& k = simd::kernels();
    return checked_energy(energy_from_sums(static_cast<double>(n), fit.xi[0], fit.v, fit.sigma2,
                                           k.sum(log_zeta.data(), n), k.sum(w.data(), n),
                                           k.weighted_sq_sum(r.data(), w.data(), n)));
  }
  double total = 0.0;
  const double hv = 0.5 * fit.v;
  const double log_2pi_s2 = std::log(2.0 * std::numbers::pi * fit.sigma2);
  const double prior_const = hv * std::log(hv) - std::lgamma(hv);
  for (std::size_t i = 0; i < n; ++i) {
    const double xi = fit.xi[i], zeta = fit.zeta[i];
    const double psi = digamma(xi);
    const double eta = xi / zeta;
    const double ln_eta = psi - std::log(zeta);
    total += 0.5 * ln_eta - 0.5 * log_2pi_s2 - eta * r[i] * r[i] / (2.0 * fit.sigma2);
    total += prior_const + (hv - 1.0) * ln_eta - hv * eta;
    total += xi - std::log(zeta) + std::lgamma(xi) + (1.0 - xi) * psi;
  }
  return checked_energy(total);
}

double t_log_likelihood(const EmData& data, const TRegressionFit& fit) {
  const auto r = residuals_of(data, fit.a);
  const double v = fit.v;
  const double c = std::lgamma(0.5 * (v + 1.0)) - std::lgamma(0.5 * v) -
                   0.5 * std::log(v * std::numbers::pi * fit.sigma2);
  double total = 0.0;
  for (double ri : r) total += c - 0.5 * (v + 1.0) * std::log1p(ri * ri / (v * fit.sigma2));
  return total;
}

void e_step(const EmData& data, TRegressionFit& fit) {
  const std::size_t n = data.size();
  const auto r = residuals_of(data, fit.a);
  const double xi = 0.5 * fit.v + 0.5;
  fit.xi.assign(n, xi);
  fit.zeta.resize(n);
  fit.weights.resize(n);
  simd::kernels().e_step(r.data(), n, 0.5 * fit.v, 1.0 / (2.0 * fit.sigma2), xi, fit.zeta.data(),
                         fit.weights.data());
}

std::array<double, 3> m_step_coeffs(const EmData& data, std::span<const double> weights) {
  if (weights.size() != data.size()) {
    throw Error(ErrorCode::InvalidConfig, "weights length does not match data");
  }
  const auto g = simd::kernels().weighted_gram(data.treatment.data(), data.proxy.data(),
                                               data.target.data(), weights.data(), data.size());
  Eigen::Matrix3d a;
  a << g.sw, g.swt, g.swg, g.swt, g.swtt, g.swtg, g.swg, g.swtg, g.swgg;
  const Eigen::Vector3d b(g.swy, g.swty, g.swgy);
  const Eigen::VectorXd x = numeric::solve_spd(a, b, 1e-13);
  return {x(0), x(1), x(2)};
}

double m_step_scale(const EmData& data, std::span<const double> weights,
                    const std::array<double, 3>& a, double floor) {
  const auto r = residuals_of(data, a);
  const double s2 = simd::kernels().weighted_sq_sum(r.data(), weights.data(), data.size()) /
                    static_cast<double>(data.size());
  if (!(s2 > floor)) {
    throw Error(ErrorCode::ScaleUnderflow, "residual scale collapsed to the floor (exact fit)");
  }
  return s2;
}

DofSolution solve_dof(double c, double v_min, double v_max) {
  if (!std::isfinite(c)) throw Error(ErrorCode::RootNotBracketed, "non-finite dof equation");
  // f(x) = ln x - psi(x) + c, x = v/2, is strictly decreasing.
  auto f = [c](double x) { return numeric::log_minus_digamma(x) + c; };
  double lo = 0.5 * v_min, hi = 0.5 * v_max;
  if (f(lo) <= 0.0) return {v_min, true};
  if (f(hi) >= 0.0) return {v_max, true};
  double x = std::sqrt(lo * hi);
  for (int it = 0; it < 300; ++it) {
    const double fx = f(x);
    if (fx == 0.0) break;
    (fx > 0.0 ? lo : hi) = x;
    if (hi - lo <= 1e-15 * hi) break;
    const double slope = 1.0 / x - numeric::trigamma(x);
    double next = slope < 0.0 ? x - fx / slope : 0.0;
    if (!(next > lo && next < hi)) next = std::sqrt(lo * hi);
    if (std::fabs(next - x) <= 1e-15 * x) {
      x = next;
      break;
    }
    x = next;
  }
  return {2.0 * x, false};
}

namespace {

// d/dv of the mean t log-density, times 2.
double profile_slope(std::span<const double> u, double v) {
  double acc = 0.0;
  for (double ui : u) acc += (v + 1.0) * ui / (v * (v + ui)) - std::log1p(ui / v);
  return numeric::digamma(0.5 * (v + 1.0)) - numeric::digamma(0.5 * v) - 1.0 / v +
         acc / static_cast<double>(u.size());
}

}  // namespace

DofSolution profile_dof(std::span<const double> residuals, double sigma2, double v_start,
                        double v_min, double v_max) {
  if (residuals.empty() || !(sigma2 > 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "profile dof needs residuals and a positive scale");
  }
  std::vector<double> u(residuals.size());
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = residuals[i] * residuals[i] / sigma2;
  auto g = [&](double log_v) { return profile_slope(u, std::exp(log_v)); };

  const double lmin = std::log(v_min), lmax = std::log(v_max);
  double a = std::log(std::clamp(v_start, v_min, v_max));
  double ga = g(a);
  if (!std::isfinite(ga)) throw Error(ErrorCode::RootNotBracketed, "non-finite dof slope");
  if (ga == 0.0) return {std::exp(a), false};
  // walk uphill until the slope changes sign
  const double dir = ga > 0.0 ? 1.0 : -1.0;
  double step = std::log(2.0);
  double b = a, gb = ga;
  while (true) {
    const double next = std::clamp(b + dir * step, lmin, lmax);
    const double gn = g(next);
    if ((gn > 0.0) != (dir > 0.0) || gn == 0.0) {
      a = b;
      ga = gb;
      b = next;
      gb = gn;
      break;
    }
    if (next == lmax) return {v_max, true};
    if (next == lmin) return {v_min, true};
    b = next;
    gb = gn;
    step *= 2.0;
  }
  // Illinois regula falsi on log v
  int side = 0;
  for (int it = 0; it < 200 && std::fabs(b - a) > 1e-12; ++it) {
    const double c = (a * gb - b * ga) / (gb - ga);
    const double gc = g(c);
    if (gc == 0.0) return {std::exp(c), false};
    if ((gc > 0.0) == (gb > 0.0)) {
      b = c;
      gb = gc;
      if (side == -1) ga *= 0.5;
      side = -1;
    } else {
      a = c;
      ga = gc;
      if (side == 1) gb *= 0.5;
      side = 1;
    }
  }
  return {std::exp(0.5 * (a + b)), false};
}

DofSolution m_step_dof(std::span<const double> weights, std::span<const double> log_weights,
                       double v_min, double v_max) {
  if (weights.size() != log_weights.size() || weights.empty()) {
    throw Error(ErrorCode::InvalidConfig, "dof update needs equal-length non-empty inputs");
  }
  std::vector<double> d(weights.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = log_weights[i] - weights[i];
  return solve_dof(1.0 + simd::sum(d) / static_cast<double>(d.size()), v_min, v_max);
}

TRegressionFit fit_state(const EmData& data, const EmConfig& config) {
  config.check();
  data.check();
  const std::size_t n = data.size();
  const double nd = static_cast<double>(n);
  const double floor = config.sigma2_floor * variance_of(data.target);
  const auto& k = simd::kernels();

  TRegressionFit fit;
  fit.v = config.v_init;
  fit.weights.assign(n, 1.0);
  fit.a = m_step_coeffs(data, fit.weights);
  fit.sigma2 = m_step_scale(data, fit.weights, fit.a, floor);

  std::vector<double> r(n);
  double previous = 0.0;
  for (int it = 1; it <= config.max_iter; ++it) {
    // E-step
    k.residuals(data.treatment.data(), data.proxy.data(), data.target.data(), n, fit.a[0],
                fit.a[1], fit.a[2], r.data());
    const double xi = 0.5 * fit.v + 0.5;
    fit.zeta.resize(n);
    const auto sums = k.e_step(r.data(), n, 0.5 * fit.v, 1.0 / (2.0 * fit.sigma2), xi,
                               fit.zeta.data(), fit.weights.data());
    // tight bound at the current parameters, i.e. the t log-likelihood
    const double f = checked_energy(energy_from_sums(nd, xi, fit.v, fit.sigma2,
                                                     sums.sum_log_zeta, sums.sum_w,
                                                     sums.sum_w_r2));

    // M-steps
    fit.a = m_step_coeffs(data, fit.weights);
    k.residuals(data.treatment.data(), data.proxy.data(), data.target.data(), n, fit.a[0],
                fit.a[1], fit.a[2], r.data());
    const double sum_w_r2 = k.weighted_sq_sum(r.data(), fit.weights.data(), n);
    fit.sigma2 = sum_w_r2 / nd;
    if (!(fit.sigma2 > floor)) {
      throw Error(ErrorCode::ScaleUnderflow, "residual scale collapsed to the floor (exact fit)");
    }
    if (!config.freeze_v) {
      DofSolution dof;
      if (config.dof_update == DofUpdate::Variational) {
        const double c = 1.0 + numeric::digamma(xi) - (sums.sum_log_zeta + sums.sum_w) / nd;
        dof = solve_dof(c, config.v_min, config.v_max);
      } else {
        dof = profile_dof(r, fit.sigma2, fit.v, config.v_min, config.v_max);
      }
      fit.v = dof.v;
      fit.dof_clamped = dof.clamped;
    }

    fit.free_energy_trace.push_back(f);
    fit.iterations = it;
    if (it > 1 && std::fabs(f - previous) < config.tol * std::fabs(f)) {
      fit.converged = true;
      break;
    }
    previous = f;
  }
  // leave the posteriors consistent with the returned parameters
  e_step(data, fit);
  return fit;
}

TRegressionFit fit_state(const ExperimentFrame& frame, const ProxyColumn& proxy,
                         const EmConfig& config) {
  return fit_state(EmData::of(frame, proxy), config);
}

std::array<double, 3> state_std_errors(const TRegressionFit& fit, const EmData& data) {
  const std::size_t n = data.size();
  const auto rows = static_cast<Eigen::Index>(n);
  const auto r = residuals_of(data, fit.a);
  Eigen::MatrixXd design(rows, 3);
  Eigen::VectorXd slope(rows), w(rows);
  std::vector<double> score(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    design(row, 0) = 1.0;
    design(row, 1) = data.treatment[i];
    design(row, 2) = data.proxy[i];
    const double u = r[i] * r[i] / fit.sigma2;
    const double wi = (fit.v + 1.0) / (fit.v + u);
    w(row) = wi;
    slope(row) = wi * (fit.v - u) / (fit.v + u);
    score[i] = wi * r[i];
  }
  Eigen::MatrixXd cov;
  try {
    cov = numeric::sandwich_hc1(design.transpose() * slope.asDiagonal() * design, design, score);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::SingularDesign) throw;
    cov = numeric::sandwich_hc1(design.transpose() * w.asDiagonal() * design, design, score);
  }
  return {std::sqrt(cov(0, 0)), std::sqrt(cov(1, 1)), std::sqrt(cov(2, 2))};
}

double state_std_error(const TRegressionFit& fit, const EmData& data) {
  return state_std_errors(fit, data)[1];
}

AteReport state_estimate(const ExperimentFrame& frame, const ProxyColumn& proxy,
                         const EmConfig& config, double alpha) {
  const EmData data = EmData::of(frame, proxy);
  const auto fit = fit_state(data, config);
  return make_report("state", fit.a[1], state_std_error(fit, data), frame.size(), alpha);
}

}  // namespace statekit
