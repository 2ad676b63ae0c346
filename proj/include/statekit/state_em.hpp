#pragma once

#include <array>
#include <span>
#include <vector>

#include "statekit/data_model.hpp"
#include "statekit/inference.hpp"
#include "statekit/predictors.hpp"

namespace statekit {

/// Columns of the regression Y = a0 + a1 T + a2 g + e with Student-t errors.
struct EmData {
  std::span<const double> treatment;
  std::span<const double> proxy;
  std::span<const double> target;

  static EmData of(const ExperimentFrame& frame, const ProxyColumn& proxy);
  std::size_t size() const noexcept { return target.size(); }
  /// Throws InvalidConfig on length mismatch, SingularDesign when T is constant.
  void check() const;
};

/// How v is refreshed each iteration. Variational solves the stationarity
/// equation under the current Gamma posteriors; Profile maximizes the
/// Student-t likelihood in v at the new (a, sigma2), which is the same
/// equation with the posteriors re-derived at the candidate v. Both share
/// fixed points; Profile does not stall when v runs off to infinity.
enum class DofUpdate { Profile, Variational };

struct EmConfig {
  int max_iter = 500;
  double tol = 1e-8;           // relative free-energy change
  double v_init = 4.0;
  double v_min = 0.5;
  double v_max = 1e6;
  bool freeze_v = false;       // keep v at v_init (Gaussian-limit checks)
  DofUpdate dof_update = DofUpdate::Profile;
  double sigma2_floor = 1e-12; // relative to var(Y)

  void check() const;
};

struct TRegressionFit {
  std::array<double, 3> a{};  // intercept, treatment effect, proxy loading
  double sigma2 = 1.0;
  double v = 4.0;
  std::vector<double> weights;  // posterior means <eta_i>
  std::vector<double> xi;
  std::vector<double> zeta;
  std::vector<double> free_energy_trace;
  int iterations = 0;
  bool converged = false;
  bool dof_clamped = false;
};

/// Variational free energy of the current (a, sigma2, v) and Gamma posteriors
/// (xi, zeta). Throws NonFiniteEnergy on a non-finite result.
double free_energy(const EmData& data, const TRegressionFit& fit);

/// Sum of Student-t log densities of the residuals; the free energy equals it
/// right after an exact E-step.
double t_log_likelihood(const EmData& data, const TRegressionFit& fit);

/// Gamma posterior update: xi = v/2 + 1/2, zeta_i = v/2 + r_i^2 / (2 sigma2),
/// weights = xi / zeta.
void e_step(const EmData& data, TRegressionFit& fit);

/// Joint weighted least-squares solve for (a0, a1, a2).
std::array<double, 3> m_step_coeffs(const EmData& data, std::span<const double> weights);

/// sigma2 = sum w r^2 / N; throws ScaleUnderflow at or below `floor`.
double m_step_scale(const EmData& data, std::span<const double> weights,
                    const std::array<double, 3>& a, double floor);

struct DofSolution {
  double v = 0.0;
  bool clamped = false;
};

/// Root in [v_min, v_max] of ln(v/2) - psi(v/2) + 1 + mean(<ln eta> - <eta>).
/// Returns the violated bound with `clamped` set when no interior root exists.
DofSolution m_step_dof(std::span<const double> weights, std::span<const double> log_weights,
                       double v_min = 0.5, double v_max = 1e6);

/// Same with the constant 1 + mean(<ln eta> - <eta>) already reduced.
DofSolution solve_dof(double c, double v_min, double v_max);

/// Maximizer of the Student-t log-likelihood over v for fixed residuals and
/// scale, searched uphill from `v_start`; clamps at the bounds.
DofSolution profile_dof(std::span<const double> residuals, double sigma2, double v_start,
                        double v_min, double v_max);

TRegressionFit fit_state(const EmData& data, const EmConfig& config = {});
TRegressionFit fit_state(const ExperimentFrame& frame, const ProxyColumn& proxy,
                         const EmConfig& config = {});

/// HC1 M-estimator sandwich for the coefficients at the fitted (a, sigma2, v).
/// Bread uses the derivative of the t score; falls back to the
/// weights-as-fixed bread when that is not positive definite.
std::array<double, 3> state_std_errors(const TRegressionFit& fit, const EmData& data);
double state_std_error(const TRegressionFit& fit, const EmData& data);

AteReport state_estimate(const ExperimentFrame& frame, const ProxyColumn& proxy,
                         const EmConfig& config = {}, double alpha = kDefaultAlpha);

}  // namespace statekit
