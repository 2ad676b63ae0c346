#pragma once

#include <Eigen/Dense>
#include <span>

namespace statekit::numeric {

struct LinearFit {
  Eigen::VectorXd coef;
  Eigen::VectorXd residuals;
  Eigen::MatrixXd cov;  // HC1 sandwich covariance of coef
};

/// Least squares with HC1 heteroskedasticity-robust covariance.
/// Throws SingularDesign when the design is rank deficient.
LinearFit ols_hc1(const Eigen::MatrixXd& design, std::span<const double> y);

/// HC1 sandwich n/(n-p) * B^-1 M B^-1 with M = sum s_i^2 x_i x_i^T.
/// `bread` must be symmetric positive definite.
Eigen::MatrixXd sandwich_hc1(const Eigen::MatrixXd& bread, const Eigen::MatrixXd& design,
                             std::span<const double> scores);

/// Solves a symmetric positive definite system, throwing SingularDesign when
/// the smallest pivot falls below `rel_tol` times the largest.
Eigen::VectorXd solve_spd(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                          double rel_tol = 1e-12);

}  // namespace statekit::numeric
