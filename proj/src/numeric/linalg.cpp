#include "statekit/numeric/linalg.hpp"

#include "statekit/error.hpp"

namespace statekit::numeric {

namespace {

Eigen::LDLT<Eigen::MatrixXd> checked_ldlt(const Eigen::MatrixXd& a, double rel_tol) {
  // Scale to unit diagonal so the pivot test is independent of column units.
  Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
  const Eigen::VectorXd d = ldlt.vectorD();
  const double dmax = d.cwiseAbs().maxCoeff();
  if (ldlt.info() != Eigen::Success || !(dmax > 0.0) || d.minCoeff() <= rel_tol * dmax) {
    throw Error(ErrorCode::SingularDesign, "normal equations are singular");
  }
  return ldlt;
}

}  // namespace

Eigen::VectorXd solve_spd(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, double rel_tol) {
  const Eigen::VectorXd diag = a.diagonal();
  if ((diag.array() <= 0.0).any()) {
    throw Error(ErrorCode::SingularDesign, "zero column in normal equations");
  }
  const Eigen::VectorXd s = diag.cwiseSqrt().cwiseInverse();
  const Eigen::MatrixXd scaled = s.asDiagonal() * a * s.asDiagonal();
  const auto ldlt = checked_ldlt(scaled, rel_tol);
  return s.asDiagonal() * ldlt.solve(s.asDiagonal() * b);
}

Eigen::MatrixXd sandwich_hc1(const Eigen::MatrixXd& bread, const Eigen::MatrixXd& design,
                             std::span<const double> scores) {
  const Eigen::Index n = design.rows();
  const Eigen::Index p = design.cols();
  if (n <= p) throw Error(ErrorCode::SingularDesign, "too few rows for sandwich covariance");
  const Eigen::Map<const Eigen::VectorXd> s(scores.data(), n);
  const Eigen::MatrixXd sx = s.asDiagonal() * design;
  const Eigen::MatrixXd meat = sx.transpose() * sx;
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(p, p);
  Eigen::MatrixXd inv(p, p);
  for (Eigen::Index j = 0; j < p; ++j) inv.col(j) = solve_spd(bread, eye.col(j));
  return (static_cast<double>(n) / static_cast<double>(n - p)) * inv * meat * inv;
}

LinearFit ols_hc1(const Eigen::MatrixXd& design, std::span<const double> y) {
  const Eigen::Index n = design.rows();
  if (static_cast<Eigen::Index>(y.size()) != n) {
    throw Error(ErrorCode::InvalidConfig, "design and response lengths differ");
  }
  const Eigen::Map<const Eigen::VectorXd> yv(y.data(), n);
  const Eigen::MatrixXd xtx = design.transpose() * design;
  LinearFit fit;
  fit.coef = solve_spd(xtx, design.transpose() * yv, 1e-10);
  fit.residuals = yv - design * fit.coef;
  fit.cov = sandwich_hc1(xtx, design,
                         std::span<const double>(fit.residuals.data(), fit.residuals.size()));
  return fit;
}

}  // namespace statekit::numeric
