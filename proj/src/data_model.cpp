#include "statekit/data_model.hpp"

#include <cmath>
#include <sstream>

#include "statekit/simd/kernels.hpp"

namespace statekit {
namespace {

std::string describe(const std::vector<FrameViolation>& v) {
  std::ostringstream os;
  os << v.size() << " frame violation(s)";
  const std::size_t shown = std::min<std::size_t>(v.size(), 5);
  for (std::size_t i = 0; i < shown; ++i) {
    os << "; " << to_string(v[i].code);
    if (v[i].unit_index != kFrameLevel) os << " at unit " << v[i].unit_index;
    if (!v[i].detail.empty()) os << " (" << v[i].detail << ")";
  }
  if (shown < v.size()) os << "; ...";
  return os.str();
}

void check_groups(std::size_t n_treated, std::size_t n_control,
                  std::vector<FrameViolation>& out) {
  if (n_treated < 2) {
    out.push_back({ErrorCode::DegenerateGroup, kFrameLevel,
                   "treated group has " + std::to_string(n_treated) + " unit(s)"});
  }
  if (n_control < 2) {
    out.push_back({ErrorCode::DegenerateGroup, kFrameLevel,
                   "control group has " + std::to_string(n_control) + " unit(s)"});
  }
}

}  // namespace

MetricSpec MetricSpec::count(std::string numerator) {
  return {MetricKind::Count, std::move(numerator), std::nullopt};
}

MetricSpec MetricSpec::ratio(std::string numerator, std::string denominator) {
  return {MetricKind::Ratio, std::move(numerator), std::move(denominator)};
}

void MetricSpec::check() const {
  if (kind == MetricKind::Ratio && !denominator) {
    throw Error(ErrorCode::InvalidConfig, "ratio metric requires a denominator column");
  }
  if (kind == MetricKind::Count && denominator) {
    throw Error(ErrorCode::InvalidConfig, "count metric must not declare a denominator");
  }
}

ValidationError::ValidationError(std::vector<FrameViolation> violations)
    : Error(violations.empty() ? ErrorCode::InvalidConfig : violations.front().code,
            describe(violations)),
      violations_(std::move(violations)) {}

std::vector<FrameViolation> validate_frame(std::span<const Unit> units) {
  std::vector<FrameViolation> out;
  std::size_t n_treated = 0, n_control = 0;
  const std::size_t dim = units.empty() ? 0 : units.front().covariates.size();
  const bool with_z = !units.empty() && units.front().z.has_value();
  for (std::size_t i = 0; i < units.size(); ++i) {
    const Unit& u = units[i];
    if (u.treatment == 1.0) {
      ++n_treated;
    } else if (u.treatment == 0.0) {
      ++n_control;
    } else {
      out.push_back({ErrorCode::NonBinaryTreatment, i, "treatment must be 0 or 1"});
    }
    if (u.covariates.size() != dim) {
      out.push_back({ErrorCode::RaggedCovariates, i,
                     "expected " + std::to_string(dim) + " covariates, got " +
                         std::to_string(u.covariates.size())});
    }
    bool finite = std::isfinite(u.y);
    for (double c : u.covariates) finite = finite && std::isfinite(c);
    if (u.z.has_value() != with_z) {
      out.push_back({ErrorCode::NonFiniteValue, i, "denominator present on some units only"});
    } else if (u.z && !std::isfinite(*u.z)) {
      finite = false;
    }
    if (!finite) out.push_back({ErrorCode::NonFiniteValue, i, "non-finite value"});
  }
  check_groups(n_treated, n_control, out);
  return out;
}

ExperimentFrame ExperimentFrame::from_units(std::span<const Unit> units) {
  if (auto v = validate_frame(units); !v.empty()) throw ValidationError(std::move(v));
  const std::size_t dim = units.front().covariates.size();
  std::vector<double> cov;
  cov.reserve(units.size() * dim);
  std::vector<double> t, y;
  t.reserve(units.size());
  y.reserve(units.size());
  std::optional<std::vector<double>> z;
  if (units.front().z) z.emplace().reserve(units.size());
  for (const Unit& u : units) {
    cov.insert(cov.end(), u.covariates.begin(), u.covariates.end());
    t.push_back(u.treatment);
    y.push_back(u.y);
    if (z) z->push_back(*u.z);
  }
  return from_columns(dim, std::move(cov), std::move(t), std::move(y), std::move(z));
}

ExperimentFrame ExperimentFrame::from_columns(std::size_t dim, std::vector<double> covariates,
                                              std::vector<double> treatment,
                                              std::vector<double> y,
                                              std::optional<std::vector<double>> z) {
  std::vector<FrameViolation> out;
  const std::size_t n = y.size();
  if (treatment.size() != n || (z && z->size() != n)) {
    throw Error(ErrorCode::InvalidConfig, "column lengths differ");
  }
  if (covariates.size() != n * dim) {
    out.push_back({ErrorCode::RaggedCovariates, kFrameLevel,
                   "covariate storage does not match units x dim"});
    throw ValidationError(std::move(out));
  }
  std::size_t n_treated = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (treatment[i] == 1.0) {
      ++n_treated;
    } else if (treatment[i] != 0.0) {
      out.push_back({ErrorCode::NonBinaryTreatment, i, "treatment must be 0 or 1"});
    }
    bool finite = std::isfinite(y[i]) && (!z || std::isfinite((*z)[i]));
    for (std::size_t j = 0; j < dim; ++j) finite = finite && std::isfinite(covariates[i * dim + j]);
    if (!finite) out.push_back({ErrorCode::NonFiniteValue, i, "non-finite value"});
  }
  std::size_t binary = 0;
  for (double t : treatment) binary += (t == 0.0 || t == 1.0);
  check_groups(n_treated, binary - n_treated, out);
  if (!out.empty()) throw ValidationError(std::move(out));

  ExperimentFrame f;
  f.dim_ = dim;
  f.n_treated_ = n_treated;
  f.covariates_ = std::move(covariates);
  f.treatment_ = std::move(treatment);
  f.y_ = std::move(y);
  f.z_ = std::move(z);
  return f;
}

std::span<const double> ExperimentFrame::z() const {
  if (!z_) throw Error(ErrorCode::InvalidConfig, "frame has no denominator column");
  return *z_;
}

std::vector<double> ExperimentFrame::covariate_column(std::size_t j) const {
  if (j >= dim_) throw Error(ErrorCode::InvalidConfig, "covariate index out of range");
  std::vector<double> col(size());
  for (std::size_t i = 0; i < size(); ++i) col[i] = covariates_[i * dim_ + j];
  return col;
}

Unit ExperimentFrame::unit(std::size_t i) const {
  const auto c = covariates_of(i);
  Unit u{std::vector<double>(c.begin(), c.end()), treatment_[i], y_[i], std::nullopt};
  if (z_) u.z = (*z_)[i];
  return u;
}

ExperimentFrame ExperimentFrame::with_outcomes(std::vector<double> y,
                                               std::optional<std::vector<double>> z) const {
  return from_columns(dim_, covariates_, treatment_, std::move(y), std::move(z));
}

ExperimentFrame ExperimentFrame::with_treatment(std::vector<double> treatment) const {
  return from_columns(dim_, covariates_, std::move(treatment), y_, z_);
}

ExperimentFrame ExperimentFrame::subset(std::span<const std::size_t> indices) const {
  std::vector<double> cov, t, y;
  cov.reserve(indices.size() * dim_);
  t.reserve(indices.size());
  y.reserve(indices.size());
  std::optional<std::vector<double>> z;
  if (z_) z.emplace().reserve(indices.size());
  for (std::size_t i : indices) {
    const auto c = covariates_of(i);
    cov.insert(cov.end(), c.begin(), c.end());
    t.push_back(treatment_[i]);
    y.push_back(y_[i]);
    if (z) z->push_back((*z_)[i]);
  }
  return from_columns(dim_, std::move(cov), std::move(t), std::move(y), std::move(z));
}

Moments column_moments(std::span<const double> values) {
  Moments m;
  m.n = values.size();
  if (m.n == 0) return m;
  m.mean = simd::sum(values) / static_cast<double>(m.n);
  if (m.n > 1) m.variance = simd::sum_sq_dev(values, m.mean) / static_cast<double>(m.n - 1);
  return m;
}

Moments arm_moments(std::span<const double> values, std::span<const double> treatment,
                    bool treated) {
  std::vector<double> buf;
  buf.reserve(values.size());
  const double want = treated ? 1.0 : 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (treatment[i] == want) buf.push_back(values[i]);
  }
  return column_moments(buf);
}

namespace {

GroupStats arm_stats(const ExperimentFrame& frame, bool ratio, bool treated) {
  const double want = treated ? 1.0 : 0.0;
  const auto t = frame.treatment();
  std::vector<double> y, z;
  y.reserve(frame.size());
  if (ratio) z.reserve(frame.size());
  for (std::size_t i = 0; i < frame.size(); ++i) {
    if (t[i] != want) continue;
    y.push_back(frame.y()[i]);
    if (ratio) z.push_back(frame.z()[i]);
  }
  GroupStats g;
  g.y = column_moments(y);
  if (ratio) {
    g.z = column_moments(z);
    std::vector<double> prod(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) prod[i] = (y[i] - g.y.mean) * (z[i] - g.z->mean);
    g.cov_yz = simd::sum(prod) / static_cast<double>(y.size() - 1);
  }
  return g;
}

}  // namespace

GroupSplit group_means(const ExperimentFrame& frame, const MetricSpec& spec) {
  spec.check();
  const bool ratio = spec.kind == MetricKind::Ratio;
  if (ratio && !frame.has_z()) {
    throw Error(ErrorCode::InvalidConfig, "ratio metric on a frame without denominator");
  }
  return {arm_stats(frame, ratio, true), arm_stats(frame, ratio, false)};
}

}  // namespace statekit
