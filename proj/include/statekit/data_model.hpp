#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "statekit/error.hpp"

namespace statekit {

/// One randomized unit as ingested. `z` is present only for ratio metrics.
struct Unit {
  std::vector<double> covariates;
  double treatment = 0.0;
  double y = 0.0;
  std::optional<double> z;
};

enum class MetricKind { Count, Ratio };

struct MetricSpec {
  MetricKind kind = MetricKind::Count;
  std::string numerator = "y";
  std::optional<std::string> denominator;

  static MetricSpec count(std::string numerator = "y");
  static MetricSpec ratio(std::string numerator = "y", std::string denominator = "z");

  /// Throws InvalidConfig unless the denominator is present iff kind is Ratio.
  void check() const;
};

inline constexpr std::size_t kFrameLevel = static_cast<std::size_t>(-1);

struct FrameViolation {
  ErrorCode code;
  std::size_t unit_index;  // kFrameLevel for group-size violations
  std::string detail;
};

/// Thrown when a frame cannot be constructed; carries every violation found.
class ValidationError : public Error {
 public:
  explicit ValidationError(std::vector<FrameViolation> violations);
  const std::vector<FrameViolation>& violations() const noexcept { return violations_; }

 private:
  std::vector<FrameViolation> violations_;
};

/// Returns all invariant violations of a record-level frame; empty means valid.
std::vector<FrameViolation> validate_frame(std::span<const Unit> units);

/// Column-major experiment data. Instances always satisfy the frame
/// invariants: construction validates and throws ValidationError otherwise.
/// Immutable afterwards, so concurrent readers need no synchronization.
class ExperimentFrame {
 public:
  static ExperimentFrame from_units(std::span<const Unit> units);

  /// `covariates` is row-major with `dim` entries per unit.
  static ExperimentFrame from_columns(std::size_t dim, std::vector<double> covariates,
                                      std::vector<double> treatment, std::vector<double> y,
                                      std::optional<std::vector<double>> z = std::nullopt);

  std::size_t size() const noexcept { return y_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t n_treated() const noexcept { return n_treated_; }
  std::size_t n_control() const noexcept { return size() - n_treated_; }
  bool has_z() const noexcept { return z_.has_value(); }

  std::span<const double> treatment() const noexcept { return treatment_; }
  std::span<const double> y() const noexcept { return y_; }
  std::span<const double> z() const;
  std::span<const double> covariates() const noexcept { return covariates_; }
  std::span<const double> covariates_of(std::size_t i) const {
    return std::span<const double>(covariates_).subspan(i * dim_, dim_);
  }
  std::vector<double> covariate_column(std::size_t j) const;

  Unit unit(std::size_t i) const;

  ExperimentFrame with_outcomes(std::vector<double> y,
                                std::optional<std::vector<double>> z) const;
  ExperimentFrame with_treatment(std::vector<double> treatment) const;
  ExperimentFrame subset(std::span<const std::size_t> indices) const;

 private:
  ExperimentFrame() = default;

  std::size_t dim_ = 0;
  std::size_t n_treated_ = 0;
  std::vector<double> covariates_;
  std::vector<double> treatment_;
  std::vector<double> y_;
  std::optional<std::vector<double>> z_;
};

/// Sample mean and unbiased sample variance.
struct Moments {
  double mean = 0.0;
  double variance = 0.0;
  std::size_t n = 0;
};

struct GroupStats {
  Moments y;
  std::optional<Moments> z;
  double cov_yz = 0.0;  // sample covariance of (y, z); 0 for count metrics
};

struct GroupSplit {
  GroupStats treated;
  GroupStats control;
};

/// Per-group moments of the metric columns using compensated sums.
GroupSplit group_means(const ExperimentFrame& frame, const MetricSpec& spec);

/// Moments of an arbitrary column restricted to one treatment arm.
Moments arm_moments(std::span<const double> values, std::span<const double> treatment,
                    bool treated);

/// Moments of a whole column.
Moments column_moments(std::span<const double> values);

}  // namespace statekit
