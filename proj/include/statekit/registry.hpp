#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "statekit/data_model.hpp"
#include "statekit/estimators.hpp"
#include "statekit/inference.hpp"
#include "statekit/predictors.hpp"
#include "statekit/ratio_transform.hpp"
#include "statekit/state_em.hpp"

namespace statekit {

struct EstimatorOptions {
  double winsor_percentile = 0.99;
  bool winsor_two_sided = false;
  HuberConfig huber;
  EmConfig em;
  double alpha = kDefaultAlpha;
};

/// What one estimator needs beyond the frame.
struct EstimatorNeeds {
  bool proxy_y = false;
  bool proxy_p = false;
  bool covariate = false;
  MetricKind metric = MetricKind::Count;
};

const std::vector<std::string>& registered_estimators();
bool is_registered(std::string_view tag);

/// Throws InvalidConfig for an unknown tag.
EstimatorNeeds needs_of(std::string_view tag);

/// Baseline every variance reduction is measured against.
std::string_view baseline_for(MetricKind metric);

/// Throws InvalidConfig unless every tag is registered and matches `metric`.
void check_estimators(std::span<const std::string> tags, MetricKind metric);

struct EstimatorInputs {
  const ExperimentFrame* frame = nullptr;
  const ProxyColumn* proxy_y = nullptr;
  const ProxyColumn* proxy_p = nullptr;
  const RatioTransform* transform = nullptr;  // built on demand when null
  std::span<const double> covariate;
  const EstimatorOptions* options = nullptr;
};

AteReport run_estimator(std::string_view tag, const EstimatorInputs& inputs);

}  // namespace statekit
